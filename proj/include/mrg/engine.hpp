#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "mrg/errors.hpp"
#include "mrg/fixed.hpp"
#include "mrg/grid.hpp"
#include "mrg/record.hpp"
#include "mrg/rules.hpp"
#include "mrg/variance.hpp"
#include "mrg/version.hpp"

namespace mrg {

// Running statistics of one variable within one cell. Totals are exact
// micro-unit sums, so merging children into a parent preserves them bit
// for bit; the top-two pairs of a union are found among the unions of the
// children's top-two pairs.
struct VarAcc {
  Fixed total;
  TopTwo top;
  std::vector<StratumCellAcc> strata;  // filled only when reliability runs
};

namespace detail {

inline void add_stratum(std::vector<StratumCellAcc>& accs,
                        std::uint32_t stratum, double x) {
  auto it = std::lower_bound(
      accs.begin(), accs.end(), stratum,
      [](const StratumCellAcc& a, std::uint32_t s) { return a.stratum < s; });
  if (it == accs.end() || it->stratum != stratum) {
    it = accs.insert(it, StratumCellAcc{stratum, 0, 0.0, 0.0});
  }
  ++it->n_in;
  it->sum_x += x;
  it->sum_x2 += x * x;
}

inline void merge_strata(std::vector<StratumCellAcc>& into,
                         const std::vector<StratumCellAcc>& from) {
  std::vector<StratumCellAcc> merged;
  merged.reserve(into.size() + from.size());
  auto a = into.begin();
  auto b = from.begin();
  while (a != into.end() || b != from.end()) {
    if (b == from.end() || (a != into.end() && a->stratum < b->stratum)) {
      merged.push_back(*a++);
    } else if (a == into.end() || b->stratum < a->stratum) {
      merged.push_back(*b++);
    } else {
      StratumCellAcc m = *a++;
      m.n_in += b->n_in;
      m.sum_x += b->sum_x;
      m.sum_x2 += b->sum_x2;
      merged.push_back(m);
      ++b;
    }
  }
  into = std::move(merged);
}

}  // namespace detail

// Running statistics of one cell: everything the rules need, mergeable so
// that a parent's statistics are exactly the sum over all its records.
struct CellAcc {
  std::int64_t record_count = 0;
  Fixed weight_sum;
  std::vector<VarAcc> vars;
  // Per-stratum holding counts, kept only for count-only grids under the
  // reliability rule (the count itself is then the estimated statistic).
  std::vector<StratumCellAcc> count_strata;

  void add_record(const Dataset& d, std::size_t i, bool with_strata) {
    const Record& r = d.records[i];
    ++record_count;
    weight_sum += r.weight;
    if (vars.size() != d.var_count()) vars.resize(d.var_count());
    for (std::size_t k = 0; k < d.var_count(); ++k) {
      const Fixed x = d.value(i, k);
      vars[k].total += Fixed::mul(r.weight, x);
      vars[k].top.add(x, r.weight);
      if (with_strata) {
        detail::add_stratum(vars[k].strata, r.stratum, x.to_double());
      }
    }
    if (with_strata && d.var_count() == 0) {
      detail::add_stratum(count_strata, r.stratum, 1.0);
    }
  }

  void merge(const CellAcc& o) {
    record_count += o.record_count;
    weight_sum += o.weight_sum;
    if (vars.size() < o.vars.size()) vars.resize(o.vars.size());
    for (std::size_t k = 0; k < o.vars.size(); ++k) {
      vars[k].total += o.vars[k].total;
      vars[k].top.merge(o.vars[k].top);
      detail::merge_strata(vars[k].strata, o.vars[k].strata);
    }
    detail::merge_strata(count_strata, o.count_strata);
  }
};

// Evaluates the disclosure rules on cell accumulators, computing the
// variance estimates on demand when the reliability rule is enabled.
class Evaluator {
 public:
  Evaluator(const RuleConfig& rules, const std::vector<StratumInfo>& strata,
            std::size_t var_count, UserRule user_rule = {})
      : rules_(rules),
        strata_(strata),
        var_count_(var_count),
        user_rule_(std::move(user_rule)) {}

  RuleVerdict operator()(const CellAcc& acc) const {
    CellStats s;
    s.weighted_count = acc.weight_sum;
    s.record_count = acc.record_count;
    s.vars.resize(var_count_);
    std::vector<CellEstimate> estimates;
    estimates.reserve(var_count_ + 1);
    for (std::size_t k = 0; k < var_count_; ++k) {
      if (k < acc.vars.size()) {
        s.vars[k].total = acc.vars[k].total;
        s.vars[k].top = acc.vars[k].top;
      }
      if (rules_.reliability_enabled) {
        CellEstimate est;
        est.total = s.vars[k].total.to_double();
        est.record_count = acc.record_count;
        if (k < acc.vars.size()) {
          accumulate_variance(acc.vars[k].strata, strata_, est);
        }
        estimates.push_back(est);
        s.vars[k].estimate = &estimates.back();
      }
    }
    CellEstimate count_est;
    if (rules_.reliability_enabled && var_count_ == 0) {
      count_est.total = acc.weight_sum.to_double();
      count_est.record_count = acc.record_count;
      accumulate_variance(acc.count_strata, strata_, count_est);
      s.count_estimate = &count_est;
    }
    return evaluate_cell(s, rules_, user_rule_);
  }

 private:
  const RuleConfig& rules_;
  const std::vector<StratumInfo>& strata_;
  std::size_t var_count_;
  UserRule user_rule_;
};

// One disclosed (or suppressed) cell of the final mixed-resolution grid.
struct MRGCell {
  CellId id;
  CellAcc acc;
  RuleVerdict verdict;
  bool exempt = false;   // frozen failing because its parent share was small
  bool blocked = false;  // frozen because finer frozen cells block its parent
  // Filled by post-processing:
  bool suppressed = false;
  bool warning = false;
  std::int64_t count_disclosed = 0;
  std::vector<std::int64_t> vars_disclosed;
};

struct MRGrid {
  GridSpec spec;
  RuleConfig rules;
  std::vector<std::string> variables;
  std::vector<MRGCell> cells;  // sorted by CellId
  bool post_processed = false;
  // Run provenance:
  std::uint64_t seed = 0;
  std::string input_digest;
  std::string version = kVersion;

  explicit MRGrid(GridSpec s) : spec(std::move(s)) {}

  const MRGCell* find(const CellId& id) const {
    auto it = std::lower_bound(
        cells.begin(), cells.end(), id,
        [](const MRGCell& c, const CellId& i) { return c.id < i; });
    return it != cells.end() && it->id == id ? &*it : nullptr;
  }
};

// Aggregates records into the populated cells of one resolution level.
inline std::map<CellId, CellAcc> build_base_grid(const Dataset& d,
                                                 const GridSpec& spec,
                                                 int level,
                                                 bool with_strata) {
  std::map<CellId, CellAcc> cells;
  for (std::size_t i = 0; i < d.records.size(); ++i) {
    cells[spec.cell_of(d.records[i].xy, level)].add_record(d, i, with_strata);
  }
  return cells;
}

namespace detail {

// The quantity suppresslim shares are measured against: the first
// variable's weighted total, or the weighted holding count when the grid
// carries no variable.
inline Fixed share_value(const CellAcc& acc) {
  return acc.vars.empty() ? acc.weight_sum : acc.vars[0].total;
}

}  // namespace detail

/**
 * Builds the multi-resolution grid: starting from the populated finest
 * cells, repeatedly merges every sibling block containing at least one
 * failing child into its parent cell, one resolution level per iteration.
 *
 * Exceptions:
 *  - a failing child whose share of the would-be parent value stays below
 *    suppresslim is left at its fine level (to be suppressed later) and
 *    does not force the block to merge;
 *  - a parent whose extent already contains frozen finer cells can never
 *    merge (cell extents must stay disjoint), so its remaining active
 *    children freeze in place, keeping their verdicts.
 *
 * Cells that still fail after the coarsest level keep their verdicts for
 * the suppression step. Totals are exact sums; nothing is rounded here.
 */
inline MRGrid multi_res_grid(const Dataset& d, const GridSpec& spec,
                             const RuleConfig& rules,
                             const UserRule& user_rule = {}) {
  rules.validate();
  MRGrid grid(spec);
  grid.rules = rules;
  grid.variables = d.variables;

  const Evaluator evaluate(rules, d.strata_info, d.var_count(), user_rule);
  std::map<CellId, CellAcc> actives =
      build_base_grid(d, spec, 0, rules.reliability_enabled);
  std::set<CellId> blocked_parents;

  auto run_evaluate = [&](const CellId& id, const CellAcc& acc) {
    try {
      return evaluate(acc);
    } catch (const UserRuleError& e) {
      throw UserRuleError(std::string(e.what()) + " in cell " +
                          spec.cell_name(id));
    }
  };

  auto freeze = [&](CellId id, CellAcc&& acc, RuleVerdict&& verdict,
                    bool exempt, bool blocked) {
    for (CellId a = id; a.level + 1 < spec.levels();) {
      a = spec.parent_of(a);
      blocked_parents.insert(a);
    }
    MRGCell cell;
    cell.id = id;
    cell.acc = std::move(acc);
    cell.verdict = std::move(verdict);
    cell.exempt = exempt;
    cell.blocked = blocked;
    grid.cells.push_back(std::move(cell));
  };

  for (int level = 1; level < spec.levels(); ++level) {
    // Group the active cells (all at level - 1) by their parent.
    std::map<CellId, std::vector<std::map<CellId, CellAcc>::iterator>> groups;
    for (auto it = actives.begin(); it != actives.end(); ++it) {
      groups[spec.parent_of(it->first)].push_back(it);
    }

    std::map<CellId, CellAcc> next;
    for (auto& [parent, children] : groups) {
      if (blocked_parents.contains(parent)) {
        for (auto it : children) {
          RuleVerdict v = run_evaluate(it->first, it->second);
          freeze(it->first, std::move(it->second), std::move(v), false, true);
        }
        continue;
      }

      CellAcc parent_acc;
      for (auto it : children) parent_acc.merge(it->second);
      const Fixed parent_value = detail::share_value(parent_acc);

      std::vector<RuleVerdict> verdicts;
      std::vector<bool> exempts;
      verdicts.reserve(children.size());
      bool any_blocking_failure = false;
      for (auto it : children) {
        RuleVerdict v = run_evaluate(it->first, it->second);
        bool exempt = false;
        if (v.failed()) {
          exempt = ratio_less(detail::share_value(it->second), parent_value,
                              rules.suppresslim);
          if (!exempt) any_blocking_failure = true;
        }
        verdicts.push_back(std::move(v));
        exempts.push_back(exempt);
      }

      if (any_blocking_failure) {
        next.emplace(parent, std::move(parent_acc));
      } else {
        for (std::size_t i = 0; i < children.size(); ++i) {
          freeze(children[i]->first, std::move(children[i]->second),
                 std::move(verdicts[i]), exempts[i], false);
        }
      }
    }
    actives = std::move(next);
  }

  for (auto& [id, acc] : actives) {
    RuleVerdict v = run_evaluate(id, acc);
    freeze(id, std::move(acc), std::move(v), false, false);
  }

  std::sort(grid.cells.begin(), grid.cells.end(),
            [](const MRGCell& a, const MRGCell& b) { return a.id < b.id; });
  return grid;
}

/**
 * Aggregates one further variable onto an existing grid's geometry. Cells
 * never re-aggregate: where the new variable violates the rules the cell
 * is marked failing (suppressed downstream), and cells already failing
 * stay failing. Only the new variable and the threshold are evaluated;
 * the published geometry and holding counts are kept as they are.
 */
inline MRGrid grid_to_match(const MRGrid& existing, const Dataset& d,
                            std::size_t var, const RuleConfig& rules) {
  if (var >= d.var_count()) {
    throw EngineError("variable index out of range");
  }
  rules.validate();

  std::map<CellId, std::size_t> index;
  std::set<int> levels;
  for (std::size_t i = 0; i < existing.cells.size(); ++i) {
    index.emplace(existing.cells[i].id, i);
    levels.insert(existing.cells[i].id.level);
  }

  // Fresh per-cell statistics of the new variable (single-variable layout).
  Dataset narrow;
  narrow.records = d.records;
  narrow.variables = {d.variables[var]};
  narrow.values.resize(d.records.size());
  for (std::size_t i = 0; i < d.records.size(); ++i) {
    narrow.values[i] = d.value(i, var);
  }
  narrow.strata = d.strata;
  narrow.strata_info = d.strata_info;

  std::map<std::size_t, CellAcc> fresh;
  for (std::size_t i = 0; i < narrow.records.size(); ++i) {
    bool placed = false;
    for (int level : levels) {
      const CellId id = existing.spec.cell_of(narrow.records[i].xy, level);
      auto it = index.find(id);
      if (it != index.end()) {
        fresh[it->second].add_record(narrow, i, rules.reliability_enabled);
        placed = true;
        break;
      }
    }
    if (!placed) {
      throw SpecMismatch("record " + narrow.records[i].id +
                         " lies outside every cell of the existing grid");
    }
  }

  MRGrid out = existing;
  out.rules = rules;
  out.post_processed = false;
  const auto existing_var =
      std::find(out.variables.begin(), out.variables.end(), d.variables[var]);
  const std::size_t slot = existing_var - out.variables.begin();
  if (existing_var == out.variables.end()) {
    out.variables.push_back(d.variables[var]);
  }

  const Evaluator evaluate(rules, narrow.strata_info, 1);
  for (std::size_t i = 0; i < out.cells.size(); ++i) {
    MRGCell& cell = out.cells[i];
    CellAcc acc;  // empty when no record of the new data lands here
    if (auto it = fresh.find(i); it != fresh.end()) acc = std::move(it->second);
    if (acc.vars.empty()) acc.vars.resize(1);

    const bool sticky_fail = cell.verdict.failed() || cell.suppressed;
    RuleVerdict v = evaluate(acc);
    if (sticky_fail) {
      v.outcome = Outcome::fail;
      if (cell.verdict.failed()) {
        v.failed_rule = cell.verdict.failed_rule;
        v.failed_variable = cell.verdict.failed_variable;
      }
    } else if (!v.failed() &&
               (cell.verdict.warned() || v.warned())) {
      v.outcome = Outcome::pass_with_warning;
    }

    if (cell.acc.vars.size() < out.variables.size()) {
      cell.acc.vars.resize(out.variables.size());
    }
    cell.acc.vars[slot] = std::move(acc.vars[0]);
    cell.verdict = std::move(v);
    cell.suppressed = false;
    cell.warning = false;
    cell.count_disclosed = 0;
    cell.vars_disclosed.clear();
  }
  return out;
}

}  // namespace mrg
