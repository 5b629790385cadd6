#pragma once

// Independent reference implementation of the multi-resolution gridding,
// used to cross-check the production engine. Deliberately written the
// opposite way around: top-down recursion over cell extents, with every
// cell's statistics recomputed from the raw records instead of merged
// from child accumulators.

#include <algorithm>
#include <functional>
#include <map>
#include <set>
#include <vector>

#include "mrg/fixed.hpp"
#include "mrg/grid.hpp"
#include "mrg/record.hpp"
#include "mrg/rules.hpp"
#include "mrg/variance.hpp"

namespace oracle {

struct Cell {
  mrg::CellId id;
  std::int64_t record_count = 0;
  mrg::Fixed weight_sum;
  std::vector<mrg::Fixed> totals;
  mrg::RuleVerdict verdict;
};

class Reference {
 public:
  Reference(const mrg::Dataset& d, const mrg::GridSpec& spec,
            const mrg::RuleConfig& rules)
      : d_(d), spec_(spec), rules_(rules) {}

  std::vector<Cell> run() const {
    std::set<mrg::CellId> tops;
    for (const mrg::Record& r : d_.records) {
      tops.insert(spec_.cell_of(r.xy, spec_.levels() - 1));
    }
    std::vector<Cell> out;
    for (const mrg::CellId& top : tops) descend(top, out);
    std::sort(out.begin(), out.end(),
              [](const Cell& a, const Cell& b) { return a.id < b.id; });
    return out;
  }

 private:
  std::vector<std::size_t> records_of(const mrg::CellId& id) const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < d_.records.size(); ++i) {
      if (spec_.cell_of(d_.records[i].xy, id.level) == id) idx.push_back(i);
    }
    return idx;
  }

  mrg::CellStats stats_of(const std::vector<std::size_t>& members,
                          std::vector<mrg::CellEstimate>& est_store) const {
    mrg::CellStats s;
    s.vars.resize(d_.var_count());
    std::vector<std::vector<mrg::StratumCellAcc>> strata(d_.var_count());
    std::vector<mrg::StratumCellAcc> count_strata;
    for (std::size_t i : members) {
      const mrg::Record& r = d_.records[i];
      s.weighted_count += r.weight;
      ++s.record_count;
      for (std::size_t k = 0; k < d_.var_count(); ++k) {
        const mrg::Fixed x = d_.value(i, k);
        s.vars[k].total += mrg::Fixed::mul(r.weight, x);
        s.vars[k].top.add(x, r.weight);
        if (rules_.reliability_enabled) {
          bump(strata[k], r.stratum, x.to_double());
        }
      }
      if (rules_.reliability_enabled && d_.var_count() == 0) {
        bump(count_strata, r.stratum, 1.0);
      }
    }
    if (rules_.reliability_enabled) {
      est_store.reserve(d_.var_count() + 1);
      for (std::size_t k = 0; k < d_.var_count(); ++k) {
        mrg::CellEstimate est;
        est.total = s.vars[k].total.to_double();
        est.record_count = s.record_count;
        mrg::accumulate_variance(strata[k], d_.strata_info, est);
        est_store.push_back(est);
        s.vars[k].estimate = &est_store.back();
      }
      if (d_.var_count() == 0) {
        mrg::CellEstimate est;
        est.total = s.weighted_count.to_double();
        est.record_count = s.record_count;
        mrg::accumulate_variance(count_strata, d_.strata_info, est);
        est_store.push_back(est);
        s.count_estimate = &est_store.back();
      }
    }
    return s;
  }

  static void bump(std::vector<mrg::StratumCellAcc>& accs,
                   std::uint32_t stratum, double x) {
    for (mrg::StratumCellAcc& a : accs) {
      if (a.stratum == stratum) {
        ++a.n_in;
        a.sum_x += x;
        a.sum_x2 += x * x;
        return;
      }
    }
    accs.push_back({stratum, 1, x, x * x});
  }

  mrg::RuleVerdict verdict_of(const std::vector<std::size_t>& members) const {
    std::vector<mrg::CellEstimate> est_store;
    const mrg::CellStats s = stats_of(members, est_store);
    return mrg::evaluate_cell(s, rules_);
  }

  static mrg::Fixed share_value(const mrg::CellStats& s) {
    return s.vars.empty() ? s.weighted_count : s.vars[0].total;
  }

  std::vector<mrg::CellId> populated_children(const mrg::CellId& id) const {
    std::vector<mrg::CellId> out;
    for (const mrg::CellId& c : spec_.children_of(id)) {
      if (!records_of(c).empty()) out.push_back(c);
    }
    return out;
  }

  // A cell "forms" when the bottom-up coarsening would have produced it:
  // every populated child must itself have formed, and at least one of
  // them must fail the rules without being share-exempt.
  bool formed(const mrg::CellId& id) const {
    if (id.level == 0) return true;
    const auto children = populated_children(id);
    for (const mrg::CellId& c : children) {
      if (!formed(c)) return false;
    }
    std::vector<mrg::CellEstimate> scratch;
    const mrg::Fixed parent_value =
        share_value(stats_of(records_of(id), scratch));
    for (const mrg::CellId& c : children) {
      const auto members = records_of(c);
      if (!verdict_of(members).failed()) continue;
      std::vector<mrg::CellEstimate> scratch2;
      const mrg::Fixed child_value = share_value(stats_of(members, scratch2));
      if (!mrg::ratio_less(child_value, parent_value, rules_.suppresslim)) {
        return true;
      }
    }
    return false;
  }

  void descend(const mrg::CellId& id, std::vector<Cell>& out) const {
    if (formed(id)) {
      const auto members = records_of(id);
      Cell cell;
      cell.id = id;
      std::vector<mrg::CellEstimate> scratch;
      const mrg::CellStats s = stats_of(members, scratch);
      cell.record_count = s.record_count;
      cell.weight_sum = s.weighted_count;
      for (const auto& v : s.vars) cell.totals.push_back(v.total);
      cell.verdict = mrg::evaluate_cell(s, rules_);
      out.push_back(std::move(cell));
      return;
    }
    for (const mrg::CellId& c : populated_children(id)) descend(c, out);
  }

  const mrg::Dataset& d_;
  const mrg::GridSpec& spec_;
  const mrg::RuleConfig& rules_;
};

}  // namespace oracle
