#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mrg/errors.hpp"
#include "mrg/fixed.hpp"
#include "mrg/variance.hpp"

namespace mrg {

// Two largest values of one variable within one cell, with the weights of
// the records holding them. Ordered by value, then weight, descending, so
// the result depends only on the multiset of (value, weight) pairs; among
// equal top values the heavier record is kept, which is the conservative
// choice for the dominance check.
struct TopTwo {
  bool has1 = false;
  bool has2 = false;
  Fixed x1, w1;
  Fixed x2, w2;

  static bool ranks_before(Fixed x_a, Fixed w_a, Fixed x_b, Fixed w_b) {
    if (x_a != x_b) return x_a > x_b;
    return w_a > w_b;
  }

  void add(Fixed x, Fixed w) {
    if (!has1 || ranks_before(x, w, x1, w1)) {
      x2 = x1;
      w2 = w1;
      has2 = has1;
      x1 = x;
      w1 = w;
      has1 = true;
    } else if (!has2 || ranks_before(x, w, x2, w2)) {
      x2 = x;
      w2 = w;
      has2 = true;
    }
  }

  void merge(const TopTwo& o) {
    if (o.has1) add(o.x1, o.w1);
    if (o.has2) add(o.x2, o.w2);
  }
};

// Everything the rules need to know about one variable in one cell.
struct VarStats {
  Fixed total;  // X = sum of w_j * x_j
  TopTwo top;
  const CellEstimate* estimate = nullptr;  // present when reliability runs
};

// Everything the rules need to know about one cell.
struct CellStats {
  Fixed weighted_count;  // W_l = sum of w_j
  std::int64_t record_count = 0;
  std::vector<VarStats> vars;
  // Used for count-only grids, where the holding count itself is the
  // published statistic that reliability must certify.
  const CellEstimate* count_estimate = nullptr;
};

enum class Confrules { individual, first_only };

struct RuleConfig {
  Fixed mincount = Fixed::from_units(10);
  Fixed dominance_weight_floor = Fixed::from_units(2);
  Fixed dominance_share = Fixed::from_double(0.85);
  double cv_fail = 0.35;
  double cv_warn = 0.25;
  bool reliability_enabled = false;
  Confrules confrules = Confrules::individual;
  std::int64_t rounding_base = 10;
  Fixed suppresslim;  // share in [0, 1); 0 disables exemptions

  void validate() const {
    if (mincount.negative()) {
      throw ConfigError("mincount must be non-negative");
    }
    if (dominance_share <= Fixed{} ||
        dominance_share > Fixed::from_units(1)) {
      throw ConfigError("dominance_share must lie in (0, 1]");
    }
    if (cv_warn > cv_fail) {
      throw ConfigError("cv_warn must not exceed cv_fail");
    }
    if (cv_warn < 0.0) {
      throw ConfigError("cv_warn must be non-negative");
    }
    if (rounding_base < 1) {
      throw ConfigError("rounding_base must be at least 1");
    }
    if (suppresslim.negative() || suppresslim >= Fixed::from_units(1)) {
      throw ConfigError("suppresslim must lie in [0, 1)");
    }
  }
};

enum class Outcome { pass, pass_with_warning, fail };
enum class RuleKind { none, threshold, dominance, reliability, user };

inline const char* to_string(RuleKind k) {
  switch (k) {
    case RuleKind::none: return "none";
    case RuleKind::threshold: return "threshold";
    case RuleKind::dominance: return "dominance";
    case RuleKind::reliability: return "reliability";
    case RuleKind::user: return "user";
  }
  return "unknown";
}

struct RuleDetail {
  RuleKind rule = RuleKind::none;
  int variable = -1;  // index into CellStats::vars, -1 for cell-wide rules
  Outcome outcome = Outcome::pass;
};

struct RuleVerdict {
  Outcome outcome = Outcome::pass;
  RuleKind failed_rule = RuleKind::none;
  int failed_variable = -1;
  std::vector<RuleDetail> details;

  bool failed() const { return outcome == Outcome::fail; }
  bool warned() const { return outcome == Outcome::pass_with_warning; }
};

// A user-supplied extra criterion; true = pass. Must be side-effect free.
using UserRule = std::function<bool(const CellStats&)>;

class UserRuleError : public EngineError {
 public:
  explicit UserRuleError(const std::string& message) : EngineError(message) {}
};

// Rule 1: the weighted holding count must reach the minimum.
inline bool threshold_rule(const CellStats& stats, const RuleConfig& config) {
  return !(stats.weighted_count < config.mincount);
}

// Rules 2 and 3 for one variable. Dominance I passes when the rounded
// weights of the two largest contributors sum to more than the floor
// ("larger than 2 means at least 3"); otherwise Dominance II passes when
// those contributors hold at most the configured share of the total.
inline bool dominance_rule(const VarStats& var, const RuleConfig& config) {
  if (var.total == Fixed{}) return true;  // nothing is being disclosed
  std::int64_t rounded = 0;
  Fixed top_contrib;
  if (var.top.has1) {
    rounded += var.top.w1.round_half_up_units();
    top_contrib += Fixed::mul(var.top.w1, var.top.x1);
  }
  if (var.top.has2) {
    rounded += var.top.w2.round_half_up_units();
    top_contrib += Fixed::mul(var.top.w2, var.top.x2);
  }
  if (Fixed::from_units(rounded) > config.dominance_weight_floor) return true;
  return leq_share(top_contrib, config.dominance_share, var.total);
}

// Rule 4: the coefficient of variation must stay below cv_fail, with a
// warning band above cv_warn. An undefined cv asserts nothing and passes.
inline Outcome reliability_rule(const CellEstimate& est,
                                const RuleConfig& config) {
  if (est.degenerate) return Outcome::fail;
  const std::optional<double> c = cv(est);
  if (!c) return Outcome::pass;
  if (*c >= config.cv_fail) return Outcome::fail;
  if (*c > config.cv_warn) return Outcome::pass_with_warning;
  return Outcome::pass;
}

// Applies the rules in their fixed order: threshold, dominance per variable,
// reliability per variable when enabled, then the user rule. Stops at the
// first failure; warnings accumulate.
inline RuleVerdict evaluate_cell(const CellStats& stats,
                                 const RuleConfig& config,
                                 const UserRule& user_rule = {}) {
  RuleVerdict v;
  auto fail = [&v](RuleKind rule, int var) {
    v.outcome = Outcome::fail;
    v.failed_rule = rule;
    v.failed_variable = var;
    v.details.push_back({rule, var, Outcome::fail});
  };

  if (!threshold_rule(stats, config)) {
    fail(RuleKind::threshold, -1);
    return v;
  }
  v.details.push_back({RuleKind::threshold, -1, Outcome::pass});

  const std::size_t dominance_vars =
      config.confrules == Confrules::first_only && !stats.vars.empty()
          ? 1
          : stats.vars.size();
  for (std::size_t k = 0; k < dominance_vars; ++k) {
    if (!dominance_rule(stats.vars[k], config)) {
      fail(RuleKind::dominance, static_cast<int>(k));
      return v;
    }
    v.details.push_back(
        {RuleKind::dominance, static_cast<int>(k), Outcome::pass});
  }

  if (config.reliability_enabled) {
    auto check = [&](const CellEstimate* est, int var) {
      if (est == nullptr) return true;
      const Outcome o = reliability_rule(*est, config);
      if (o == Outcome::fail) {
        fail(RuleKind::reliability, var);
        return false;
      }
      v.details.push_back({RuleKind::reliability, var, o});
      if (o == Outcome::pass_with_warning) {
        v.outcome = Outcome::pass_with_warning;
      }
      return true;
    };
    if (stats.vars.empty()) {
      if (!check(stats.count_estimate, -1)) return v;
    } else {
      for (std::size_t k = 0; k < stats.vars.size(); ++k) {
        if (!check(stats.vars[k].estimate, static_cast<int>(k))) return v;
      }
    }
  }

  if (user_rule) {
    bool ok;
    try {
      ok = user_rule(stats);
    } catch (const std::exception& e) {
      throw UserRuleError(std::string("user rule raised: ") + e.what());
    }
    if (!ok) {
      fail(RuleKind::user, -1);
      return v;
    }
    v.details.push_back({RuleKind::user, -1, Outcome::pass});
  }
  return v;
}

}  // namespace mrg
