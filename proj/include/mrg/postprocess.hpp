#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "mrg/engine.hpp"
#include "mrg/errors.hpp"
#include "mrg/fixed.hpp"

namespace mrg {

// Nearest multiple of base, ties away from zero. Monotone non-decreasing.
inline std::int64_t round_to_base(Fixed value, std::int64_t base) {
  const __int128 b = static_cast<__int128>(base) * Fixed::kScale;
  const __int128 v = value.micro();
  __int128 q = v / b;
  const __int128 r = v - q * b;
  if (2 * (r >= 0 ? r : -r) >= b) q += (v >= 0 ? 1 : -1);
  return static_cast<std::int64_t>(q) * base;
}

/**
 * Final dissemination step: cells whose verdict failed keep their geometry
 * but disclose nothing; everything else is rounded to the configured base.
 * The exact internal statistics stay on the cell for auditing, so applying
 * the step twice changes nothing.
 */
inline MRGrid post_process(MRGrid grid) {
  for (MRGCell& cell : grid.cells) {
    cell.suppressed = cell.verdict.failed();
    cell.warning = cell.verdict.warned();
    cell.vars_disclosed.assign(grid.variables.size(), 0);
    if (cell.suppressed) {
      cell.count_disclosed = 0;
      continue;
    }
    cell.count_disclosed =
        round_to_base(cell.acc.weight_sum, grid.rules.rounding_base);
    for (std::size_t k = 0; k < grid.variables.size(); ++k) {
      const Fixed total =
          k < cell.acc.vars.size() ? cell.acc.vars[k].total : Fixed{};
      cell.vars_disclosed[k] = round_to_base(total, grid.rules.rounding_base);
    }
  }
  grid.post_processed = true;
  return grid;
}

class VariableMissing : public EngineError {
 public:
  explicit VariableMissing(const std::string& message)
      : EngineError(message) {}
};

struct RatioCell {
  CellId id;
  bool suppressed = false;
  double ratio = 0.0;
  bool flagged = false;  // disclosed ratio above 1, a rounding artifact
};

struct RatioGrid {
  std::string numerator;
  std::string denominator;
  std::vector<RatioCell> cells;  // same order as the source grid
};

// Divides two jointly gridded variables cell by cell, using the rounded
// disclosed values so the published ratio matches the published numbers.
// A cell discloses no ratio when it is suppressed or divides by zero.
inline RatioGrid ratio_grid(const MRGrid& grid, const std::string& numerator,
                            const std::string& denominator) {
  if (!grid.post_processed) {
    throw EngineError("ratio_grid needs a post-processed grid");
  }
  auto index_of = [&grid](const std::string& name) {
    const auto it =
        std::find(grid.variables.begin(), grid.variables.end(), name);
    if (it == grid.variables.end()) {
      throw VariableMissing("variable not in grid: " + name);
    }
    return static_cast<std::size_t>(it - grid.variables.begin());
  };
  const std::size_t num = index_of(numerator);
  const std::size_t den = index_of(denominator);

  RatioGrid out;
  out.numerator = numerator;
  out.denominator = denominator;
  for (const MRGCell& cell : grid.cells) {
    RatioCell r;
    r.id = cell.id;
    if (cell.suppressed || cell.vars_disclosed[den] == 0) {
      r.suppressed = true;
    } else {
      r.ratio = static_cast<double>(cell.vars_disclosed[num]) /
                static_cast<double>(cell.vars_disclosed[den]);
      r.flagged = r.ratio > 1.0;
    }
    out.cells.push_back(r);
  }
  return out;
}

}  // namespace mrg
