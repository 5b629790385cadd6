#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "mrg/errors.hpp"
#include "mrg/fixed.hpp"
#include "mrg/record.hpp"

namespace mrg {

// Per-stratum sums of one variable over the records of one cell. The
// records of the same stratum outside the cell enter the estimator as
// zeros, so these three numbers are all the cell must remember.
struct StratumCellAcc {
  std::uint32_t stratum = 0;
  std::int64_t n_in = 0;
  double sum_x = 0.0;
  double sum_x2 = 0.0;
};

// Estimated weighted total of one variable over one cell, with its
// design-based variance under stratified simple random sampling
// without replacement.
struct CellEstimate {
  double total = 0.0;
  double variance = 0.0;
  std::int64_t record_count = 0;
  // A contributing stratum has exactly one sampled unit but more than one
  // population unit: its sample variance is undefined, so nothing can be
  // said about precision. The reliability rule treats this as a failure.
  bool degenerate = false;
};

class UnknownStratum : public EngineError {
 public:
  explicit UnknownStratum(const std::string& message) : EngineError(message) {}
};

// X-hat = sum of w_j * x_j over the records of a cell; exact in micro-units.
inline Fixed domain_total(std::span<const Record> records,
                          std::span<const Fixed> record_values) {
  Fixed total;
  for (std::size_t i = 0; i < records.size(); ++i) {
    total += Fixed::mul(records[i].weight, record_values[i]);
  }
  return total;
}

// Domain-extended stratified SRSWOR variance:
//   Var = sum_h N_h^2 (1 - n_h/N_h) s2_h / n_h
// where s2_h is the sample variance over all n_h sampled units of stratum h
// with the variable set to zero outside the cell. Only strata intersecting
// the cell appear in `accs`; absent strata contribute exactly zero.
inline void accumulate_variance(const std::vector<StratumCellAcc>& accs,
                                const std::vector<StratumInfo>& strata,
                                CellEstimate& est) {
  for (const StratumCellAcc& a : accs) {
    if (a.stratum >= strata.size()) {
      throw UnknownStratum("stratum index " + std::to_string(a.stratum) +
                           " has no sampling information");
    }
    const StratumInfo& h = strata[a.stratum];
    const double n = static_cast<double>(h.n_h);
    const double N = h.N_h;
    if (h.n_h <= 1) {
      if (N > n) est.degenerate = true;
      continue;  // a lone unit contributes nothing measurable
    }
    double s2 = (a.sum_x2 - a.sum_x * a.sum_x / n) / (n - 1.0);
    if (s2 < 0.0) s2 = 0.0;  // guard against rounding in the subtraction
    est.variance += N * N * (1.0 - n / N) * s2 / n;
  }
}

// Relative standard error; undefined for non-positive totals.
inline std::optional<double> cv(const CellEstimate& est) {
  if (est.total <= 0.0) return std::nullopt;
  return std::sqrt(est.variance) / est.total;
}

}  // namespace mrg
