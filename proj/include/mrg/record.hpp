#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mrg/fixed.hpp"
#include "mrg/grid.hpp"

namespace mrg {

// One microdata unit (a holding): adjusted location, expansion weight and
// interned stratum/region labels. Variable values live in Dataset::values
// as one flat row-major block to keep million-record runs cache-friendly.
struct Record {
  std::string id;
  Point xy;
  Fixed weight = Fixed::from_units(1);
  std::uint32_t stratum = 0;
  std::uint32_t region = 0;
};

// Whole-dataset sampling facts for one stratum.
struct StratumInfo {
  std::int64_t n_h = 0;  // sampled records in the stratum
  double N_h = 0.0;      // population size; defaults to the stratum weight sum
};

struct Dataset {
  std::vector<Record> records;
  std::vector<std::string> variables;  // variable names, column order
  std::vector<Fixed> values;           // records.size() * variables.size()
  std::vector<std::string> strata;     // stratum labels, first-seen order
  std::vector<std::string> regions;    // region labels, first-seen order
  std::vector<StratumInfo> strata_info;  // parallel to strata

  std::size_t var_count() const { return variables.size(); }

  Fixed value(std::size_t record, std::size_t var) const {
    return values[record * variables.size() + var];
  }

  // Recomputes n_h and the weight-sum default for N_h from the records.
  void rebuild_strata_info() {
    strata_info.assign(strata.size(), StratumInfo{});
    std::vector<Fixed> weight_sums(strata.size());
    for (const Record& r : records) {
      ++strata_info[r.stratum].n_h;
      weight_sums[r.stratum] += r.weight;
    }
    for (std::size_t h = 0; h < strata.size(); ++h) {
      strata_info[h].N_h = weight_sums[h].to_double();
    }
  }
};

// Label interning helper shared by ingest and fixture generators.
inline std::uint32_t intern(std::vector<std::string>& pool,
                            const std::string& label) {
  for (std::uint32_t i = 0; i < pool.size(); ++i) {
    if (pool[i] == label) return i;
  }
  pool.push_back(label);
  return static_cast<std::uint32_t>(pool.size() - 1);
}

}  // namespace mrg
