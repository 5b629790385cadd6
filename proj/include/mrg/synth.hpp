#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "mrg/csv.hpp"
#include "mrg/errors.hpp"
#include "mrg/fixed.hpp"
#include "mrg/grid.hpp"
#include "mrg/ingest.hpp"
#include "mrg/record.hpp"

namespace mrg {

class BadParams : public ConfigError {
 public:
  explicit BadParams(const std::string& message) : ConfigError(message) {}
};

// ---------------------------------------------------------------------------
// Test populations
//
// A clustered point process standing in for real register data: cluster
// centers uniform over the bounding box, points Gaussian around their
// center, one log-normal area variable (UAA) plus an organic share of it
// (UAA_ORG ≤ UAA record-wise). A stratified simple random sample without
// replacement is drawn per stratum with expansion weights N_h / n_h;
// sampling_fraction 1 keeps the whole population at weight 1.
// ---------------------------------------------------------------------------

struct PopulationParams {
  int clusters = 12;
  int points_per_cluster = 150;
  double spread = 800.0;  // Gaussian standard deviation around a center, m
  Box bbox{0.0, 0.0, 16000.0, 16000.0};
  double value_mu = 2.5;     // log-scale mean of UAA
  double value_sigma = 0.8;  // log-scale standard deviation of UAA
  int strata = 4;
  double sampling_fraction = 1.0;
  std::uint64_t seed = 1;

  void validate() const {
    if (clusters < 1) throw BadParams("clusters must be at least 1");
    if (points_per_cluster < 1) {
      throw BadParams("points_per_cluster must be at least 1");
    }
    if (strata < 1) throw BadParams("strata must be at least 1");
    if (!(spread > 0.0)) throw BadParams("spread must be positive");
    if (!(sampling_fraction > 0.0) || sampling_fraction > 1.0) {
      throw BadParams("sampling_fraction must lie in (0, 1]");
    }
    if (!(bbox.x_min < bbox.x_max) || !(bbox.y_min < bbox.y_max)) {
      throw BadParams("bbox must have positive width and height");
    }
    if (!std::isfinite(value_mu) || !std::isfinite(value_sigma) ||
        value_sigma < 0.0) {
      throw BadParams("value distribution parameters must be finite");
    }
  }
};

struct SynthRow {
  std::string id;
  double x = 0.0;
  double y = 0.0;
  double weight = 1.0;
  std::string stratum;
  std::string region;
  double uaa = 0.0;
  double uaa_org = 0.0;
};

inline std::vector<SynthRow> make_test_population(
    const PopulationParams& params) {
  params.validate();
  std::mt19937_64 rng(params.seed);
  std::uniform_real_distribution<double> center_x(params.bbox.x_min,
                                                  params.bbox.x_max);
  std::uniform_real_distribution<double> center_y(params.bbox.y_min,
                                                  params.bbox.y_max);
  std::normal_distribution<double> offset(0.0, params.spread);
  std::uniform_int_distribution<int> stratum(0, params.strata - 1);
  std::normal_distribution<double> log_value(params.value_mu,
                                             params.value_sigma);
  std::uniform_real_distribution<double> organic(0.0, 1.0);

  std::vector<SynthRow> rows;
  rows.reserve(static_cast<std::size_t>(params.clusters) *
               static_cast<std::size_t>(params.points_per_cluster));
  std::int64_t next_id = 0;
  for (int c = 0; c < params.clusters; ++c) {
    const double cx = center_x(rng);
    const double cy = center_y(rng);
    char region[16];
    std::snprintf(region, sizeof(region), "REG%02d", c);
    for (int i = 0; i < params.points_per_cluster; ++i) {
      SynthRow row;
      row.x = cx + offset(rng);
      row.y = cy + offset(rng);
      row.stratum = "ST" + std::to_string(stratum(rng));
      row.region = region;
      row.uaa = std::exp(log_value(rng));
      row.uaa_org = row.uaa * organic(rng);
      char id[24];
      std::snprintf(id, sizeof(id), "H%06lld",
                    static_cast<long long>(++next_id));
      row.id = id;
      rows.push_back(std::move(row));
    }
  }

  if (params.sampling_fraction < 1.0) {
    // Stratified SRSWOR: partial Fisher-Yates per stratum, first-seen
    // stratum order, so the draw sequence is fixed by the seed alone.
    std::map<std::string, std::vector<std::size_t>> by_stratum;
    std::vector<std::string> order;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      auto [it, fresh] = by_stratum.try_emplace(rows[i].stratum);
      if (fresh) order.push_back(rows[i].stratum);
      it->second.push_back(i);
    }
    std::vector<char> keep(rows.size(), 0);
    for (const std::string& label : order) {
      std::vector<std::size_t>& members = by_stratum[label];
      const auto population = static_cast<std::int64_t>(members.size());
      std::int64_t n = std::llround(params.sampling_fraction *
                                    static_cast<double>(population));
      n = std::clamp<std::int64_t>(n, 1, population);
      for (std::int64_t j = 0; j < n; ++j) {
        std::uniform_int_distribution<std::int64_t> pick(j, population - 1);
        std::swap(members[static_cast<std::size_t>(j)],
                  members[static_cast<std::size_t>(pick(rng))]);
      }
      const double weight =
          static_cast<double>(population) / static_cast<double>(n);
      for (std::int64_t j = 0; j < n; ++j) {
        keep[members[static_cast<std::size_t>(j)]] = 1;
        rows[members[static_cast<std::size_t>(j)]].weight = weight;
      }
    }
    std::vector<SynthRow> sampled;
    sampled.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (keep[i]) sampled.push_back(std::move(rows[i]));
    }
    rows = std::move(sampled);
  }
  return rows;
}

// Emits the same schema ingest consumes.
inline void write_population_csv(std::ostream& out,
                                 const std::vector<SynthRow>& rows) {
  csv::write_row(out, {"holding_id", "x", "y", "weight", "stratum", "region",
                       "UAA", "UAA_ORG"});
  std::vector<std::string> fields;
  for (const SynthRow& row : rows) {
    fields.clear();
    fields.push_back(row.id);
    fields.push_back(csv::double_str(row.x));
    fields.push_back(csv::double_str(row.y));
    fields.push_back(csv::double_str(row.weight));
    fields.push_back(row.stratum);
    fields.push_back(row.region);
    fields.push_back(csv::double_str(row.uaa));
    fields.push_back(csv::double_str(row.uaa_org));
    csv::write_row(out, fields);
  }
}

inline void write_population_csv(const std::string& path,
                                 const std::vector<SynthRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open output file for writing: " + path);
  write_population_csv(out, rows);
  if (!out) throw IoError("failed writing output file: " + path);
}

// In-memory shortcut past CSV for tests and benchmarks.
inline Dataset population_to_dataset(const std::vector<SynthRow>& rows) {
  Dataset d;
  d.variables = {"UAA", "UAA_ORG"};
  d.records.reserve(rows.size());
  d.values.reserve(rows.size() * 2);
  for (const SynthRow& row : rows) {
    Record r;
    r.id = row.id;
    r.xy = Point{row.x, row.y};
    r.weight = Fixed::from_double(row.weight);
    r.stratum = intern(d.strata, row.stratum);
    r.region = intern(d.regions, row.region);
    d.records.push_back(std::move(r));
    d.values.push_back(Fixed::from_double(row.uaa));
    d.values.push_back(Fixed::from_double(row.uaa_org));
  }
  d.rebuild_strata_info();
  return d;
}

// ---------------------------------------------------------------------------
// Hot-deck synthesis
//
// Replaces each record's value fields by those of its nearest neighbor
// (Euclidean distance over the standardized value columns) within the same
// classification group; the donor is never the recipient itself, so within a
// group the synthetic values are a reuse-permitting redraw of the originals.
// ---------------------------------------------------------------------------

class GroupTooSmall : public IngestError {
 public:
  explicit GroupTooSmall(const std::string& group)
      : IngestError("hot-deck group \"" + group +
                    "\" has fewer than 2 records, no donor available") {}
};

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

inline Table read_table(std::istream& in) {
  Table t;
  if (!csv::read_row(in, t.header)) {
    throw IngestError("input has no header row");
  }
  std::vector<std::string> row;
  while (csv::read_row(in, row)) {
    if (row.size() == 1 && row[0].empty()) continue;
    if (row.size() != t.header.size()) {
      throw IngestError("row " + std::to_string(t.rows.size() + 2) +
                        " has " + std::to_string(row.size()) +
                        " fields, header has " +
                        std::to_string(t.header.size()));
    }
    t.rows.push_back(row);
  }
  return t;
}

inline Table read_table(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open input file: " + path);
  return read_table(in);
}

inline void write_table(std::ostream& out, const Table& t) {
  csv::write_row(out, t.header);
  for (const auto& row : t.rows) csv::write_row(out, row);
}

inline void write_table(const std::string& path, const Table& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open output file for writing: " + path);
  write_table(out, t);
  if (!out) throw IoError("failed writing output file: " + path);
}

inline Table hotdeck_synthesize(const Table& input,
                                const std::vector<std::string>& group_columns,
                                const std::vector<std::string>& value_columns,
                                std::uint64_t seed) {
  if (value_columns.empty()) {
    throw ConfigError("hot-deck synthesis needs at least one value column");
  }
  auto column_index = [&](const std::string& name) {
    for (std::size_t i = 0; i < input.header.size(); ++i) {
      if (input.header[i] == name) return i;
    }
    throw MissingColumn(name);
  };
  std::vector<std::size_t> group_idx;
  for (const std::string& name : group_columns) {
    group_idx.push_back(column_index(name));
  }
  std::vector<std::size_t> value_idx;
  for (const std::string& name : value_columns) {
    value_idx.push_back(column_index(name));
  }

  const std::size_t n = input.rows.size();
  const std::size_t k = value_idx.size();
  std::vector<double> raw(n * k);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const std::string& field = input.rows[i][value_idx[j]];
      const auto value = detail::parse_number(field);
      if (!value) {
        throw IngestError("unreadable value \"" + field + "\" in column " +
                          value_columns[j] + ", row " + std::to_string(i + 2));
      }
      raw[i * k + j] = *value;
    }
  }

  // Standardize each value column over the whole file so no column
  // dominates the distance; constant columns contribute nothing.
  for (std::size_t j = 0; j < k; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += raw[i * k + j];
    if (n > 0) mean /= static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = raw[i * k + j] - mean;
      ss += d * d;
    }
    const double sd = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      raw[i * k + j] = sd > 0.0 ? (raw[i * k + j] - mean) / sd : 0.0;
    }
  }

  std::map<std::string, std::vector<std::size_t>> groups;
  std::vector<std::string> group_of(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::string key;
    for (std::size_t g = 0; g < group_idx.size(); ++g) {
      if (g > 0) key += '\x1f';
      key += input.rows[i][group_idx[g]];
    }
    group_of[i] = key;
    groups[key].push_back(i);
  }
  for (const auto& [key, members] : groups) {
    if (members.size() < 2) {
      std::string label = key;
      std::replace(label.begin(), label.end(), '\x1f', '/');
      throw GroupTooSmall(label);
    }
  }

  std::mt19937_64 rng(seed);
  Table out;
  out.header = input.header;
  out.rows = input.rows;
  std::vector<std::size_t> nearest;
  for (std::size_t i = 0; i < n; ++i) {
    const std::vector<std::size_t>& members = groups[group_of[i]];
    double best = std::numeric_limits<double>::infinity();
    nearest.clear();
    for (std::size_t candidate : members) {
      if (candidate == i) continue;
      double dist = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        const double d = raw[i * k + j] - raw[candidate * k + j];
        dist += d * d;
      }
      if (dist < best) {
        best = dist;
        nearest.clear();
        nearest.push_back(candidate);
      } else if (dist == best) {
        nearest.push_back(candidate);
      }
    }
    std::size_t donor = nearest.front();
    if (nearest.size() > 1) {
      std::uniform_int_distribution<std::size_t> pick(0, nearest.size() - 1);
      donor = nearest[pick(rng)];
    }
    for (std::size_t j = 0; j < k; ++j) {
      out.rows[i][value_idx[j]] = input.rows[donor][value_idx[j]];
    }
  }
  return out;
}

}  // namespace mrg
