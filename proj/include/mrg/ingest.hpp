#pragma once

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mrg/csv.hpp"
#include "mrg/errors.hpp"
#include "mrg/fixed.hpp"
#include "mrg/grid.hpp"
#include "mrg/record.hpp"

namespace mrg {

// ---------------------------------------------------------------------------
// Encoded grid locations
//
// Statistical registers often ship locations as a single string naming the
// grid cell a unit falls in: an optional country prefix, the CRS id, the cell
// resolution and the cell corner coordinates, e.g.
//
//     DK_CRS3035RES1000mN3445000E4334000
//
// Letter markers are matched case-insensitively; the underscore after the
// country prefix is optional, as is the prefix itself.
// ---------------------------------------------------------------------------

class GeoLctMalformed : public IngestError {
 public:
  GeoLctMalformed(const std::string& code, std::size_t position)
      : IngestError("malformed grid location \"" + code +
                    "\": unparseable at \"" + snippet(code, position) +
                    "\" (offset " + std::to_string(position) + ")"),
        position_(position) {}

  std::size_t position() const { return position_; }

 private:
  static std::string snippet(const std::string& code, std::size_t position) {
    if (position >= code.size()) return "<end>";
    return code.substr(position, 8);
  }

  std::size_t position_;
};

struct GeoLct {
  std::string country;       // may be empty
  int crs = 0;               // EPSG id
  std::int64_t res_m = 0;    // reported cell resolution
  std::int64_t northing = 0;  // y of the referenced cell corner
  std::int64_t easting = 0;   // x of the referenced cell corner

  Point point() const {
    return Point{static_cast<double>(easting), static_cast<double>(northing)};
  }

  friend bool operator==(const GeoLct&, const GeoLct&) = default;
};

inline GeoLct parse_geo_lct(const std::string& code) {
  const std::size_t n = code.size();
  auto lower = [](char c) {
    return static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  };
  auto marker_at = [&](std::size_t pos, std::string_view marker) {
    if (pos + marker.size() > n) return false;
    for (std::size_t i = 0; i < marker.size(); ++i) {
      if (lower(code[pos + i]) != marker[i]) return false;
    }
    return true;
  };
  auto digits = [&](std::size_t& pos) {
    const std::size_t start = pos;
    while (pos < n && std::isdigit(static_cast<unsigned char>(code[pos]))) {
      ++pos;
    }
    std::int64_t value = 0;
    const auto res =
        std::from_chars(code.data() + start, code.data() + pos, value);
    if (pos == start || res.ec != std::errc{}) {
      throw GeoLctMalformed(code, start);
    }
    return value;
  };

  GeoLct out;
  std::size_t p = 0;
  std::size_t letters = 0;
  while (letters < n && std::isalpha(static_cast<unsigned char>(code[letters]))) {
    ++letters;
  }
  if (letters < n && code[letters] == '_') {
    // Country prefix with explicit separator; the CRS marker must follow.
    out.country = code.substr(0, letters);
    p = letters + 1;
    if (!marker_at(p, "crs")) throw GeoLctMalformed(code, p);
    p += 3;
  } else if (letters >= 3 && marker_at(letters - 3, "crs")) {
    // No separator: the leading letter run ends with the CRS marker.
    out.country = code.substr(0, letters - 3);
    p = letters;
  } else {
    throw GeoLctMalformed(code, 0);
  }
  out.crs = static_cast<int>(digits(p));
  if (!marker_at(p, "res")) throw GeoLctMalformed(code, p);
  p += 3;
  out.res_m = digits(p);
  if (!marker_at(p, "m")) throw GeoLctMalformed(code, p);
  p += 1;
  if (!marker_at(p, "n")) throw GeoLctMalformed(code, p);
  p += 1;
  out.northing = digits(p);
  if (!marker_at(p, "e")) throw GeoLctMalformed(code, p);
  p += 1;
  out.easting = digits(p);
  if (p != n) throw GeoLctMalformed(code, p);
  return out;
}

// Canonical form; parse_geo_lct(format_geo_lct(g)) == g.
inline std::string format_geo_lct(const GeoLct& g) {
  std::string out;
  if (!g.country.empty()) {
    out += g.country;
    out += '_';
  }
  out += "CRS" + std::to_string(g.crs);
  out += "RES" + std::to_string(g.res_m) + "m";
  out += "N" + std::to_string(g.northing);
  out += "E" + std::to_string(g.easting);
  return out;
}

// ---------------------------------------------------------------------------
// Location adjustment
//
// Encoded locations name a cell corner, which lies exactly on grid lines and
// cannot be assigned to a cell. The corner modes shift the point to the
// center of the reported cell, assuming the coordinate names the lower-left /
// lower-right / upper-left / upper-right corner respectively. Jitter shifts
// both axes by a uniform non-zero draw from (-res/2, +res/2), spreading units
// randomly around the reported corner. `none` passes coordinates through
// untouched, for inputs that carry exact locations already.
// ---------------------------------------------------------------------------

class BadResolution : public IngestError {
 public:
  explicit BadResolution(const std::string& message) : IngestError(message) {}
};

enum class LocAdjust {
  lower_left,
  lower_right,
  upper_left,
  upper_right,
  jitter,
  none,
};

inline std::string to_string(LocAdjust mode) {
  switch (mode) {
    case LocAdjust::lower_left: return "LL";
    case LocAdjust::lower_right: return "LR";
    case LocAdjust::upper_left: return "UL";
    case LocAdjust::upper_right: return "UR";
    case LocAdjust::jitter: return "JITTER";
    case LocAdjust::none: return "NONE";
  }
  return "NONE";
}

inline LocAdjust parse_loc_adjust(const std::string& text) {
  std::string up;
  up.reserve(text.size());
  for (char c : text) {
    up += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  }
  if (up == "LL") return LocAdjust::lower_left;
  if (up == "LR") return LocAdjust::lower_right;
  if (up == "UL") return LocAdjust::upper_left;
  if (up == "UR") return LocAdjust::upper_right;
  if (up == "JITTER") return LocAdjust::jitter;
  if (up == "NONE") return LocAdjust::none;
  throw ConfigError("unknown location adjustment mode \"" + text +
                    "\" (expected LL, LR, UL, UR, JITTER or NONE)");
}

inline Point adjust_location(Point p, std::int64_t res_m, LocAdjust mode,
                             std::mt19937_64& rng) {
  if (mode == LocAdjust::none) return p;
  if (res_m <= 0) {
    throw BadResolution("reported resolution must be positive, got " +
                        std::to_string(res_m));
  }
  const double half = static_cast<double>(res_m) / 2.0;
  switch (mode) {
    case LocAdjust::lower_left: return Point{p.x + half, p.y + half};
    case LocAdjust::lower_right: return Point{p.x - half, p.y + half};
    case LocAdjust::upper_left: return Point{p.x + half, p.y - half};
    case LocAdjust::upper_right: return Point{p.x - half, p.y - half};
    case LocAdjust::jitter: {
      std::uniform_real_distribution<double> shift(-half, half);
      double u = 0.0;
      double v = 0.0;
      while ((u = shift(rng)) == 0.0) {
      }
      while ((v = shift(rng)) == 0.0) {
      }
      return Point{p.x + u, p.y + v};
    }
    case LocAdjust::none: break;
  }
  return p;
}

// ---------------------------------------------------------------------------
// CSV loading
// ---------------------------------------------------------------------------

class MissingColumn : public IngestError {
 public:
  explicit MissingColumn(const std::string& name)
      : IngestError("input is missing required column \"" + name + "\""),
        name_(name) {}

  const std::string& name() const { return name_; }

 private:
  std::string name_;
};

struct ColumnMap {
  std::string id;
  // Exactly one location mode: either both x and y, or geo_lct.
  std::string x;
  std::string y;
  std::string geo_lct;
  std::string weight;   // optional; absent column means census weights of 1
  std::string stratum;  // optional
  std::string region;   // optional
  std::vector<std::string> variables;
};

struct IngestConfig {
  ColumnMap columns;
  LocAdjust loc_adjust = LocAdjust::lower_left;
  std::uint64_t seed = 0;
  // The run aborts when more than this fraction of data rows is dropped.
  double max_bad_fraction = 0.01;
};

struct IngestReport {
  static constexpr std::size_t kMaxRowErrors = 20;

  std::int64_t rows_read = 0;  // data rows scanned, header excluded
  std::int64_t loaded = 0;
  std::int64_t dropped = 0;
  std::int64_t missing_weight = 0;  // empty weight fields defaulted to 1
  std::map<std::string, std::int64_t> missing_values;  // variable -> empties
  std::map<std::string, std::int64_t> drop_reasons;
  std::vector<std::string> row_errors;  // first kMaxRowErrors, "line N: ..."
};

namespace detail {

inline std::optional<double> parse_number(const std::string& field) {
  if (field.empty()) return std::nullopt;
  double value = 0.0;
  const char* last = field.data() + field.size();
  const auto res = std::from_chars(field.data(), last, value);
  if (res.ec != std::errc{} || res.ptr != last) return std::nullopt;
  if (!std::isfinite(value)) return std::nullopt;
  return value;
}

inline std::optional<std::size_t> find_column(
    const std::vector<std::string>& header, const std::string& name) {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  return std::nullopt;
}

inline std::size_t require_column(const std::vector<std::string>& header,
                                  const std::string& name) {
  const auto idx = find_column(header, name);
  if (!idx) throw MissingColumn(name);
  return *idx;
}

// True when the point avoids every grid line of every configured level.
inline bool off_all_borders(const GridSpec& spec, Point p) {
  for (int level = 0; level < spec.levels(); ++level) {
    const double res = static_cast<double>(spec.res_m(level));
    if (std::fmod(p.x - spec.origin().x, res) == 0.0) return false;
    if (std::fmod(p.y - spec.origin().y, res) == 0.0) return false;
  }
  return true;
}

}  // namespace detail

/**
 * Loads microdata rows into a Dataset.
 *
 * Structural problems (missing configured columns, no header) abort
 * immediately. Row-level problems drop the affected row and are tallied in
 * the report by reason; the whole run aborts only when the dropped share
 * exceeds config.max_bad_fraction. Two in-row gaps are repaired rather than
 * dropped, and counted: an empty weight field becomes 1 (census semantics)
 * and an empty variable field becomes 0.
 *
 * Jitter draws come from one generator seeded with config.seed, consumed in
 * row order, so ingest is deterministic for a given (file, config) pair.
 */
inline std::pair<Dataset, IngestReport> load_records(std::istream& in,
                                                     const IngestConfig& cfg,
                                                     const GridSpec& spec) {
  const ColumnMap& cols = cfg.columns;
  const bool xy_mode = !cols.x.empty() || !cols.y.empty();
  const bool geo_mode = !cols.geo_lct.empty();
  if (xy_mode == geo_mode) {
    throw ConfigError(
        "exactly one location mode must be configured: either x/y columns or "
        "a geo_lct column");
  }
  if (xy_mode && (cols.x.empty() || cols.y.empty())) {
    throw ConfigError("coordinate mode needs both an x and a y column");
  }
  if (xy_mode && cfg.loc_adjust != LocAdjust::none) {
    throw ConfigError(
        "location adjustment " + to_string(cfg.loc_adjust) +
        " needs the cell resolution from an encoded grid location; with x/y "
        "columns use adjustment mode NONE");
  }
  if (cols.id.empty()) {
    throw ConfigError("an id column must be configured");
  }
  if (cfg.max_bad_fraction < 0.0 || cfg.max_bad_fraction > 1.0) {
    throw ConfigError("max_bad_fraction must lie in [0, 1]");
  }

  std::vector<std::string> header;
  if (!csv::read_row(in, header)) {
    throw IngestError("input has no header row");
  }
  const std::size_t id_col = detail::require_column(header, cols.id);
  std::size_t x_col = 0;
  std::size_t y_col = 0;
  std::size_t geo_col = 0;
  if (xy_mode) {
    x_col = detail::require_column(header, cols.x);
    y_col = detail::require_column(header, cols.y);
  } else {
    geo_col = detail::require_column(header, cols.geo_lct);
  }
  std::optional<std::size_t> weight_col;
  if (!cols.weight.empty()) {
    weight_col = detail::require_column(header, cols.weight);
  }
  std::optional<std::size_t> stratum_col;
  if (!cols.stratum.empty()) {
    stratum_col = detail::require_column(header, cols.stratum);
  }
  std::optional<std::size_t> region_col;
  if (!cols.region.empty()) {
    region_col = detail::require_column(header, cols.region);
  }
  std::vector<std::size_t> var_cols;
  var_cols.reserve(cols.variables.size());
  for (const std::string& name : cols.variables) {
    var_cols.push_back(detail::require_column(header, name));
  }

  Dataset d;
  d.variables = cols.variables;
  IngestReport report;
  std::mt19937_64 rng(cfg.seed);

  std::int64_t line = 1;  // header line
  std::vector<std::string> row;
  std::vector<Fixed> vals(var_cols.size());
  auto drop = [&](const std::string& reason, const std::string& what) {
    ++report.dropped;
    ++report.drop_reasons[reason];
    if (report.row_errors.size() < IngestReport::kMaxRowErrors) {
      report.row_errors.push_back("line " + std::to_string(line) + ": " + what);
    }
  };

  while (csv::read_row(in, row)) {
    ++line;
    if (row.size() == 1 && row[0].empty()) continue;  // blank line
    ++report.rows_read;
    if (row.size() != header.size()) {
      drop("bad_row", "expected " + std::to_string(header.size()) +
                          " fields, got " + std::to_string(row.size()));
      continue;
    }

    // Location. Jitter must consume its draws even for rows later dropped by
    // a value check, so resolve the location first and keep row order the
    // only thing that matters for determinism.
    Point p;
    if (xy_mode) {
      if (row[x_col].empty() || row[y_col].empty()) {
        drop("missing_location", "empty coordinate field");
        continue;
      }
      const auto px = detail::parse_number(row[x_col]);
      const auto py = detail::parse_number(row[y_col]);
      if (!px || !py) {
        drop("bad_location", "unreadable coordinates \"" + row[x_col] +
                                 "\", \"" + row[y_col] + "\"");
        continue;
      }
      p = Point{*px, *py};
    } else {
      if (row[geo_col].empty()) {
        drop("missing_location", "empty grid location field");
        continue;
      }
      GeoLct g;
      try {
        g = parse_geo_lct(row[geo_col]);
      } catch (const GeoLctMalformed& e) {
        drop("bad_location", e.what());
        continue;
      }
      if (g.crs != spec.crs_epsg()) {
        drop("crs_mismatch", "location CRS " + std::to_string(g.crs) +
                                 " does not match grid CRS " +
                                 std::to_string(spec.crs_epsg()));
        continue;
      }
      try {
        p = adjust_location(g.point(), g.res_m, cfg.loc_adjust, rng);
      } catch (const BadResolution& e) {
        drop("bad_location", e.what());
        continue;
      }
    }
    if (!detail::off_all_borders(spec, p)) {
      drop("on_border", "adjusted location lies on a grid line");
      continue;
    }

    // Weight.
    Fixed weight = Fixed::from_units(1);
    if (weight_col) {
      const std::string& field = row[*weight_col];
      if (field.empty()) {
        ++report.missing_weight;
      } else {
        const auto w = detail::parse_number(field);
        if (!w) {
          drop("bad_number", "unreadable weight \"" + field + "\"");
          continue;
        }
        if (*w < 0.0) {
          drop("negative_weight", "negative weight " + field);
          continue;
        }
        weight = Fixed::from_double(*w);
      }
    }

    // Variable values.
    bool ok = true;
    for (std::size_t k = 0; k < var_cols.size(); ++k) {
      const std::string& field = row[var_cols[k]];
      if (field.empty()) {
        vals[k] = Fixed{};
        ++report.missing_values[cols.variables[k]];
        continue;
      }
      const auto v = detail::parse_number(field);
      if (!v) {
        drop("bad_number", "unreadable value \"" + field + "\" in column " +
                               cols.variables[k]);
        ok = false;
        break;
      }
      if (*v < 0.0) {
        drop("negative_value",
             "negative value " + field + " in column " + cols.variables[k]);
        ok = false;
        break;
      }
      vals[k] = Fixed::from_double(*v);
    }
    if (!ok) continue;

    Record r;
    r.id = row[id_col];
    r.xy = p;
    r.weight = weight;
    r.stratum = intern(d.strata, stratum_col ? row[*stratum_col] : "");
    r.region = intern(d.regions, region_col ? row[*region_col] : "");
    d.records.push_back(std::move(r));
    d.values.insert(d.values.end(), vals.begin(), vals.end());
  }

  if (report.rows_read > 0 &&
      static_cast<double>(report.dropped) >
          cfg.max_bad_fraction * static_cast<double>(report.rows_read)) {
    std::string msg = "too many unreadable rows: " +
                      std::to_string(report.dropped) + " of " +
                      std::to_string(report.rows_read) + " dropped";
    if (!report.row_errors.empty()) {
      msg += " (first: " + report.row_errors.front() + ")";
    }
    throw IngestError(msg);
  }

  report.loaded = static_cast<std::int64_t>(d.records.size());
  d.rebuild_strata_info();
  return {std::move(d), std::move(report)};
}

inline std::pair<Dataset, IngestReport> load_records(const std::string& path,
                                                     const IngestConfig& cfg,
                                                     const GridSpec& spec) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open input file: " + path);
  return load_records(in, cfg, spec);
}

/**
 * Overrides per-stratum population sizes from a two-column CSV
 * (stratum_id, N_h). Labels not present in the dataset are ignored; an N_h
 * below the sampled count n_h is rejected because the variance estimator's
 * finite population correction would turn negative.
 */
inline void apply_strata_overrides(Dataset& d, std::istream& in) {
  std::vector<std::string> header;
  if (!csv::read_row(in, header)) {
    throw IngestError("strata file has no header row");
  }
  const std::size_t id_col = detail::require_column(header, "stratum_id");
  const std::size_t n_col = detail::require_column(header, "N_h");
  std::vector<std::string> row;
  std::int64_t line = 1;
  while (csv::read_row(in, row)) {
    ++line;
    if (row.size() == 1 && row[0].empty()) continue;
    if (row.size() != header.size()) {
      throw IngestError("strata file line " + std::to_string(line) +
                        ": expected " + std::to_string(header.size()) +
                        " fields, got " + std::to_string(row.size()));
    }
    const auto value = detail::parse_number(row[n_col]);
    if (!value || *value <= 0.0) {
      throw IngestError("strata file line " + std::to_string(line) +
                        ": unreadable population size \"" + row[n_col] + "\"");
    }
    for (std::size_t h = 0; h < d.strata.size(); ++h) {
      if (d.strata[h] != row[id_col]) continue;
      if (*value < static_cast<double>(d.strata_info[h].n_h)) {
        throw IngestError(
            "strata file line " + std::to_string(line) + ": population size " +
            row[n_col] + " is below the sampled count " +
            std::to_string(d.strata_info[h].n_h) + " for stratum \"" +
            row[id_col] + "\"");
      }
      d.strata_info[h].N_h = *value;
      break;
    }
  }
}

inline void apply_strata_overrides(Dataset& d, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open strata file: " + path);
  apply_strata_overrides(d, in);
}

}  // namespace mrg
