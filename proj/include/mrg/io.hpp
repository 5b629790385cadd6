#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mrg/csv.hpp"
#include "mrg/engine.hpp"
#include "mrg/errors.hpp"
#include "mrg/ingest.hpp"
#include "mrg/postprocess.hpp"

namespace mrg {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Input digest (FNV-1a, 64 bit) — ties a run report to the exact input bytes.
// ---------------------------------------------------------------------------

inline std::uint64_t fnv1a64(std::string_view data,
                             std::uint64_t state = 14695981039346656037ULL) {
  for (unsigned char c : data) {
    state ^= c;
    state *= 1099511628211ULL;
  }
  return state;
}

inline std::string digest_label(std::uint64_t state) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "fnv1a64:%016llx",
                static_cast<unsigned long long>(state));
  return buf;
}

inline std::string digest_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open input file: " + path);
  std::uint64_t state = 14695981039346656037ULL;
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    state = fnv1a64(
        std::string_view(buf, static_cast<std::size_t>(in.gcount())), state);
  }
  return digest_label(state);
}

// ---------------------------------------------------------------------------
// Cells CSV
//
// Column order is fixed: cell_id, res_m, x_min, y_min, x_max, y_max,
// count_holdings, one column per variable, suppressed, warning. Suppressed
// cells keep their geometry but publish empty count and value fields —
// empty, not zero, so suppression can never be mistaken for a true zero.
// ---------------------------------------------------------------------------

inline void write_cells_csv(std::ostream& out, const MRGrid& grid) {
  if (!grid.post_processed) {
    throw EngineError("grid must be post-processed before it is written");
  }
  std::vector<std::string> row = {"cell_id", "res_m",  "x_min", "y_min",
                                  "x_max",   "y_max", "count_holdings"};
  row.insert(row.end(), grid.variables.begin(), grid.variables.end());
  row.push_back("suppressed");
  row.push_back("warning");
  csv::write_row(out, row);

  for (const MRGCell& cell : grid.cells) {
    const Box box = grid.spec.cell_box(cell.id);
    row.clear();
    row.push_back(grid.spec.cell_name(cell.id));
    row.push_back(std::to_string(grid.spec.res_m(cell.id.level)));
    row.push_back(csv::coord_str(box.x_min));
    row.push_back(csv::coord_str(box.y_min));
    row.push_back(csv::coord_str(box.x_max));
    row.push_back(csv::coord_str(box.y_max));
    if (cell.suppressed) {
      row.emplace_back();
      for (std::size_t k = 0; k < grid.variables.size(); ++k) {
        row.emplace_back();
      }
    } else {
      row.push_back(std::to_string(cell.count_disclosed));
      for (std::size_t k = 0; k < grid.variables.size(); ++k) {
        row.push_back(std::to_string(cell.vars_disclosed[k]));
      }
    }
    row.push_back(cell.suppressed ? "1" : "0");
    row.push_back(cell.warning ? "1" : "0");
    csv::write_row(out, row);
  }
}

inline void write_cells_csv(const std::string& path, const MRGrid& grid) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open output file for writing: " + path);
  write_cells_csv(out, grid);
  if (!out) throw IoError("failed writing output file: " + path);
}

// ---------------------------------------------------------------------------
// Cells GeoJSON — one Polygon feature per cell, properties mirroring the CSV
// columns (null where the CSV field is empty). Coordinates stay in the grid
// CRS, recorded in the top-level foreign member "crs_epsg".
// ---------------------------------------------------------------------------

inline json cells_geojson(const MRGrid& grid) {
  if (!grid.post_processed) {
    throw EngineError("grid must be post-processed before it is written");
  }
  json features = json::array();
  for (const MRGCell& cell : grid.cells) {
    const Box b = grid.spec.cell_box(cell.id);
    json props;
    props["cell_id"] = grid.spec.cell_name(cell.id);
    props["res_m"] = grid.spec.res_m(cell.id.level);
    props["x_min"] = b.x_min;
    props["y_min"] = b.y_min;
    props["x_max"] = b.x_max;
    props["y_max"] = b.y_max;
    if (cell.suppressed) {
      props["count_holdings"] = nullptr;
      for (const std::string& v : grid.variables) props[v] = nullptr;
    } else {
      props["count_holdings"] = cell.count_disclosed;
      for (std::size_t k = 0; k < grid.variables.size(); ++k) {
        props[grid.variables[k]] = cell.vars_disclosed[k];
      }
    }
    props["suppressed"] = cell.suppressed ? 1 : 0;
    props["warning"] = cell.warning ? 1 : 0;

    json ring = json::array();
    ring.push_back({b.x_min, b.y_min});
    ring.push_back({b.x_max, b.y_min});
    ring.push_back({b.x_max, b.y_max});
    ring.push_back({b.x_min, b.y_max});
    ring.push_back({b.x_min, b.y_min});

    json feature;
    feature["type"] = "Feature";
    feature["geometry"] = {{"type", "Polygon"},
                           {"coordinates", json::array({ring})}};
    feature["properties"] = std::move(props);
    features.push_back(std::move(feature));
  }
  json out;
  out["type"] = "FeatureCollection";
  out["crs_epsg"] = grid.spec.crs_epsg();
  out["features"] = std::move(features);
  return out;
}

inline void write_json_file(const std::string& path, const json& value) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open output file for writing: " + path);
  out << value.dump(2) << '\n';
  if (!out) throw IoError("failed writing output file: " + path);
}

// ---------------------------------------------------------------------------
// Ratio outputs: cell_id, res_m, x_min, y_min, x_max, y_max, ratio,
// suppressed, flagged. The ratio is printed with a configurable number of
// decimal places (default 3); suppressed cells publish an empty ratio.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string ratio_str(double ratio, int places) {
  if (places < 0) places = 0;
  if (places > 12) places = 12;
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.*f", places, ratio);
  return buf;
}

}  // namespace detail

inline void write_ratio_csv(std::ostream& out, const RatioGrid& ratio,
                            const GridSpec& spec, int places = 3) {
  csv::write_row(out, {"cell_id", "res_m", "x_min", "y_min", "x_max", "y_max",
                       "ratio", "suppressed", "flagged"});
  std::vector<std::string> row;
  for (const RatioCell& cell : ratio.cells) {
    const Box b = spec.cell_box(cell.id);
    row.clear();
    row.push_back(spec.cell_name(cell.id));
    row.push_back(std::to_string(spec.res_m(cell.id.level)));
    row.push_back(csv::coord_str(b.x_min));
    row.push_back(csv::coord_str(b.y_min));
    row.push_back(csv::coord_str(b.x_max));
    row.push_back(csv::coord_str(b.y_max));
    row.push_back(cell.suppressed ? "" : detail::ratio_str(cell.ratio, places));
    row.push_back(cell.suppressed ? "1" : "0");
    row.push_back(cell.flagged ? "1" : "0");
    csv::write_row(out, row);
  }
}

inline void write_ratio_csv(const std::string& path, const RatioGrid& ratio,
                            const GridSpec& spec, int places = 3) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open output file for writing: " + path);
  write_ratio_csv(out, ratio, spec, places);
  if (!out) throw IoError("failed writing output file: " + path);
}

inline json ratio_geojson(const RatioGrid& ratio, const GridSpec& spec,
                          int places = 3) {
  json features = json::array();
  for (const RatioCell& cell : ratio.cells) {
    const Box b = spec.cell_box(cell.id);
    json props;
    props["cell_id"] = spec.cell_name(cell.id);
    props["res_m"] = spec.res_m(cell.id.level);
    props["x_min"] = b.x_min;
    props["y_min"] = b.y_min;
    props["x_max"] = b.x_max;
    props["y_max"] = b.y_max;
    if (cell.suppressed) {
      props["ratio"] = nullptr;
    } else {
      // Reparse the printed form so CSV and GeoJSON publish the same value.
      props["ratio"] = std::stod(detail::ratio_str(cell.ratio, places));
    }
    props["suppressed"] = cell.suppressed ? 1 : 0;
    props["flagged"] = cell.flagged ? 1 : 0;

    json ring = json::array();
    ring.push_back({b.x_min, b.y_min});
    ring.push_back({b.x_max, b.y_min});
    ring.push_back({b.x_max, b.y_max});
    ring.push_back({b.x_min, b.y_max});
    ring.push_back({b.x_min, b.y_min});

    json feature;
    feature["type"] = "Feature";
    feature["geometry"] = {{"type", "Polygon"},
                           {"coordinates", json::array({ring})}};
    feature["properties"] = std::move(props);
    features.push_back(std::move(feature));
  }
  json out;
  out["type"] = "FeatureCollection";
  out["crs_epsg"] = spec.crs_epsg();
  out["features"] = std::move(features);
  return out;
}

// ---------------------------------------------------------------------------
// Run report
// ---------------------------------------------------------------------------

inline json run_report(const MRGrid& grid, const IngestReport* ingest,
                       double wall_seconds) {
  json report;
  report["version"] = grid.version;
  report["seed"] = grid.seed;
  report["input_digest"] = grid.input_digest;
  if (ingest != nullptr) {
    json rec;
    rec["rows_read"] = ingest->rows_read;
    rec["loaded"] = ingest->loaded;
    rec["dropped"] = ingest->dropped;
    rec["missing_weight"] = ingest->missing_weight;
    rec["missing_values"] = json(ingest->missing_values);
    rec["drop_reasons"] = json(ingest->drop_reasons);
    report["records"] = std::move(rec);
  } else {
    report["records"] = nullptr;
  }

  std::map<std::int64_t, std::int64_t> per_level;
  std::int64_t suppressed_cells = 0;
  std::int64_t warnings = 0;
  std::int64_t records_total = 0;
  std::int64_t records_suppressed = 0;
  Fixed weight_total;
  Fixed weight_suppressed;
  std::vector<Fixed> var_total(grid.variables.size());
  std::vector<Fixed> var_suppressed(grid.variables.size());
  for (const MRGCell& cell : grid.cells) {
    ++per_level[grid.spec.res_m(cell.id.level)];
    records_total += cell.acc.record_count;
    weight_total += cell.acc.weight_sum;
    for (std::size_t k = 0; k < cell.acc.vars.size() && k < var_total.size();
         ++k) {
      var_total[k] += cell.acc.vars[k].total;
    }
    if (cell.warning) ++warnings;
    if (cell.suppressed) {
      ++suppressed_cells;
      records_suppressed += cell.acc.record_count;
      weight_suppressed += cell.acc.weight_sum;
      for (std::size_t k = 0;
           k < cell.acc.vars.size() && k < var_suppressed.size(); ++k) {
        var_suppressed[k] += cell.acc.vars[k].total;
      }
    }
  }

  json cells;
  cells["total"] = grid.cells.size();
  json levels;
  for (const auto& [res, count] : per_level) {
    levels[std::to_string(res)] = count;
  }
  cells["per_level"] = std::move(levels);
  report["cells"] = std::move(cells);

  auto share = [](Fixed part, Fixed whole) {
    return whole.micro() == 0 ? 0.0 : part.to_double() / whole.to_double();
  };
  json suppressed;
  suppressed["cells"] = suppressed_cells;
  suppressed["share_of_records"] =
      records_total == 0 ? 0.0
                         : static_cast<double>(records_suppressed) /
                               static_cast<double>(records_total);
  suppressed["share_of_weighted_count"] =
      share(weight_suppressed, weight_total);
  json shares;
  for (std::size_t k = 0; k < grid.variables.size(); ++k) {
    shares[grid.variables[k]] = share(var_suppressed[k], var_total[k]);
  }
  suppressed["share_of_totals"] = std::move(shares);
  report["suppressed"] = std::move(suppressed);
  report["warnings"] = warnings;
  report["wall_time_seconds"] = wall_seconds;
  return report;
}

// ---------------------------------------------------------------------------
// Reading a published cells CSV back (for match-mode gridding)
// ---------------------------------------------------------------------------

namespace detail {

inline std::int64_t parse_int_token(const std::string& text, std::size_t& pos,
                                    const std::string& context) {
  const char* first = text.data() + pos;
  const char* last = text.data() + text.size();
  std::int64_t value = 0;
  const auto res = std::from_chars(first, last, value);
  if (res.ec != std::errc{}) {
    throw IngestError("unreadable cell id \"" + text + "\" (" + context + ")");
  }
  pos = static_cast<std::size_t>(res.ptr - text.data());
  return value;
}

// Parses "R<res>_C<col>_R<row>" against the configured resolution ladder.
inline CellId parse_cell_name(const std::string& name, const GridSpec& spec) {
  std::size_t pos = 0;
  auto expect = [&](std::string_view marker) {
    if (name.compare(pos, marker.size(), marker) != 0) {
      throw IngestError("unreadable cell id \"" + name + "\"");
    }
    pos += marker.size();
  };
  expect("R");
  const std::int64_t res = parse_int_token(name, pos, "resolution");
  expect("_C");
  const std::int64_t col = parse_int_token(name, pos, "column");
  expect("_R");
  const std::int64_t row = parse_int_token(name, pos, "row");
  if (pos != name.size()) {
    throw IngestError("unreadable cell id \"" + name + "\"");
  }
  for (int level = 0; level < spec.levels(); ++level) {
    if (spec.res_m(level) == res) return CellId{level, col, row};
  }
  throw SpecMismatch("cell " + name + " uses resolution " +
                     std::to_string(res) +
                     " m, which is not in the configured grid");
}

}  // namespace detail

/**
 * Reconstructs a published grid from its cells CSV, enough for match-mode
 * gridding: geometry, disclosed numbers and the suppressed/warning flags.
 * Exact internal statistics are gone — the disclosed count stands in for the
 * weighted count — so match mode re-derives all statistics of the new
 * variable from the new microdata and only reuses the published skeleton.
 */
inline MRGrid read_cells_csv(std::istream& in, const GridSpec& spec) {
  std::vector<std::string> header;
  if (!csv::read_row(in, header)) {
    throw IngestError("cells file has no header row");
  }
  const std::vector<std::string> lead = {"cell_id", "res_m",  "x_min", "y_min",
                                         "x_max",   "y_max", "count_holdings"};
  if (header.size() < lead.size() + 2) {
    throw IngestError("cells file header is too short");
  }
  for (std::size_t i = 0; i < lead.size(); ++i) {
    if (header[i] != lead[i]) {
      throw IngestError("cells file header mismatch: expected \"" + lead[i] +
                        "\", got \"" + header[i] + "\"");
    }
  }
  if (header[header.size() - 2] != "suppressed" ||
      header[header.size() - 1] != "warning") {
    throw IngestError(
        "cells file header must end with suppressed and warning columns");
  }

  MRGrid grid(spec);
  grid.variables.assign(header.begin() + static_cast<std::ptrdiff_t>(lead.size()),
                        header.end() - 2);
  const std::size_t nvars = grid.variables.size();

  std::vector<std::string> row;
  std::int64_t line = 1;
  while (csv::read_row(in, row)) {
    ++line;
    if (row.size() == 1 && row[0].empty()) continue;
    if (row.size() != header.size()) {
      throw IngestError("cells file line " + std::to_string(line) +
                        ": expected " + std::to_string(header.size()) +
                        " fields, got " + std::to_string(row.size()));
    }
    MRGCell cell;
    cell.id = detail::parse_cell_name(row[0], spec);
    const Box b = spec.cell_box(cell.id);
    const auto x_min = detail::parse_number(row[2]);
    const auto y_min = detail::parse_number(row[3]);
    if (!x_min || !y_min || *x_min != b.x_min || *y_min != b.y_min) {
      throw SpecMismatch("cells file line " + std::to_string(line) +
                         ": cell geometry does not match the configured grid "
                         "origin and resolutions");
    }
    cell.suppressed = row[header.size() - 2] == "1";
    cell.warning = row[header.size() - 1] == "1";
    cell.verdict.outcome = cell.suppressed  ? Outcome::fail
                           : cell.warning   ? Outcome::pass_with_warning
                                            : Outcome::pass;
    cell.vars_disclosed.assign(nvars, 0);
    if (!cell.suppressed) {
      const auto count = detail::parse_number(row[6]);
      if (!count) {
        throw IngestError("cells file line " + std::to_string(line) +
                          ": missing count for a disclosed cell");
      }
      cell.count_disclosed = static_cast<std::int64_t>(*count);
      cell.acc.weight_sum = Fixed::from_double(*count);
      cell.acc.vars.resize(nvars);
      for (std::size_t k = 0; k < nvars; ++k) {
        const auto value = detail::parse_number(row[7 + k]);
        if (!value) {
          throw IngestError("cells file line " + std::to_string(line) +
                            ": missing value for a disclosed cell");
        }
        cell.vars_disclosed[k] = static_cast<std::int64_t>(*value);
        // Rebuild the accumulator from the published value: re-rounding a
        // multiple of the base is the identity, so a later post-processing
        // pass reproduces exactly what was published.
        cell.acc.vars[k].total = Fixed::from_double(*value);
      }
    }
    grid.cells.push_back(std::move(cell));
  }
  std::sort(grid.cells.begin(), grid.cells.end(),
            [](const MRGCell& a, const MRGCell& b) { return a.id < b.id; });
  grid.post_processed = true;
  return grid;
}

inline MRGrid read_cells_csv(const std::string& path, const GridSpec& spec) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open cells file: " + path);
  return read_cells_csv(in, spec);
}

}  // namespace mrg
