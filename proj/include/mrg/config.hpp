#pragma once

#include <cctype>
#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mrg/errors.hpp"
#include "mrg/fixed.hpp"
#include "mrg/grid.hpp"
#include "mrg/ingest.hpp"
#include "mrg/rules.hpp"

namespace mrg {

struct OutputConfig {
  std::string dir;
  bool csv = true;
  bool geojson = true;
};

enum class RatioMode { joint, match };

struct RatioConfig {
  std::string numerator;
  std::string denominator;
  RatioMode mode = RatioMode::joint;
  std::string grid_file;  // published cells CSV, match mode only
  int places = 3;
};

enum class ReallocStrategy { blocks, neighbor };

struct ReallocConfig {
  ReallocStrategy strategy = ReallocStrategy::blocks;
  std::int64_t resolution = 0;  // 0 means the finest configured resolution
  int passes = 1;               // blocks strategy
  int max_radius = 5;           // neighbor strategy
};

enum class SynthMode { population, hotdeck };

struct SynthConfig {
  SynthMode mode = SynthMode::population;
  std::string out;
  // population mode
  int clusters = 12;
  int points_per_cluster = 150;
  double spread = 800.0;
  double bbox[4] = {0.0, 0.0, 16000.0, 16000.0};
  double value_mu = 2.5;
  double value_sigma = 0.8;
  int strata = 4;
  double sampling_fraction = 1.0;
  // hotdeck mode
  std::vector<std::string> group_by;
  std::vector<std::string> value_columns;
};

struct RunConfig {
  std::string input_path;
  IngestConfig ingest;
  std::optional<GridSpec> grid;
  RuleConfig rules;
  std::vector<std::string> variables;
  std::optional<OutputConfig> output;
  std::string strata_file;
  std::uint64_t seed = 0;
  std::optional<RatioConfig> ratio;
  std::optional<ReallocConfig> realloc;
  std::optional<SynthConfig> synth;
};

namespace cfg {

using nlohmann::ordered_json;

inline void check_keys(const ordered_json& node,
                       std::initializer_list<const char*> allowed,
                       const std::string& where) {
  for (const auto& item : node.items()) {
    bool known = false;
    for (const char* key : allowed) {
      if (item.key() == key) {
        known = true;
        break;
      }
    }
    if (!known) {
      throw ConfigError("unknown key \"" + item.key() + "\" in " + where);
    }
  }
}

inline const ordered_json& require(const ordered_json& node,
                                   const std::string& key,
                                   const std::string& where) {
  const auto it = node.find(key);
  if (it == node.end()) {
    throw ConfigError("missing key \"" + key + "\" in " + where);
  }
  return *it;
}

inline std::string as_string(const ordered_json& node,
                             const std::string& where) {
  if (!node.is_string()) {
    throw ConfigError(where + " must be a string");
  }
  return node.get<std::string>();
}

inline double as_number(const ordered_json& node, const std::string& where) {
  if (!node.is_number()) {
    throw ConfigError(where + " must be a number");
  }
  return node.get<double>();
}

inline std::int64_t as_int(const ordered_json& node, const std::string& where) {
  if (!node.is_number_integer()) {
    throw ConfigError(where + " must be an integer");
  }
  return node.get<std::int64_t>();
}

inline bool as_bool(const ordered_json& node, const std::string& where) {
  if (!node.is_boolean()) {
    throw ConfigError(where + " must be true or false");
  }
  return node.get<bool>();
}

inline std::vector<std::string> as_string_list(const ordered_json& node,
                                               const std::string& where) {
  if (!node.is_array()) {
    throw ConfigError(where + " must be a list of strings");
  }
  std::vector<std::string> out;
  for (const auto& item : node) {
    out.push_back(as_string(item, "entries of " + where));
  }
  return out;
}

inline std::string upper(std::string s) {
  for (char& c : s) {
    c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  }
  return s;
}

inline void parse_input(const ordered_json& node, RunConfig& run) {
  check_keys(node, {"path", "columns", "loc_adjust", "max_bad_fraction"},
             "input");
  run.input_path = as_string(require(node, "path", "input"), "input.path");
  const ordered_json& columns = require(node, "columns", "input");
  if (!columns.is_object()) {
    throw ConfigError("input.columns must be an object");
  }
  check_keys(columns, {"id", "x", "y", "geo_lct", "weight", "stratum",
                       "region"},
             "input.columns");
  ColumnMap& map = run.ingest.columns;
  map.id = as_string(require(columns, "id", "input.columns"),
                     "input.columns.id");
  auto optional_column = [&](const char* key, std::string& target) {
    const auto it = columns.find(key);
    if (it != columns.end()) {
      target = as_string(*it, std::string("input.columns.") + key);
    }
  };
  optional_column("x", map.x);
  optional_column("y", map.y);
  optional_column("geo_lct", map.geo_lct);
  optional_column("weight", map.weight);
  optional_column("stratum", map.stratum);
  optional_column("region", map.region);

  // Default adjustment: encoded locations name a cell corner and need the
  // center shift; exact coordinates pass through untouched.
  run.ingest.loc_adjust =
      map.geo_lct.empty() ? LocAdjust::none : LocAdjust::lower_left;
  const auto adj = node.find("loc_adjust");
  if (adj != node.end()) {
    if (!adj->is_object()) {
      throw ConfigError("input.loc_adjust must be an object");
    }
    check_keys(*adj, {"mode", "seed"}, "input.loc_adjust");
    const auto mode = adj->find("mode");
    if (mode != adj->end()) {
      run.ingest.loc_adjust =
          parse_loc_adjust(as_string(*mode, "input.loc_adjust.mode"));
    }
    const auto seed = adj->find("seed");
    if (seed != adj->end()) {
      run.ingest.seed = static_cast<std::uint64_t>(
          as_int(*seed, "input.loc_adjust.seed"));
    }
  }
  const auto bad = node.find("max_bad_fraction");
  if (bad != node.end()) {
    run.ingest.max_bad_fraction = as_number(*bad, "input.max_bad_fraction");
  }
}

inline void parse_grid(const ordered_json& node, RunConfig& run) {
  check_keys(node, {"origin", "crs", "resolutions"}, "grid");
  Point origin{0.0, 0.0};
  const auto org = node.find("origin");
  if (org != node.end()) {
    if (!org->is_array() || org->size() != 2) {
      throw ConfigError("grid.origin must be [x, y]");
    }
    origin.x = as_number((*org)[0], "grid.origin[0]");
    origin.y = as_number((*org)[1], "grid.origin[1]");
  }
  int crs = 3035;
  const auto crs_it = node.find("crs");
  if (crs_it != node.end()) {
    crs = static_cast<int>(as_int(*crs_it, "grid.crs"));
  }
  const ordered_json& res = require(node, "resolutions", "grid");
  if (!res.is_array() || res.empty()) {
    throw ConfigError("grid.resolutions must be a non-empty list of meters");
  }
  std::vector<std::int64_t> ladder;
  for (const auto& item : res) {
    ladder.push_back(as_int(item, "entries of grid.resolutions"));
  }
  try {
    run.grid.emplace(origin, crs, std::move(ladder));
  } catch (const GridError& e) {
    throw ConfigError(std::string("grid.resolutions: ") + e.what());
  }
}

inline void parse_rules(const ordered_json& node, RunConfig& run) {
  check_keys(node,
             {"mincount", "dominance_weight_floor", "dominance_share",
              "cv_fail", "cv_warn", "reliability", "confrules", "suppresslim",
              "rounding_base"},
             "rules");
  RuleConfig& rules = run.rules;
  auto number = [&](const char* key, auto&& apply) {
    const auto it = node.find(key);
    if (it != node.end()) apply(as_number(*it, std::string("rules.") + key));
  };
  number("mincount", [&](double v) { rules.mincount = Fixed::from_double(v); });
  number("dominance_weight_floor", [&](double v) {
    rules.dominance_weight_floor = Fixed::from_double(v);
  });
  number("dominance_share",
         [&](double v) { rules.dominance_share = Fixed::from_double(v); });
  number("cv_fail", [&](double v) { rules.cv_fail = v; });
  number("cv_warn", [&](double v) { rules.cv_warn = v; });
  number("suppresslim",
         [&](double v) { rules.suppresslim = Fixed::from_double(v); });
  const auto reliability = node.find("reliability");
  if (reliability != node.end()) {
    rules.reliability_enabled = as_bool(*reliability, "rules.reliability");
  }
  const auto confrules = node.find("confrules");
  if (confrules != node.end()) {
    const std::string mode = upper(as_string(*confrules, "rules.confrules"));
    if (mode == "INDIVIDUAL") {
      rules.confrules = Confrules::individual;
    } else if (mode == "FIRST-ONLY" || mode == "FIRST_ONLY") {
      rules.confrules = Confrules::first_only;
    } else {
      throw ConfigError(
          "rules.confrules must be INDIVIDUAL or FIRST-ONLY, got \"" +
          as_string(*confrules, "rules.confrules") + "\"");
    }
  }
  const auto base = node.find("rounding_base");
  if (base != node.end()) {
    rules.rounding_base = as_int(*base, "rules.rounding_base");
  }
  rules.validate();
}

inline void parse_output(const ordered_json& node, RunConfig& run) {
  check_keys(node, {"dir", "formats"}, "output");
  OutputConfig out;
  out.dir = as_string(require(node, "dir", "output"), "output.dir");
  const auto formats = node.find("formats");
  if (formats != node.end()) {
    const auto list = as_string_list(*formats, "output.formats");
    if (list.empty()) {
      throw ConfigError("output.formats must not be empty");
    }
    out.csv = false;
    out.geojson = false;
    for (const std::string& format : list) {
      if (format == "csv") {
        out.csv = true;
      } else if (format == "geojson") {
        out.geojson = true;
      } else {
        throw ConfigError("output.formats entries must be csv or geojson, "
                          "got \"" +
                          format + "\"");
      }
    }
  }
  run.output = std::move(out);
}

inline void parse_ratio(const ordered_json& node, RunConfig& run) {
  check_keys(node, {"numerator", "denominator", "mode", "grid", "places"},
             "ratio");
  RatioConfig ratio;
  ratio.numerator =
      as_string(require(node, "numerator", "ratio"), "ratio.numerator");
  ratio.denominator =
      as_string(require(node, "denominator", "ratio"), "ratio.denominator");
  const auto mode = node.find("mode");
  if (mode != node.end()) {
    const std::string text = as_string(*mode, "ratio.mode");
    if (text == "joint") {
      ratio.mode = RatioMode::joint;
    } else if (text == "match") {
      ratio.mode = RatioMode::match;
    } else {
      throw ConfigError("ratio.mode must be joint or match, got \"" + text +
                        "\"");
    }
  }
  const auto grid_file = node.find("grid");
  if (grid_file != node.end()) {
    ratio.grid_file = as_string(*grid_file, "ratio.grid");
  }
  if (ratio.mode == RatioMode::match && ratio.grid_file.empty()) {
    throw ConfigError("ratio.mode match needs ratio.grid (a cells CSV path)");
  }
  const auto places = node.find("places");
  if (places != node.end()) {
    ratio.places = static_cast<int>(as_int(*places, "ratio.places"));
    if (ratio.places < 0 || ratio.places > 12) {
      throw ConfigError("ratio.places must lie in [0, 12]");
    }
  }
  run.ratio = std::move(ratio);
}

inline void parse_realloc(const ordered_json& node, RunConfig& run) {
  check_keys(node, {"strategy", "resolution", "passes", "max_radius"},
             "realloc");
  ReallocConfig re;
  const std::string strategy =
      as_string(require(node, "strategy", "realloc"), "realloc.strategy");
  if (strategy == "blocks") {
    re.strategy = ReallocStrategy::blocks;
  } else if (strategy == "neighbor") {
    re.strategy = ReallocStrategy::neighbor;
  } else {
    throw ConfigError("realloc.strategy must be blocks or neighbor, got \"" +
                      strategy + "\"");
  }
  const auto resolution = node.find("resolution");
  if (resolution != node.end()) {
    re.resolution = as_int(*resolution, "realloc.resolution");
  }
  const auto passes = node.find("passes");
  if (passes != node.end()) {
    re.passes = static_cast<int>(as_int(*passes, "realloc.passes"));
    if (re.passes < 1) throw ConfigError("realloc.passes must be at least 1");
  }
  const auto radius = node.find("max_radius");
  if (radius != node.end()) {
    re.max_radius = static_cast<int>(as_int(*radius, "realloc.max_radius"));
    if (re.max_radius < 1) {
      throw ConfigError("realloc.max_radius must be at least 1");
    }
  }
  run.realloc = re;
}

inline void parse_synth(const ordered_json& node, RunConfig& run) {
  check_keys(node,
             {"mode", "out", "clusters", "points_per_cluster", "spread",
              "bbox", "value_mu", "value_sigma", "strata", "sampling_fraction",
              "group_by", "value_columns"},
             "synth");
  SynthConfig synth;
  const auto mode = node.find("mode");
  if (mode != node.end()) {
    const std::string text = as_string(*mode, "synth.mode");
    if (text == "population") {
      synth.mode = SynthMode::population;
    } else if (text == "hotdeck") {
      synth.mode = SynthMode::hotdeck;
    } else {
      throw ConfigError("synth.mode must be population or hotdeck, got \"" +
                        text + "\"");
    }
  }
  synth.out = as_string(require(node, "out", "synth"), "synth.out");
  auto number = [&](const char* key, auto&& apply) {
    const auto it = node.find(key);
    if (it != node.end()) apply(as_number(*it, std::string("synth.") + key));
  };
  auto integer = [&](const char* key, int& target) {
    const auto it = node.find(key);
    if (it != node.end()) {
      target = static_cast<int>(as_int(*it, std::string("synth.") + key));
    }
  };
  integer("clusters", synth.clusters);
  integer("points_per_cluster", synth.points_per_cluster);
  integer("strata", synth.strata);
  number("spread", [&](double v) { synth.spread = v; });
  number("value_mu", [&](double v) { synth.value_mu = v; });
  number("value_sigma", [&](double v) { synth.value_sigma = v; });
  number("sampling_fraction", [&](double v) { synth.sampling_fraction = v; });
  const auto bbox = node.find("bbox");
  if (bbox != node.end()) {
    if (!bbox->is_array() || bbox->size() != 4) {
      throw ConfigError("synth.bbox must be [x_min, y_min, x_max, y_max]");
    }
    for (int i = 0; i < 4; ++i) {
      synth.bbox[i] = as_number((*bbox)[i], "entries of synth.bbox");
    }
  }
  const auto group_by = node.find("group_by");
  if (group_by != node.end()) {
    synth.group_by = as_string_list(*group_by, "synth.group_by");
  }
  const auto value_columns = node.find("value_columns");
  if (value_columns != node.end()) {
    synth.value_columns = as_string_list(*value_columns, "synth.value_columns");
  }
  run.synth = std::move(synth);
}

}  // namespace cfg

/**
 * Parses a run configuration. Unknown keys are rejected at every level so a
 * typo cannot silently fall back to a default; parameter ranges are checked
 * here (and again by RuleConfig::validate) before any file is touched.
 */
inline RunConfig parse_config(const cfg::ordered_json& root) {
  if (!root.is_object()) {
    throw ConfigError("configuration root must be a JSON object");
  }
  cfg::check_keys(root,
                  {"input", "grid", "rules", "variables", "output",
                   "strata_file", "seed", "ratio", "realloc", "synth"},
                  "configuration");
  RunConfig run;
  const auto seed = root.find("seed");
  if (seed != root.end()) {
    run.seed = static_cast<std::uint64_t>(cfg::as_int(*seed, "seed"));
    run.ingest.seed = run.seed;
  }
  const auto variables = root.find("variables");
  if (variables != root.end()) {
    run.variables = cfg::as_string_list(*variables, "variables");
    run.ingest.columns.variables = run.variables;
  }
  const auto input = root.find("input");
  if (input != root.end()) {
    if (!input->is_object()) throw ConfigError("input must be an object");
    cfg::parse_input(*input, run);
  }
  const auto grid = root.find("grid");
  if (grid != root.end()) {
    if (!grid->is_object()) throw ConfigError("grid must be an object");
    cfg::parse_grid(*grid, run);
  }
  const auto rules = root.find("rules");
  if (rules != root.end()) {
    if (!rules->is_object()) throw ConfigError("rules must be an object");
    cfg::parse_rules(*rules, run);
  }
  const auto output = root.find("output");
  if (output != root.end()) {
    if (!output->is_object()) throw ConfigError("output must be an object");
    cfg::parse_output(*output, run);
  }
  const auto strata = root.find("strata_file");
  if (strata != root.end()) {
    run.strata_file = cfg::as_string(*strata, "strata_file");
  }
  const auto ratio = root.find("ratio");
  if (ratio != root.end()) {
    if (!ratio->is_object()) throw ConfigError("ratio must be an object");
    cfg::parse_ratio(*ratio, run);
  }
  const auto realloc = root.find("realloc");
  if (realloc != root.end()) {
    if (!realloc->is_object()) throw ConfigError("realloc must be an object");
    cfg::parse_realloc(*realloc, run);
  }
  const auto synth = root.find("synth");
  if (synth != root.end()) {
    if (!synth->is_object()) throw ConfigError("synth must be an object");
    cfg::parse_synth(*synth, run);
  }
  return run;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file: " + path);
  cfg::ordered_json root;
  try {
    root = cfg::ordered_json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config file " + path + " is not valid JSON: " +
                      e.what());
  }
  return parse_config(root);
}

}  // namespace mrg
