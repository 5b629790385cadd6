// mrgrid — batch driver for multi-resolution gridding of weighted microdata.
//
// Subcommands:
//   grid      ingest -> multi-resolution grid -> post-process -> outputs
//   ratio     joint gridding of two variables (or match mode against a
//             published grid) followed by a cell-by-cell ratio
//   realloc   single-resolution grid with failing cells merged into
//             neighbors instead of suppressed
//   synth     test population / hot-deck fixture generation
//   validate  parse and check a configuration, touching no data files
//
// Every failure exits non-zero with one machine-readable JSON object on
// stderr: {"category": "config|ingest|engine|io", "message": "..."}.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "mrg/mrg.hpp"

namespace fs = std::filesystem;

namespace {

struct CommonOpts {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path,
                  "Run configuration (JSON file)")
      ->required();
  cmd->add_option("--seed", opts.seed,
                  "Random seed, overriding every seed in the config");
  cmd->add_flag("--quiet", opts.quiet, "Suppress progress output");
}

void say(const CommonOpts& opts, const std::string& line) {
  if (!opts.quiet) std::cout << line << "\n";
}

mrg::RunConfig load_run(const CommonOpts& opts) {
  mrg::RunConfig run = mrg::load_config(opts.config_path);
  if (opts.seed) {
    run.seed = *opts.seed;
    run.ingest.seed = *opts.seed;
  }
  return run;
}

struct LoadedInput {
  mrg::Dataset data;
  mrg::IngestReport report;
  std::string digest;
};

// Digest first: a missing input fails here, before any output is created.
LoadedInput load_input(const mrg::RunConfig& run) {
  if (run.input_path.empty()) {
    throw mrg::ConfigError("this command needs an input section with a path");
  }
  if (!run.grid) {
    throw mrg::ConfigError("this command needs a grid section");
  }
  LoadedInput in;
  in.digest = mrg::digest_file(run.input_path);
  auto [data, report] = mrg::load_records(run.input_path, run.ingest,
                                          *run.grid);
  in.data = std::move(data);
  in.report = std::move(report);
  if (!run.strata_file.empty()) {
    mrg::apply_strata_overrides(in.data, run.strata_file);
  }
  return in;
}

const mrg::OutputConfig& require_output(const mrg::RunConfig& run) {
  if (!run.output) {
    throw mrg::ConfigError("this command needs an output section");
  }
  return *run.output;
}

fs::path prepare_output_dir(const mrg::OutputConfig& out) {
  std::error_code ec;
  fs::create_directories(out.dir, ec);
  if (ec) {
    throw mrg::IoError("cannot create output directory " + out.dir + ": " +
                       ec.message());
  }
  return fs::path(out.dir);
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  const auto elapsed = std::chrono::steady_clock::now() - start;
  return std::chrono::duration<double>(elapsed).count();
}

void write_grid_outputs(const CommonOpts& opts, const mrg::RunConfig& run,
                        const mrg::MRGrid& grid, mrg::json report) {
  const mrg::OutputConfig& out = require_output(run);
  const fs::path dir = prepare_output_dir(out);
  if (out.csv) {
    mrg::write_cells_csv((dir / "cells.csv").string(), grid);
    say(opts, "wrote " + (dir / "cells.csv").string());
  }
  if (out.geojson) {
    mrg::write_json_file((dir / "cells.geojson").string(),
                         mrg::cells_geojson(grid));
    say(opts, "wrote " + (dir / "cells.geojson").string());
  }
  mrg::write_json_file((dir / "report.json").string(), report);
  say(opts, "wrote " + (dir / "report.json").string());
}

std::string grid_summary(const mrg::MRGrid& grid) {
  std::int64_t suppressed = 0;
  std::int64_t warnings = 0;
  for (const mrg::MRGCell& cell : grid.cells) {
    if (cell.suppressed) ++suppressed;
    if (cell.warning) ++warnings;
  }
  return std::to_string(grid.cells.size()) + " cells, " +
         std::to_string(suppressed) + " suppressed, " +
         std::to_string(warnings) + " with warnings";
}

int run_grid(const CommonOpts& opts) {
  const auto start = std::chrono::steady_clock::now();
  const mrg::RunConfig run = load_run(opts);
  require_output(run);
  LoadedInput in = load_input(run);
  say(opts, "read " + std::to_string(in.report.loaded) + " records (" +
                std::to_string(in.report.dropped) + " dropped)");

  mrg::MRGrid grid =
      mrg::post_process(mrg::multi_res_grid(in.data, *run.grid, run.rules));
  grid.seed = run.seed;
  grid.input_digest = in.digest;
  say(opts, grid_summary(grid));

  write_grid_outputs(opts, run, grid,
                     mrg::run_report(grid, &in.report, seconds_since(start)));
  return 0;
}

int run_ratio(const CommonOpts& opts) {
  const auto start = std::chrono::steady_clock::now();
  const mrg::RunConfig run = load_run(opts);
  if (!run.ratio) {
    throw mrg::ConfigError("the ratio command needs a ratio section");
  }
  require_output(run);
  const mrg::RatioConfig& rc = *run.ratio;

  mrg::MRGrid grid(mrg::GridSpec({1}));
  LoadedInput in;
  if (rc.mode == mrg::RatioMode::joint) {
    auto in_list = [&](const std::string& name) {
      return std::find(run.variables.begin(), run.variables.end(), name) !=
             run.variables.end();
    };
    if (!in_list(rc.numerator) || !in_list(rc.denominator)) {
      throw mrg::ConfigError(
          "joint ratio mode needs both ratio variables in the variables "
          "list so they are gridded together");
    }
    in = load_input(run);
    grid =
        mrg::post_process(mrg::multi_res_grid(in.data, *run.grid, run.rules));
  } else {
    if (!run.grid) {
      throw mrg::ConfigError("this command needs a grid section");
    }
    const mrg::MRGrid existing = mrg::read_cells_csv(rc.grid_file, *run.grid);
    in = load_input(run);
    const auto var = std::find(run.variables.begin(), run.variables.end(),
                               rc.numerator);
    if (var == run.variables.end()) {
      throw mrg::ConfigError(
          "match ratio mode needs the numerator in the variables list of "
          "the new input");
    }
    grid = mrg::post_process(mrg::grid_to_match(
        existing, in.data,
        static_cast<std::size_t>(var - run.variables.begin()), run.rules));
  }
  grid.seed = run.seed;
  grid.input_digest = in.digest;
  say(opts, grid_summary(grid));

  const mrg::RatioGrid ratio =
      mrg::ratio_grid(grid, rc.numerator, rc.denominator);
  std::int64_t ratio_suppressed = 0;
  std::int64_t flagged = 0;
  for (const mrg::RatioCell& cell : ratio.cells) {
    if (cell.suppressed) ++ratio_suppressed;
    if (cell.flagged) ++flagged;
  }

  mrg::json report =
      mrg::run_report(grid, &in.report, seconds_since(start));
  mrg::json ratio_report;
  ratio_report["numerator"] = rc.numerator;
  ratio_report["denominator"] = rc.denominator;
  ratio_report["mode"] = rc.mode == mrg::RatioMode::joint ? "joint" : "match";
  ratio_report["cells"] = ratio.cells.size();
  ratio_report["suppressed"] = ratio_suppressed;
  ratio_report["flagged"] = flagged;
  report["ratio"] = std::move(ratio_report);

  const mrg::OutputConfig& out = require_output(run);
  const fs::path dir = prepare_output_dir(out);
  if (out.csv) {
    mrg::write_cells_csv((dir / "cells.csv").string(), grid);
    mrg::write_ratio_csv((dir / "ratio.csv").string(), ratio, grid.spec,
                         rc.places);
    say(opts, "wrote " + (dir / "ratio.csv").string());
  }
  if (out.geojson) {
    mrg::write_json_file((dir / "cells.geojson").string(),
                         mrg::cells_geojson(grid));
    mrg::write_json_file((dir / "ratio.geojson").string(),
                         mrg::ratio_geojson(ratio, grid.spec, rc.places));
    say(opts, "wrote " + (dir / "ratio.geojson").string());
  }
  mrg::write_json_file((dir / "report.json").string(), report);
  say(opts, "wrote " + (dir / "report.json").string());
  return 0;
}

int run_realloc(const CommonOpts& opts) {
  const auto start = std::chrono::steady_clock::now();
  const mrg::RunConfig run = load_run(opts);
  if (!run.realloc) {
    throw mrg::ConfigError("the realloc command needs a realloc section");
  }
  require_output(run);
  const mrg::ReallocConfig& rl = *run.realloc;
  if (rl.strategy == mrg::ReallocStrategy::neighbor &&
      run.ingest.columns.region.empty()) {
    throw mrg::ConfigError(
        "the neighbor strategy needs a region column so values never cross "
        "region boundaries");
  }
  LoadedInput in = load_input(run);
  const mrg::GridSpec& spec = *run.grid;

  int level = 0;
  if (rl.resolution != 0) {
    level = -1;
    for (int l = 0; l < spec.levels(); ++l) {
      if (spec.res_m(l) == rl.resolution) level = l;
    }
    if (level < 0) {
      throw mrg::ConfigError("realloc.resolution " +
                             std::to_string(rl.resolution) +
                             " is not in grid.resolutions");
    }
  }

  const mrg::Evaluator evaluate(run.rules, in.data.strata_info,
                                in.data.var_count());
  std::map<mrg::CellId, mrg::CellAcc> cells = mrg::build_base_grid(
      in.data, spec, level, run.rules.reliability_enabled);

  // Conservation bookkeeping, asserted in the report.
  mrg::Fixed weight_before;
  std::vector<mrg::Fixed> totals_before(in.data.var_count());
  for (const auto& [id, acc] : cells) {
    weight_before += acc.weight_sum;
    for (std::size_t k = 0; k < acc.vars.size(); ++k) {
      totals_before[k] += acc.vars[k].total;
    }
  }

  mrg::ReallocStats stats;
  if (rl.strategy == mrg::ReallocStrategy::blocks) {
    stats = mrg::realloc_blocks(cells, spec, evaluate, rl.passes);
  } else {
    auto regions = mrg::cell_regions(in.data, spec, level);
    stats = mrg::realloc_neighbor(cells, regions, evaluate, run.seed,
                                  rl.max_radius);
  }

  mrg::Fixed weight_after;
  std::vector<mrg::Fixed> totals_after(in.data.var_count());
  mrg::MRGrid grid(spec);
  grid.rules = run.rules;
  grid.variables = in.data.variables;
  for (auto& [id, acc] : cells) {
    weight_after += acc.weight_sum;
    for (std::size_t k = 0; k < acc.vars.size(); ++k) {
      totals_after[k] += acc.vars[k].total;
    }
    mrg::MRGCell cell;
    cell.id = id;
    cell.verdict = evaluate(acc);
    cell.acc = std::move(acc);
    grid.cells.push_back(std::move(cell));
  }
  grid = mrg::post_process(std::move(grid));
  grid.seed = run.seed;
  grid.input_digest = in.digest;

  bool conserved = weight_before == weight_after;
  for (std::size_t k = 0; k < totals_before.size(); ++k) {
    if (!(totals_before[k] == totals_after[k])) conserved = false;
  }
  say(opts, "moved " + std::to_string(stats.moved) + " cells, " +
                std::to_string(stats.unresolved) + " unresolved; " +
                grid_summary(grid));

  mrg::json report =
      mrg::run_report(grid, &in.report, seconds_since(start));
  mrg::json realloc_report;
  realloc_report["strategy"] =
      rl.strategy == mrg::ReallocStrategy::blocks ? "blocks" : "neighbor";
  realloc_report["resolution"] = spec.res_m(level);
  realloc_report["moved"] = stats.moved;
  realloc_report["unresolved"] = stats.unresolved;
  realloc_report["conserved"] = conserved;
  realloc_report["weighted_count_total"] = weight_before.to_double();
  report["realloc"] = std::move(realloc_report);
  write_grid_outputs(opts, run, grid, std::move(report));
  if (!conserved) {
    throw mrg::EngineError("reallocation failed to conserve totals");
  }
  return 0;
}

int run_synth(const CommonOpts& opts) {
  const mrg::RunConfig run = load_run(opts);
  if (!run.synth) {
    throw mrg::ConfigError("the synth command needs a synth section");
  }
  const mrg::SynthConfig& sy = *run.synth;
  if (sy.mode == mrg::SynthMode::population) {
    mrg::PopulationParams params;
    params.clusters = sy.clusters;
    params.points_per_cluster = sy.points_per_cluster;
    params.spread = sy.spread;
    params.bbox = mrg::Box{sy.bbox[0], sy.bbox[1], sy.bbox[2], sy.bbox[3]};
    params.value_mu = sy.value_mu;
    params.value_sigma = sy.value_sigma;
    params.strata = sy.strata;
    params.sampling_fraction = sy.sampling_fraction;
    params.seed = run.seed;
    const auto rows = mrg::make_test_population(params);
    mrg::write_population_csv(sy.out, rows);
    say(opts, "wrote " + std::to_string(rows.size()) + " records to " +
                  sy.out);
  } else {
    if (run.input_path.empty()) {
      throw mrg::ConfigError(
          "hot-deck synthesis needs an input section with a path");
    }
    if (sy.group_by.empty()) {
      throw mrg::ConfigError("hot-deck synthesis needs synth.group_by");
    }
    const mrg::Table input = mrg::read_table(run.input_path);
    const mrg::Table output =
        mrg::hotdeck_synthesize(input, sy.group_by, sy.value_columns,
                                run.seed);
    mrg::write_table(sy.out, output);
    say(opts, "wrote " + std::to_string(output.rows.size()) +
                  " synthetic records to " + sy.out);
  }
  return 0;
}

int run_validate(const CommonOpts& opts) {
  const mrg::RunConfig run = load_run(opts);
  std::string summary = "configuration OK";
  if (run.grid) {
    summary += "; grid levels: " + std::to_string(run.grid->levels());
  }
  summary += "; variables: " + std::to_string(run.variables.size());
  say(opts, summary);
  return 0;
}

int fail_with(mrg::ErrorCategory category, const std::string& message) {
  mrg::json err;
  err["category"] = mrg::to_string(category);
  err["message"] = message;
  std::cerr << err.dump() << "\n";
  return mrg::exit_code(category);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-resolution gridding of weighted microdata under "
               "statistical disclosure control"};
  app.require_subcommand(1);

  CommonOpts opts;
  CLI::App* grid = app.add_subcommand(
      "grid", "Build the multi-resolution grid and write cells + report");
  CLI::App* ratio = app.add_subcommand(
      "ratio", "Grid two variables and publish their cell-by-cell ratio");
  CLI::App* realloc_cmd = app.add_subcommand(
      "realloc", "Single-resolution grid with failing cells reallocated");
  CLI::App* synth = app.add_subcommand(
      "synth", "Generate a test population or hot-deck synthetic file");
  CLI::App* validate = app.add_subcommand(
      "validate", "Check a configuration without touching any data");
  for (CLI::App* cmd : {grid, ratio, realloc_cmd, synth, validate}) {
    add_common(cmd, opts);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (grid->parsed()) return run_grid(opts);
    if (ratio->parsed()) return run_ratio(opts);
    if (realloc_cmd->parsed()) return run_realloc(opts);
    if (synth->parsed()) return run_synth(opts);
    if (validate->parsed()) return run_validate(opts);
  } catch (const mrg::Error& e) {
    return fail_with(e.category(), e.what());
  } catch (const std::exception& e) {
    return fail_with(mrg::ErrorCategory::engine, e.what());
  }
  return 0;
}
