#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mrg/ingest.hpp"

using mrg::adjust_location;
using mrg::ColumnMap;
using mrg::ConfigError;
using mrg::Dataset;
using mrg::format_geo_lct;
using mrg::GeoLct;
using mrg::GeoLctMalformed;
using mrg::GridSpec;
using mrg::IngestConfig;
using mrg::IngestError;
using mrg::IngestReport;
using mrg::load_records;
using mrg::LocAdjust;
using mrg::MissingColumn;
using mrg::parse_geo_lct;
using mrg::parse_loc_adjust;
using mrg::Point;

namespace {

IngestConfig xy_config() {
  IngestConfig cfg;
  cfg.columns.id = "holding_id";
  cfg.columns.x = "x";
  cfg.columns.y = "y";
  cfg.columns.weight = "weight";
  cfg.columns.variables = {"UAA"};
  cfg.loc_adjust = LocAdjust::none;
  return cfg;
}

std::pair<Dataset, IngestReport> load_text(const std::string& text,
                                           const IngestConfig& cfg,
                                           const GridSpec& spec) {
  std::istringstream in(text);
  return load_records(in, cfg, spec);
}

}  // namespace

TEST_CASE("encoded grid locations parse into corner, resolution and CRS") {
  const GeoLct g = parse_geo_lct("DK_CRS3035RES1000mN3445000E4334000");
  CHECK(g.country == "DK");
  CHECK(g.crs == 3035);
  CHECK(g.res_m == 1000);
  CHECK(g.northing == 3445000);
  CHECK(g.easting == 4334000);
  CHECK(g.point().x == 4334000.0);
  CHECK(g.point().y == 3445000.0);
}

TEST_CASE("country prefix and separator are optional") {
  const GeoLct bare = parse_geo_lct("CRS3035RES1000mN0E0");
  CHECK(bare.country.empty());
  CHECK(bare.crs == 3035);
  CHECK(bare.res_m == 1000);
  CHECK(bare.point().x == 0.0);
  CHECK(bare.point().y == 0.0);

  const GeoLct fused = parse_geo_lct("DKCRS3035RES500mN100E200");
  CHECK(fused.country == "DK");
  CHECK(fused.res_m == 500);
  CHECK(fused.easting == 200);
}

TEST_CASE("letter markers match case-insensitively") {
  const GeoLct g = parse_geo_lct("dk_crs3035res1000mn3445000e4334000");
  CHECK(g.country == "dk");
  CHECK(g.crs == 3035);
  CHECK(g.easting == 4334000);
  CHECK(g.northing == 3445000);
}

TEST_CASE("malformed locations report the first unparseable offset") {
  try {
    parse_geo_lct("DK_FOO123");
    FAIL("expected GeoLctMalformed");
  } catch (const GeoLctMalformed& e) {
    CHECK(e.position() == 3);
    CHECK(std::string(e.what()).find("FOO") != std::string::npos);
  }

  CHECK_THROWS_AS(parse_geo_lct(""), GeoLctMalformed);
  CHECK_THROWS_AS(parse_geo_lct("DK_"), GeoLctMalformed);
  CHECK_THROWS_AS(parse_geo_lct("123CRS3035RES1mN0E0"), GeoLctMalformed);
  CHECK_THROWS_AS(parse_geo_lct("CRS3035RES1000m"), GeoLctMalformed);
  CHECK_THROWS_AS(parse_geo_lct("CRS3035RES1000mN0"), GeoLctMalformed);
  CHECK_THROWS_AS(parse_geo_lct("CRS3035RES1000mN0E0X"), GeoLctMalformed);
  CHECK_THROWS_AS(parse_geo_lct("CRSRES1000mN0E0"), GeoLctMalformed);
}

TEST_CASE("formatter and parser round-trip") {
  const std::vector<GeoLct> cases = {
      {"DK", 3035, 1000, 3445000, 4334000},
      {"", 3035, 1000, 0, 0},
      {"AT", 3416, 500, 12345, 67890},
      {"EL", 3035, 100000, 2600000, 4900000},
  };
  for (const GeoLct& g : cases) {
    CHECK(parse_geo_lct(format_geo_lct(g)) == g);
  }
  CHECK(format_geo_lct(cases[0]) == "DK_CRS3035RES1000mN3445000E4334000");
  CHECK(format_geo_lct(cases[1]) == "CRS3035RES1000mN0E0");
}

TEST_CASE("corner modes shift to the reported cell center") {
  std::mt19937_64 rng(1);
  const Point ll = adjust_location({4334000, 3445000}, 1000,
                                   LocAdjust::lower_left, rng);
  CHECK(ll.x == 4334500.0);
  CHECK(ll.y == 3445500.0);

  const Point ur = adjust_location({0, 0}, 1000, LocAdjust::upper_right, rng);
  CHECK(ur.x == -500.0);
  CHECK(ur.y == -500.0);

  const Point lr = adjust_location({1000, 1000}, 500,
                                   LocAdjust::lower_right, rng);
  CHECK(lr.x == 750.0);
  CHECK(lr.y == 1250.0);

  const Point ul = adjust_location({1000, 1000}, 500,
                                   LocAdjust::upper_left, rng);
  CHECK(ul.x == 1250.0);
  CHECK(ul.y == 750.0);
}

TEST_CASE("jitter is deterministic per seed and stays inside the open cell") {
  std::mt19937_64 a(42);
  std::mt19937_64 b(42);
  const Point pa = adjust_location({1000, 2000}, 1000, LocAdjust::jitter, a);
  const Point pb = adjust_location({1000, 2000}, 1000, LocAdjust::jitter, b);
  CHECK(pa.x == pb.x);
  CHECK(pa.y == pb.y);

  std::mt19937_64 rng(7);
  for (int i = 0; i < 2000; ++i) {
    const Point p = adjust_location({0, 0}, 1000, LocAdjust::jitter, rng);
    CHECK(std::abs(p.x) < 500.0);
    CHECK(std::abs(p.y) < 500.0);
    CHECK(p.x != 0.0);
    CHECK(p.y != 0.0);
  }
}

TEST_CASE("non-positive reported resolution is rejected unless mode is NONE") {
  std::mt19937_64 rng(1);
  CHECK_THROWS_AS(adjust_location({1, 1}, 0, LocAdjust::lower_left, rng),
                  mrg::BadResolution);
  CHECK_THROWS_AS(adjust_location({1, 1}, -100, LocAdjust::jitter, rng),
                  mrg::BadResolution);
  const Point p = adjust_location({1, 1}, 0, LocAdjust::none, rng);
  CHECK(p.x == 1.0);
  CHECK(p.y == 1.0);
}

TEST_CASE("adjustment mode names parse case-insensitively") {
  CHECK(parse_loc_adjust("LL") == LocAdjust::lower_left);
  CHECK(parse_loc_adjust("lr") == LocAdjust::lower_right);
  CHECK(parse_loc_adjust("Ul") == LocAdjust::upper_left);
  CHECK(parse_loc_adjust("UR") == LocAdjust::upper_right);
  CHECK(parse_loc_adjust("jitter") == LocAdjust::jitter);
  CHECK(parse_loc_adjust("None") == LocAdjust::none);
  CHECK_THROWS_AS(parse_loc_adjust("middle"), ConfigError);
  CHECK(mrg::to_string(LocAdjust::jitter) == "JITTER");
}

TEST_CASE("a clean coordinate CSV loads every row") {
  const GridSpec spec({1000, 2000});
  const std::string text =
      "holding_id,x,y,weight,UAA\n"
      "H1,250.5,250.5,2,10\n"
      "H2,1250.5,250.5,3,4\n"
      "H3,250.5,1250.5,1,0.25\n";
  const auto [d, report] = load_text(text, xy_config(), spec);
  CHECK(report.rows_read == 3);
  CHECK(report.loaded == 3);
  CHECK(report.dropped == 0);
  REQUIRE(d.records.size() == 3);
  CHECK(d.records[0].id == "H1");
  CHECK(d.records[0].weight.to_double() == 2.0);
  CHECK(d.value(0, 0).to_double() == 10.0);
  CHECK(d.value(2, 0).to_double() == 0.25);
  CHECK(d.records[1].xy.x == 1250.5);
  // Unconfigured stratum and region collapse to one interned label.
  REQUIRE(d.strata.size() == 1);
  CHECK(d.strata_info[0].n_h == 3);
  CHECK(d.strata_info[0].N_h == 6.0);  // weight sum default
}

TEST_CASE("a configured but absent column aborts immediately") {
  const GridSpec spec({1000});
  IngestConfig cfg = xy_config();
  cfg.columns.weight = "EXT_CORE";
  const std::string text =
      "holding_id,x,y,UAA\n"
      "H1,250.5,250.5,10\n";
  try {
    load_text(text, cfg, spec);
    FAIL("expected MissingColumn");
  } catch (const MissingColumn& e) {
    CHECK(e.name() == "EXT_CORE");
  }
}

TEST_CASE("a negative value drops only its row") {
  const GridSpec spec({1000});
  IngestConfig cfg = xy_config();
  cfg.max_bad_fraction = 0.5;  // keep the tiny fixture under the abort limit
  const std::string text =
      "holding_id,x,y,weight,UAA\n"
      "H1,250.5,250.5,1,10\n"
      "H2,350.5,250.5,1,-3\n"
      "H3,450.5,250.5,1,7\n";
  const auto [d, report] = load_text(text, cfg, spec);
  CHECK(report.rows_read == 3);
  CHECK(report.loaded == 2);
  CHECK(report.dropped == 1);
  CHECK(report.drop_reasons.at("negative_value") == 1);
  REQUIRE(d.records.size() == 2);
  CHECK(d.records[1].id == "H3");
}

TEST_CASE("one bad row in two hundred stays under the default abort limit") {
  const GridSpec spec({1000});
  std::ostringstream text;
  text << "holding_id,x,y,weight,UAA\n";
  for (int i = 0; i < 200; ++i) {
    const double x = 100.5 + 3.0 * i;
    if (i == 57) {
      text << "H" << i << "," << x << ",500.5,1,-1\n";  // negative value
    } else {
      text << "H" << i << "," << x << ",500.5,1,2\n";
    }
  }
  const auto [d, report] = load_text(text.str(), xy_config(), spec);
  CHECK(report.rows_read == 200);
  CHECK(report.dropped == 1);
  CHECK(report.loaded == 199);
}

TEST_CASE("the run aborts when too many rows are unreadable") {
  const GridSpec spec({1000});
  std::ostringstream text;
  text << "holding_id,x,y,weight,UAA\n";
  for (int i = 0; i < 10; ++i) {
    if (i < 5) {
      text << "H" << i << ",abc,500.5,1,2\n";  // unreadable coordinate
    } else {
      text << "H" << i << "," << (100.5 + i) << ",500.5,1,2\n";
    }
  }
  CHECK_THROWS_AS(load_text(text.str(), xy_config(), spec), IngestError);
}

TEST_CASE("empty weight defaults to one and empty values to zero, counted") {
  const GridSpec spec({1000});
  IngestConfig cfg = xy_config();
  const std::string text =
      "holding_id,x,y,weight,UAA\n"
      "H1,250.5,250.5,,10\n"
      "H2,350.5,250.5,2,\n";
  const auto [d, report] = load_text(text, cfg, spec);
  CHECK(report.dropped == 0);
  CHECK(report.missing_weight == 1);
  CHECK(report.missing_values.at("UAA") == 1);
  CHECK(d.records[0].weight.to_double() == 1.0);
  CHECK(d.value(1, 0).to_double() == 0.0);
}

TEST_CASE("without a weight column every record is census weight one") {
  const GridSpec spec({1000});
  IngestConfig cfg = xy_config();
  cfg.columns.weight.clear();
  const std::string text =
      "holding_id,x,y,UAA\n"
      "H1,250.5,250.5,10\n"
      "H2,350.5,250.5,4\n";
  const auto [d, report] = load_text(text, cfg, spec);
  CHECK(report.missing_weight == 0);
  CHECK(d.records[0].weight.to_double() == 1.0);
  CHECK(d.records[1].weight.to_double() == 1.0);
}

TEST_CASE("points on any configured grid line are dropped") {
  const GridSpec spec({500, 1000});
  IngestConfig cfg = xy_config();
  cfg.max_bad_fraction = 1.0;
  const std::string text =
      "holding_id,x,y,weight,UAA\n"
      "H1,500,250.5,1,1\n"     // on the 500 m line (and x of a 1000 m line? no: 500 % 1000 != 0)
      "H2,250.5,2000,1,1\n"    // on both lines in y
      "H3,250.5,250.5,1,1\n";
  const auto [d, report] = load_text(text, cfg, spec);
  CHECK(report.dropped == 2);
  CHECK(report.drop_reasons.at("on_border") == 2);
  REQUIRE(d.records.size() == 1);
  CHECK(d.records[0].id == "H3");
}

TEST_CASE("encoded locations load with corner adjustment and CRS check") {
  const GridSpec spec({1000, 2000});
  IngestConfig cfg;
  cfg.columns.id = "holding_id";
  cfg.columns.geo_lct = "GEO_LCT";
  cfg.columns.variables = {"UAA"};
  cfg.loc_adjust = LocAdjust::lower_left;
  cfg.max_bad_fraction = 1.0;
  const std::string text =
      "holding_id,GEO_LCT,UAA\n"
      "H1,DK_CRS3035RES500mN0E0,5\n"
      "H2,DK_CRS4326RES500mN0E0,5\n"
      "H3,not-a-location,5\n"
      "H4,DK_CRS3035RES500mN2000E3000,5\n";
  const auto [d, report] = load_text(text, cfg, spec);
  CHECK(report.dropped == 2);
  CHECK(report.drop_reasons.at("crs_mismatch") == 1);
  CHECK(report.drop_reasons.at("bad_location") == 1);
  REQUIRE(d.records.size() == 2);
  CHECK(d.records[0].xy.x == 250.0);
  CHECK(d.records[0].xy.y == 250.0);
  CHECK(d.records[1].xy.x == 3250.0);
  CHECK(d.records[1].xy.y == 2250.0);
}

TEST_CASE("jittered ingest is deterministic per seed") {
  const GridSpec spec({1000});
  IngestConfig cfg;
  cfg.columns.id = "holding_id";
  cfg.columns.geo_lct = "GEO_LCT";
  cfg.columns.variables = {"UAA"};
  cfg.loc_adjust = LocAdjust::jitter;
  cfg.seed = 99;
  cfg.max_bad_fraction = 1.0;
  std::ostringstream text;
  text << "holding_id,GEO_LCT,UAA\n";
  for (int i = 0; i < 50; ++i) {
    text << "H" << i << ",CRS3035RES1000mN" << (1000 * (i % 7)) << "E"
         << (1000 * (i / 7)) << ",3\n";
  }
  const auto [d1, r1] = load_text(text.str(), cfg, spec);
  const auto [d2, r2] = load_text(text.str(), cfg, spec);
  REQUIRE(d1.records.size() == d2.records.size());
  for (std::size_t i = 0; i < d1.records.size(); ++i) {
    CHECK(d1.records[i].xy.x == d2.records[i].xy.x);
    CHECK(d1.records[i].xy.y == d2.records[i].xy.y);
  }
  cfg.seed = 100;
  const auto [d3, r3] = load_text(text.str(), cfg, spec);
  bool any_diff = false;
  for (std::size_t i = 0; i < d1.records.size() && i < d3.records.size(); ++i) {
    if (d1.records[i].xy.x != d3.records[i].xy.x) any_diff = true;
  }
  CHECK(any_diff);
}

TEST_CASE("stratum and region labels are interned with sampling facts") {
  const GridSpec spec({1000});
  IngestConfig cfg = xy_config();
  cfg.columns.stratum = "STRA_ID";
  cfg.columns.region = "NUTS2";
  const std::string text =
      "holding_id,x,y,weight,UAA,STRA_ID,NUTS2\n"
      "H1,250.5,250.5,4,1,A,R1\n"
      "H2,350.5,250.5,4,1,A,R2\n"
      "H3,450.5,250.5,9,1,B,R1\n";
  const auto [d, report] = load_text(text, cfg, spec);
  REQUIRE(d.strata.size() == 2);
  CHECK(d.strata[0] == "A");
  CHECK(d.strata_info[0].n_h == 2);
  CHECK(d.strata_info[0].N_h == 8.0);
  CHECK(d.strata_info[1].n_h == 1);
  CHECK(d.strata_info[1].N_h == 9.0);
  REQUIRE(d.regions.size() == 2);
  CHECK(d.records[2].region == 0);  // R1 interned first
}

TEST_CASE("location mode misconfiguration is rejected before reading") {
  const GridSpec spec({1000});
  const std::string text = "holding_id,x,y,weight,UAA\nH1,250.5,250.5,1,1\n";

  IngestConfig both = xy_config();
  both.columns.geo_lct = "GEO_LCT";
  CHECK_THROWS_AS(load_text(text, both, spec), ConfigError);

  IngestConfig neither = xy_config();
  neither.columns.x.clear();
  neither.columns.y.clear();
  CHECK_THROWS_AS(load_text(text, neither, spec), ConfigError);

  IngestConfig shifted = xy_config();
  shifted.loc_adjust = LocAdjust::lower_left;
  CHECK_THROWS_AS(load_text(text, shifted, spec), ConfigError);

  IngestConfig no_id = xy_config();
  no_id.columns.id.clear();
  CHECK_THROWS_AS(load_text(text, no_id, spec), ConfigError);
}

TEST_CASE("quoted fields and blank trailing lines are handled") {
  const GridSpec spec({1000});
  const std::string text =
      "holding_id,x,y,weight,UAA\n"
      "\"H,1\",250.5,250.5,1,2\n"
      "\n";
  const auto [d, report] = load_text(text, xy_config(), spec);
  CHECK(report.rows_read == 1);
  REQUIRE(d.records.size() == 1);
  CHECK(d.records[0].id == "H,1");
}

TEST_CASE("strata overrides replace population sizes by label") {
  const GridSpec spec({1000});
  IngestConfig cfg = xy_config();
  cfg.columns.stratum = "STRA_ID";
  const std::string text =
      "holding_id,x,y,weight,UAA,STRA_ID\n"
      "H1,250.5,250.5,3,1,A\n"
      "H2,350.5,250.5,3,1,A\n"
      "H3,450.5,250.5,5,1,B\n";
  auto [d, report] = load_text(text, cfg, spec);
  std::istringstream overrides(
      "stratum_id,N_h\n"
      "A,50\n"
      "Z,99\n");
  mrg::apply_strata_overrides(d, overrides);
  CHECK(d.strata_info[0].N_h == 50.0);
  CHECK(d.strata_info[1].N_h == 5.0);  // untouched

  std::istringstream too_small(
      "stratum_id,N_h\n"
      "A,1\n");
  CHECK_THROWS_AS(mrg::apply_strata_overrides(d, too_small), IngestError);

  std::istringstream bad_header("stratum,N\nA,5\n");
  CHECK_THROWS_AS(mrg::apply_strata_overrides(d, bad_header), MissingColumn);
}
