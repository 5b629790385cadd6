#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <vector>

#include "mrg/grid.hpp"

using mrg::Box;
using mrg::CellId;
using mrg::GridSpec;
using mrg::Point;

TEST_CASE("resolution ladder accepts nested ascending multiples") {
  CHECK_NOTHROW(
      mrg::validate_resolutions({1000, 5000, 10000, 20000, 40000, 80000}));
  CHECK_NOTHROW(mrg::validate_resolutions({500}));
  CHECK_NOTHROW(mrg::validate_resolutions({1, 7, 14}));
}

TEST_CASE("resolution ladder rejects bad sequences") {
  CHECK_THROWS_AS(mrg::validate_resolutions({10000, 20000, 50000, 100000}),
                  mrg::ResolutionsNotNested);
  CHECK_THROWS_AS(mrg::validate_resolutions({5000, 1000}),
                  mrg::ResolutionsNotIncreasing);
  CHECK_THROWS_AS(mrg::validate_resolutions({1000, 1000}),
                  mrg::ResolutionsNotIncreasing);
  CHECK_THROWS_AS(mrg::validate_resolutions({}),
                  mrg::ResolutionsNotIncreasing);
  CHECK_THROWS_AS(mrg::validate_resolutions({0, 1000}),
                  mrg::ResolutionsNotIncreasing);
}

TEST_CASE("points map to cells by floor division from the origin") {
  GridSpec g({1000, 5000});
  CHECK(g.cell_of({1500.0, 2500.0}, 0) == CellId{0, 1, 2});
  CHECK(g.cell_of({4999.9, 1.0}, 1) == CellId{1, 0, 0});
  CHECK(g.cell_of({-0.5, -1500.0 + 0.25}, 0) == CellId{0, -1, -2});
}

TEST_CASE("points exactly on a cell border are rejected") {
  GridSpec g({1000});
  CHECK_THROWS_AS(g.cell_of({0.0, 0.0}, 0), mrg::PointOnCellBorder);
  CHECK_THROWS_AS(g.cell_of({1000.0, 500.0}, 0), mrg::PointOnCellBorder);
  CHECK_THROWS_AS(g.cell_of({500.0, 3000.0}, 0), mrg::PointOnCellBorder);
  CHECK_NOTHROW(g.cell_of({500.0, 500.0}, 0));
}

TEST_CASE("origin shifts the whole pyramid") {
  GridSpec g({4000000.0, 3000000.0}, 3035, {1000, 2000});
  CHECK(g.cell_of({4000500.0, 3000500.0}, 0) == CellId{0, 0, 0});
  const Box b = g.cell_box({0, 0, 0});
  CHECK(b.x_min == 4000000.0);
  CHECK(b.y_min == 3000000.0);
  CHECK(b.x_max == 4001000.0);
  CHECK(b.y_max == 3001000.0);
}

TEST_CASE("parents follow integer floor division of indices") {
  GridSpec g({1000, 5000, 10000});
  CHECK(g.parent_of({0, 7, 3}) == CellId{1, 1, 0});
  CHECK(g.parent_of({1, 3, 3}) == CellId{2, 1, 1});
  CHECK(g.parent_of({0, -1, -1}) == CellId{1, -1, -1});
  CHECK_THROWS_AS(g.parent_of({2, 0, 0}), mrg::GridError);
}

TEST_CASE("children tile their parent exactly") {
  GridSpec g({1000, 5000, 10000});

  SECTION("factor 2 gives 4 children") {
    const auto kids = g.children_of({2, 0, 0});
    REQUIRE(kids.size() == 4);
    for (const auto& k : kids) CHECK(g.parent_of(k) == CellId{2, 0, 0});
  }

  SECTION("factor 5 gives 25 children") {
    const auto kids = g.children_of({1, 2, -1});
    REQUIRE(kids.size() == 25);
    for (const auto& k : kids) CHECK(g.parent_of(k) == CellId{1, 2, -1});
  }

  SECTION("child boxes cover the parent box") {
    const CellId parent{1, 1, 1};
    const Box pb = g.cell_box(parent);
    double area = 0.0;
    for (const auto& k : g.children_of(parent)) {
      const Box cb = g.cell_box(k);
      CHECK(cb.x_min >= pb.x_min);
      CHECK(cb.y_min >= pb.y_min);
      CHECK(cb.x_max <= pb.x_max);
      CHECK(cb.y_max <= pb.y_max);
      area += (cb.x_max - cb.x_min) * (cb.y_max - cb.y_min);
    }
    CHECK(area == (pb.x_max - pb.x_min) * (pb.y_max - pb.y_min));
  }

  CHECK_THROWS_AS(g.children_of({0, 0, 0}), mrg::GridError);
}

TEST_CASE("cell names encode resolution and indices") {
  GridSpec g({1000, 5000});
  CHECK(g.cell_name({0, 1, 2}) == "R1000_C1_R2");
  CHECK(g.cell_name({1, -3, 0}) == "R5000_C-3_R0");
}

TEST_CASE("random points stay consistent across the level hierarchy") {
  GridSpec g({1000, 5000, 10000, 20000});
  std::mt19937_64 rng(20240817);
  std::uniform_real_distribution<double> coord(-50000.0, 50000.0);

  for (int i = 0; i < 500; ++i) {
    Point p{coord(rng), coord(rng)};
    // Skip the measure-zero border cases; they throw by design.
    bool on_border = false;
    for (int l = 0; l < g.levels(); ++l) {
      const double res = static_cast<double>(g.res_m(l));
      if (std::fmod(p.x, res) == 0.0 || std::fmod(p.y, res) == 0.0) {
        on_border = true;
      }
    }
    if (on_border) continue;

    for (int l = 0; l + 1 < g.levels(); ++l) {
      const CellId fine = g.cell_of(p, l);
      const CellId coarse = g.cell_of(p, l + 1);
      CHECK(g.parent_of(fine) == coarse);

      const auto kids = g.children_of(coarse);
      CHECK(std::find(kids.begin(), kids.end(), fine) != kids.end());
    }

    for (int l = 0; l < g.levels(); ++l) {
      const CellId id = g.cell_of(p, l);
      const Box b = g.cell_box(id);
      CHECK(p.x > b.x_min);
      CHECK(p.x < b.x_max);
      CHECK(p.y > b.y_min);
      CHECK(p.y < b.y_max);
      CHECK(g.cell_of(g.cell_center(id), l) == id);
    }
  }
}
