#pragma once

#include <cmath>
#include <compare>
#include <cstdint>
#include <string>
#include <vector>

#include "mrg/errors.hpp"

namespace mrg {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

struct Box {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;
};

class ResolutionsNotIncreasing : public GridError {
 public:
  explicit ResolutionsNotIncreasing(const std::string& message)
      : GridError(message) {}
};

class ResolutionsNotNested : public GridError {
 public:
  explicit ResolutionsNotNested(const std::string& message)
      : GridError(message) {}
};

// A point lying exactly on a cell edge cannot be assigned to one cell.
class PointOnCellBorder : public GridError {
 public:
  explicit PointOnCellBorder(const std::string& message)
      : GridError(message) {}
};

// Each resolution must be a positive integer multiple of the previous one;
// only then do coarse cells tile exactly into finer ones.
inline void validate_resolutions(const std::vector<std::int64_t>& res_m) {
  if (res_m.empty()) {
    throw ResolutionsNotIncreasing("resolution ladder is empty");
  }
  for (std::size_t i = 0; i < res_m.size(); ++i) {
    if (res_m[i] <= 0) {
      throw ResolutionsNotIncreasing("resolution must be positive: " +
                                     std::to_string(res_m[i]));
    }
    if (i == 0) continue;
    if (res_m[i] <= res_m[i - 1]) {
      throw ResolutionsNotIncreasing(
          "resolutions must be strictly increasing: " +
          std::to_string(res_m[i - 1]) + " -> " + std::to_string(res_m[i]));
    }
    if (res_m[i] % res_m[i - 1] != 0) {
      throw ResolutionsNotNested(std::to_string(res_m[i]) +
                                 " is not an integer multiple of " +
                                 std::to_string(res_m[i - 1]));
    }
  }
}

// Cell address: resolution level (index into the ladder, 0 = finest) plus
// column/row offsets from the grid origin. Offsets may be negative.
struct CellId {
  int level = 0;
  std::int64_t col = 0;
  std::int64_t row = 0;

  friend constexpr auto operator<=>(const CellId&, const CellId&) = default;
};

/**
 * Nested rectangular grid pyramid over one projected CRS.
 *
 * All levels share an origin; because each resolution divides the next,
 * every cell of level l tiles exactly into cells of level l-1 and nests
 * exactly into one cell of level l+1.
 */
class GridSpec {
 public:
  GridSpec(Point origin, int crs_epsg, std::vector<std::int64_t> resolutions_m)
      : origin_(origin), crs_epsg_(crs_epsg), res_m_(std::move(resolutions_m)) {
    validate_resolutions(res_m_);
  }

  explicit GridSpec(std::vector<std::int64_t> resolutions_m)
      : GridSpec(Point{0.0, 0.0}, 3035, std::move(resolutions_m)) {}

  const Point& origin() const { return origin_; }
  int crs_epsg() const { return crs_epsg_; }
  int levels() const { return static_cast<int>(res_m_.size()); }
  std::int64_t res_m(int level) const { return res_m_.at(level); }
  const std::vector<std::int64_t>& resolutions() const { return res_m_; }

  // How many child columns/rows of `level - 1` span one cell of `level`.
  std::int64_t factor(int level) const {
    check_level(level);
    if (level == 0) {
      throw GridError("finest level has no child level");
    }
    return res_m_[level] / res_m_[level - 1];
  }

  CellId cell_of(Point p, int level) const {
    check_level(level);
    const double res = static_cast<double>(res_m_[level]);
    return CellId{level, index_of(p.x - origin_.x, res, "x", p),
                  index_of(p.y - origin_.y, res, "y", p)};
  }

  CellId parent_of(const CellId& id) const {
    check_level(id.level);
    if (id.level + 1 >= levels()) {
      throw GridError("cell at coarsest level has no parent");
    }
    const std::int64_t f = factor(id.level + 1);
    return CellId{id.level + 1, floor_div(id.col, f), floor_div(id.row, f)};
  }

  std::vector<CellId> children_of(const CellId& id) const {
    check_level(id.level);
    if (id.level == 0) {
      throw GridError("cell at finest level has no children");
    }
    const std::int64_t f = factor(id.level);
    std::vector<CellId> out;
    out.reserve(static_cast<std::size_t>(f * f));
    for (std::int64_t r = 0; r < f; ++r) {
      for (std::int64_t c = 0; c < f; ++c) {
        out.push_back(CellId{id.level - 1, id.col * f + c, id.row * f + r});
      }
    }
    return out;
  }

  Box cell_box(const CellId& id) const {
    check_level(id.level);
    const double res = static_cast<double>(res_m_[id.level]);
    const double x0 = origin_.x + static_cast<double>(id.col) * res;
    const double y0 = origin_.y + static_cast<double>(id.row) * res;
    return Box{x0, y0, x0 + res, y0 + res};
  }

  Point cell_center(const CellId& id) const {
    const Box b = cell_box(id);
    return Point{(b.x_min + b.x_max) / 2.0, (b.y_min + b.y_max) / 2.0};
  }

  std::string cell_name(const CellId& id) const {
    check_level(id.level);
    return "R" + std::to_string(res_m_[id.level]) + "_C" +
           std::to_string(id.col) + "_R" + std::to_string(id.row);
  }

 private:
  void check_level(int level) const {
    if (level < 0 || level >= levels()) {
      throw GridError("resolution level out of range: " +
                      std::to_string(level));
    }
  }

  static std::int64_t floor_div(std::int64_t a, std::int64_t b) {
    std::int64_t q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
    return q;
  }

  std::int64_t index_of(double rel, double res, const char* axis,
                        Point p) const {
    if (std::fmod(rel, res) == 0.0) {
      throw PointOnCellBorder("point (" + std::to_string(p.x) + ", " +
                              std::to_string(p.y) + ") lies on a cell border (" +
                              axis + " axis)");
    }
    return static_cast<std::int64_t>(std::floor(rel / res));
  }

  Point origin_;
  int crs_epsg_;
  std::vector<std::int64_t> res_m_;
};

}  // namespace mrg
