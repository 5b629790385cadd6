#pragma once

#include <cmath>
#include <compare>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace mrg {

/**
 * Fixed-point amount with six decimal places, stored as integer micro-units.
 *
 * Weights, variable values and their per-cell totals are kept in this
 * representation so that sums are exact and independent of grouping order:
 * aggregating records into cells, merging cells into parents and moving
 * whole-cell stats between cells all preserve grid-wide totals bit for bit.
 */
class Fixed {
 public:
  static constexpr std::int64_t kScale = 1'000'000;

  constexpr Fixed() = default;

  static constexpr Fixed from_micro(std::int64_t micro) { return Fixed(micro); }

  static constexpr Fixed from_units(std::int64_t units) {
    return Fixed(units * kScale);
  }

  // Nearest micro-unit, ties away from zero.
  static Fixed from_double(double v) {
    if (!std::isfinite(v)) {
      throw std::invalid_argument("Fixed::from_double: non-finite value");
    }
    const double scaled = v * static_cast<double>(kScale);
    if (std::abs(scaled) >= 9.2e18) {
      throw std::overflow_error("Fixed::from_double: value out of range");
    }
    return Fixed(std::llround(scaled));
  }

  constexpr std::int64_t micro() const { return micro_; }
  double to_double() const {
    return static_cast<double>(micro_) / static_cast<double>(kScale);
  }

  constexpr bool is_zero() const { return micro_ == 0; }
  constexpr bool negative() const { return micro_ < 0; }

  // Quantized product, rounded to the nearest micro-unit (ties away from zero).
  static Fixed mul(Fixed a, Fixed b) {
    __int128 p = static_cast<__int128>(a.micro_) * b.micro_;
    const __int128 half = kScale / 2;
    p = p >= 0 ? (p + half) / kScale : (p - half) / kScale;
    return Fixed(static_cast<std::int64_t>(p));
  }

  // Weight rounding used by the first dominance rule: nearest integer,
  // halves up. Exact in integer arithmetic.
  constexpr std::int64_t round_half_up_units() const {
    if (micro_ >= 0) return (micro_ + kScale / 2) / kScale;
    return -((-micro_ + kScale / 2 - 1) / kScale);
  }

  Fixed& operator+=(Fixed o) {
    micro_ += o.micro_;
    return *this;
  }
  Fixed& operator-=(Fixed o) {
    micro_ -= o.micro_;
    return *this;
  }
  friend constexpr Fixed operator+(Fixed a, Fixed b) {
    return Fixed(a.micro_ + b.micro_);
  }
  friend constexpr Fixed operator-(Fixed a, Fixed b) {
    return Fixed(a.micro_ - b.micro_);
  }
  friend constexpr auto operator<=>(Fixed, Fixed) = default;

  std::string str() const {
    // Decimal rendering without trailing zeros, e.g. "2.5", "10".
    std::int64_t whole = micro_ / kScale;
    std::int64_t frac = micro_ % kScale;
    if (frac == 0) return std::to_string(whole);
    std::string sign = micro_ < 0 ? "-" : "";
    if (frac < 0) frac = -frac;
    if (whole < 0) whole = -whole;
    std::string f = std::to_string(frac);
    f.insert(0, 6 - f.size(), '0');
    while (f.back() == '0') f.pop_back();
    return sign + std::to_string(whole) + "." + f;
  }

 private:
  constexpr explicit Fixed(std::int64_t micro) : micro_(micro) {}
  std::int64_t micro_ = 0;
};

// a/b < limit, for non-negative a and positive b. Exact.
inline bool ratio_less(Fixed a, Fixed b, Fixed limit) {
  return static_cast<__int128>(a.micro()) * Fixed::kScale <
         static_cast<__int128>(limit.micro()) * b.micro();
}

// a <= share * b, for non-negative quantities. Exact.
inline bool leq_share(Fixed a, Fixed share, Fixed b) {
  return static_cast<__int128>(a.micro()) * Fixed::kScale <=
         static_cast<__int128>(share.micro()) * b.micro();
}

}  // namespace mrg
