#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <string_view>

namespace sot {

/// Exact rational number with a normalized, positive denominator.
///
/// Affinity edges are half-integers and most derived scores (team means,
/// rating averages, turn-taking scores) are small fractions, so every value
/// that is compared or serialized goes through this type instead of double.
class Rational {
 public:
  constexpr Rational() = default;
  Rational(std::int64_t value) : num_(value), den_(1) {}  // NOLINT(implicit)
  Rational(std::int64_t num, std::int64_t den);

  std::int64_t num() const noexcept { return num_; }
  std::int64_t den() const noexcept { return den_; }

  double to_double() const noexcept { return static_cast<double>(num_) / static_cast<double>(den_); }
  bool is_integer() const noexcept { return den_ == 1; }

  /// "7" or "-3/7".
  std::string str() const;
  /// Inverse of str(); throws sot::Error(malformed) on bad input.
  static Rational parse(std::string_view text);

  friend Rational operator+(const Rational& a, const Rational& b);
  friend Rational operator-(const Rational& a, const Rational& b);
  friend Rational operator*(const Rational& a, const Rational& b);
  friend Rational operator/(const Rational& a, const Rational& b);
  Rational operator-() const { return Rational(-num_, den_); }
  Rational& operator+=(const Rational& o) { return *this = *this + o; }
  Rational& operator-=(const Rational& o) { return *this = *this - o; }

  friend bool operator==(const Rational& a, const Rational& b) = default;
  friend std::strong_ordering operator<=>(const Rational& a, const Rational& b);

 private:
  std::int64_t num_ = 0;
  std::int64_t den_ = 1;
};

}  // namespace sot
