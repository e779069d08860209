#pragma once

// Cancellation-free evaluation of functions of the form
//
//     F(x) = x^shift / den * sum_k num_k * x^{p_k} * exp(-c_k x)
//
// with small integer num_k, p_k, c_k. All transition-kernel constants reduce
// to prefactor * F(xi * eta) where the leading Taylor coefficients of F cancel
// exactly. Near zero F is summed from its Taylor series, whose coefficients are
// assembled in exact integer arithmetic so the cancelled orders are exactly
// zero rather than rounding noise.

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <vector>

namespace tlmc::detail {

struct ExpTerm {
  std::int64_t num;
  int power;  // p_k >= 0
  int rate;   // c_k >= 0
};

class ExpPoly {
 public:
  /// Below this argument the series is used; above it the terms are summed directly.
  static constexpr double kSeriesSwitch = 1.0;
  static constexpr int kMaxOrder = 64;

  ExpPoly(std::int64_t den, std::initializer_list<ExpTerm> terms, int shift = 0)
      : den_(den), shift_(shift), terms_(terms) {
    build_series();
  }

  double operator()(double x) const { return x < kSeriesSwitch ? series(x) : direct(x); }

  double direct(double x) const {
    double acc = 0.0;
    for (const auto& t : terms_) acc += static_cast<double>(t.num) * std::pow(x, t.power) * std::exp(-t.rate * x);
    return acc / static_cast<double>(den_) * std::pow(x, shift_);
  }

  double series(double x) const {
    // sum_{n >= lead} coef_n x^{n + shift}; coef_n = C_n / (den n!)
    // Fixed length: for x < 1 the tail past order 64 is far below long double epsilon.
    long double sum = 0.0L;
    long double fact = 1.0L;
    for (int n = 1; n <= lead_; ++n) fact *= n;
    long double xp = 1.0L / fact;  // x^(n - lead) / n!
    const long double lx = x;
    for (int n = lead_; n <= kMaxOrder; ++n) {
      if (n > lead_) xp *= lx / n;
      sum += coef_[static_cast<std::size_t>(n)] * xp;
    }
    const int outer = lead_ + shift_;
    return static_cast<double>(sum * std::pow(static_cast<long double>(x), outer));
  }

  /// Lowest non-vanishing Taylor order of the bracket (before the x^shift factor).
  int leading_order() const { return lead_; }

  /// Exact Taylor coefficient of x^n of the bracket divided by den.
  double taylor(int n) const {
    long double f = 1.0L;
    for (int k = 2; k <= n; ++k) f *= k;
    return static_cast<double>(coef_[static_cast<std::size_t>(n)] / f);
  }

 private:
  void build_series() {
    coef_.assign(kMaxOrder + 1, 0.0L);
    lead_ = -1;
    for (int n = 0; n <= kMaxOrder; ++n) {
      // n! * [x^n] sum num * x^p * e^{-c x} = sum num * n!/(n-p)! * (-c)^(n-p)
      __int128 acc = 0;
      for (const auto& t : terms_) {
        if (n < t.power) continue;
        __int128 falling = 1;
        for (int k = 0; k < t.power; ++k) falling *= (n - k);
        __int128 pw = 1;
        for (int k = 0; k < n - t.power; ++k) pw *= -t.rate;
        acc += static_cast<__int128>(t.num) * falling * pw;
      }
      coef_[static_cast<std::size_t>(n)] = static_cast<long double>(acc) / static_cast<long double>(den_);
      if (lead_ < 0 && acc != 0) lead_ = n;
    }
    if (lead_ < 0) lead_ = kMaxOrder;  // identically zero
    if (lead_ + shift_ < 0) throw std::logic_error("ExpPoly: negative power at the origin");
  }

  std::int64_t den_;
  int shift_;
  std::vector<ExpTerm> terms_;
  std::vector<long double> coef_;  // n! * Taylor coefficient / den
  int lead_ = 0;
};

}  // namespace tlmc::detail
