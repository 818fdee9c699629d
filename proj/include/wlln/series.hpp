#pragma once

// Series behind the heavy-tailed example law
//   P(|f| = k) ∝ 1 / (k^2 log k),  k = 2, 3, ...
//
// term(k) = 1/(k^2 ln k). `total()` is Σ_{k≥2} term(k), so the
// normalizing constant c of the example satisfies 2c = 1/total().
// Tails Σ_{j>k} term(j) come from a prefix table below kTableSize and
// from an Euler–Maclaurin expansion around the exponential integral above it.

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

namespace wlln::series {

inline double term(double k) { return 1.0 / (k * k * std::log(k)); }

/// ∫_x^∞ dt / (t^2 ln t) = E1(ln x), x > 1.
inline double term_integral_from(double x) { return -std::expint(-std::log(x)); }

class Example41Series {
 public:
  static constexpr std::uint64_t kTableSize = std::uint64_t{1} << 16;

  static const Example41Series& instance() {
    static const Example41Series s;
    return s;
  }

  /// Σ_{k≥2} 1/(k² ln k).
  double total() const { return total_; }

  /// c with 2c = 1/total().
  double c() const { return 0.5 / total_; }

  /// Certified bracket for total(): partial sum to kTableSize plus the
  /// integral remainder bounds ∫_{K+1}^∞ ≤ Σ_{j>K} ≤ ∫_K^∞.
  std::pair<double, double> total_bracket() const {
    const auto K = static_cast<double>(kTableSize);
    const long double head = prefix_.back();
    return {static_cast<double>(head + term_integral_from(K + 1.0)),
            static_cast<double>(head + term_integral_from(K))};
  }

  /// Σ_{j>k} term(j) for k ≥ 1 (k = 1 gives total()).
  double tail_after(std::uint64_t k) const {
    if (k < 2) return total_;
    if (k < kTableSize) return static_cast<double>(total_ld_ - prefix_[k]);
    return euler_maclaurin_tail(static_cast<double>(k));
  }

  /// Σ_{2≤k≤m} 1/ln k.
  double inv_log_sum(double m) const { return cumulative(inv_log_, m, [](double k) { return 1.0 / std::log(k); }); }

  /// Σ_{2≤k≤m} 1/(k ln k).
  double inv_klog_sum(double m) const {
    return cumulative(inv_klog_, m, [](double k) { return 1.0 / (k * std::log(k)); });
  }

  /// Smallest k ≥ 1 with tail_after(k) ≤ t (t > 0). tail_after is strictly decreasing.
  std::uint64_t first_tail_at_most(double t) const {
    if (total_ <= t) return 1;
    std::uint64_t lo = 1, hi = 2;
    while (tail_after(hi) > t) {
      lo = hi;
      if (hi > (std::uint64_t{1} << 62)) return hi;  // tails below ~1e-20; callers never get here
      hi *= 2;
    }
    while (hi - lo > 1) {
      const std::uint64_t mid = lo + (hi - lo) / 2;
      (tail_after(mid) > t ? lo : hi) = mid;
    }
    return hi;
  }

 private:
  Example41Series() {
    prefix_.assign(kTableSize + 1, 0.0L);
    inv_log_.assign(kTableSize + 1, 0.0L);
    inv_klog_.assign(kTableSize + 1, 0.0L);
    long double s = 0, a = 0, b = 0;
    for (std::uint64_t k = 2; k <= kTableSize; ++k) {
      const long double kk = static_cast<long double>(k);
      const long double lk = std::log(kk);
      s += 1.0L / (kk * kk * lk);
      a += 1.0L / lk;
      b += 1.0L / (kk * lk);
      prefix_[k] = s;
      inv_log_[k] = a;
      inv_klog_[k] = b;
    }
    total_ld_ = s + static_cast<long double>(euler_maclaurin_tail(static_cast<double>(kTableSize)));
    total_ = static_cast<double>(total_ld_);
  }

  // Σ_{j>k} f(j) = ∫_k^∞ f − f(k)/2 − f'(k)/12 + O(f'''(k)); the dropped term is < 1e-24 for k ≥ 2^16.
  static double euler_maclaurin_tail(double k) {
    const double lk = std::log(k);
    const double f = 1.0 / (k * k * lk);
    const double fprime = -(2.0 * lk + 1.0) / (k * k * k * lk * lk);
    return term_integral_from(k) - 0.5 * f - fprime / 12.0;
  }

  template <class F>
  static double cumulative(const std::vector<long double>& table, double m, F f) {
    if (!(m >= 2.0)) return 0.0;
    const double fl = std::floor(m);
    if (fl <= static_cast<double>(kTableSize)) return static_cast<double>(table[static_cast<std::size_t>(fl)]);
    long double s = table[kTableSize];
    for (double k = static_cast<double>(kTableSize) + 1; k <= fl; k += 1.0) s += f(k);
    return static_cast<double>(s);
  }

  std::vector<long double> prefix_, inv_log_, inv_klog_;
  long double total_ld_ = 0;
  double total_ = 0;
};

/// The example's constant c, 2c = (Σ_{k≥2} k⁻² / log k)⁻¹.
inline double example41_constant_c() { return Example41Series::instance().c(); }

}  // namespace wlln::series
