#pragma once

// Marginal laws with exact tail, truncated-moment and tail-integral oracles.
//
// Three families: finite atom lists, Pareto-type power tails, and the
// heavy-tailed example law with atoms at 0 and k = 2, 3, ... . A Marginal
// wraps one of them with an optional censoring level: X·1{|X| > cut}.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "wlln/errors.hpp"
#include "wlln/series.hpp"

namespace wlln {

struct Atom {
  double value = 0;
  double prob = 0;
};

class FiniteDistribution {
 public:
  FiniteDistribution() : FiniteDistribution(std::vector<Atom>{{0.0, 1.0}}) {}

  explicit FiniteDistribution(std::vector<Atom> atoms) {
    if (atoms.empty()) throw input_error("finite distribution needs at least one atom");
    double total = 0;
    for (const auto& a : atoms) {
      if (!std::isfinite(a.value)) throw input_error("atom values must be finite");
      if (!(a.prob >= 0.0) || a.prob > 1.0) throw input_error("atom probabilities must lie in [0,1]");
      total += a.prob;
    }
    if (std::abs(total - 1.0) > 1e-9) throw input_error("atom probabilities must sum to 1");
    // ordering ties by probability makes each merged mass depend only on the multiset of its parts
    std::sort(atoms.begin(), atoms.end(),
              [](const Atom& a, const Atom& b) { return a.value < b.value || (a.value == b.value && a.prob < b.prob); });
    for (const auto& a : atoms) {
      if (a.prob == 0.0) continue;
      if (!by_value_.empty() && by_value_.back().value == a.value)
        by_value_.back().prob += a.prob;
      else
        by_value_.push_back(a);
    }
    cdf_.reserve(by_value_.size());
    double run = 0;
    for (const auto& a : by_value_) cdf_.push_back(run += a.prob);
    by_abs_ = by_value_;
    std::stable_sort(by_abs_.begin(), by_abs_.end(),
                     [](const Atom& a, const Atom& b) { return std::abs(a.value) < std::abs(b.value); });
  }

  static FiniteDistribution point_mass(double v) { return FiniteDistribution({{v, 1.0}}); }

  const std::vector<Atom>& atoms() const { return by_value_; }
  /// Atoms ordered by increasing |value|.
  const std::vector<Atom>& atoms_by_abs() const { return by_abs_; }

  double max_abs() const { return std::abs(by_abs_.back().value); }

  double quantile(double u) const {
    const auto it = std::lower_bound(cdf_.begin(), cdf_.end(), u);
    if (it == cdf_.end()) return by_value_.back().value;
    return by_value_[static_cast<std::size_t>(it - cdf_.begin())].value;
  }

  bool symmetric() const {
    for (const auto& a : by_value_) {
      const auto it = std::find_if(by_value_.begin(), by_value_.end(),
                                   [&](const Atom& b) { return b.value == -a.value; });
      if (it == by_value_.end() || it->prob != a.prob) return false;
    }
    return true;
  }

 private:
  std::vector<Atom> by_value_, by_abs_;
  std::vector<double> cdf_;
};

/// P(|X| > t) = min(1, (scale/t)^alpha); optionally with a fair random sign.
struct ParetoDistribution {
  double alpha = 1.0;
  double scale = 1.0;
  bool symmetric = false;
};

enum class Example41Support { symmetric, positive };

/// P(f=0)=rho; symmetric: P(f=±k)=(1−rho)c/(k² ln k); positive: P(f=k)=(1−rho)2c/(k² ln k); k ≥ 2.
struct Example41Marginal {
  double rho = 0.5;
  Example41Support support = Example41Support::symmetric;
};

using Distribution = std::variant<FiniteDistribution, ParetoDistribution, Example41Marginal>;

inline void validate(const Distribution& d) {
  if (const auto* p = std::get_if<ParetoDistribution>(&d)) {
    if (!(p->alpha > 0) || !(p->scale > 0)) throw input_error("pareto needs alpha > 0 and scale > 0");
  } else if (const auto* e = std::get_if<Example41Marginal>(&d)) {
    if (!(e->rho >= 0.0 && e->rho <= 1.0)) throw input_error("example41 rho must lie in [0,1]");
  }
}

namespace detail {

// ∫_lo^hi alpha s^alpha x^(p-alpha-1) dx, i.e. the power-tail contribution to E[X^p 1{lo<X≤hi}], lo ≥ s.
inline double pareto_band(const ParetoDistribution& d, double lo, double hi, int p) {
  if (hi <= lo) return 0.0;
  const double a = d.alpha, s = d.scale;
  const double e = static_cast<double>(p) - a;
  if (std::abs(e) < 1e-15) return a * std::pow(s, a) * std::log(hi / lo);
  return a * std::pow(s, a) * (std::pow(hi, e) - std::pow(lo, e)) / e;
}

// ∫_0^m t P(|X|>t) dt for the Pareto law.
inline double pareto_tau_integral(const ParetoDistribution& d, double m) {
  const double s = d.scale, a = d.alpha;
  if (m <= s) return 0.5 * m * m;
  const double e = 2.0 - a;
  const double rest = std::abs(e) < 1e-15 ? std::pow(s, a) * std::log(m / s)
                                          : std::pow(s, a) * (std::pow(m, e) - std::pow(s, e)) / e;
  return 0.5 * s * s + rest;
}

inline double ex41_nonzero(const Example41Marginal& d) { return 1.0 - d.rho; }

// P(|X| > t) for the example law.
inline double ex41_tail(const Example41Marginal& d, double t) {
  if (t < 0) return 1.0;
  if (t < 2.0) return ex41_nonzero(d);
  const auto& s = series::Example41Series::instance();
  const double k = std::floor(t);
  if (k >= 1.8e19) return 0.0;
  return ex41_nonzero(d) * s.tail_after(static_cast<std::uint64_t>(k)) / s.total();
}

}  // namespace detail

/// P(|X| > t).
inline double tail_prob(const Distribution& d, double t) {
  return std::visit(
      [t](const auto& x) -> double {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, FiniteDistribution>) {
          double p = 0;
          for (const auto& a : x.atoms()) p += std::abs(a.value) > t ? a.prob : 0.0;
          return std::min(1.0, p);
        } else if constexpr (std::is_same_v<T, ParetoDistribution>) {
          return t < x.scale ? 1.0 : std::pow(x.scale / t, x.alpha);
        } else {
          return detail::ex41_tail(x, t);
        }
      },
      d);
}

/// E[X^order 1{lo < |X| ≤ hi}], order ∈ {1, 2}.
inline double band_moment(const Distribution& d, double lo, double hi, int order) {
  if (order != 1 && order != 2) throw input_error("moment order must be 1 or 2");
  if (!(hi > lo)) return 0.0;
  return std::visit(
      [&](const auto& x) -> double {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, FiniteDistribution>) {
          // atoms_by_abs lists −v right before +v, so a first moment pairs them
          // as |v|·(p₊ − p₋) and a symmetric law gives exactly 0
          const auto& atoms = x.atoms_by_abs();
          double s = 0;
          for (std::size_t i = 0; i < atoms.size(); ++i) {
            const double m = std::abs(atoms[i].value);
            if (!(m > lo && m <= hi)) continue;
            if (order == 2) {
              s += atoms[i].prob * m * m;
            } else if (i + 1 < atoms.size() && atoms[i + 1].value == m && atoms[i].value == -m) {
              s += m * (atoms[i + 1].prob - atoms[i].prob);
              ++i;
            } else {
              s += atoms[i].prob * atoms[i].value;
            }
          }
          return s;
        } else if constexpr (std::is_same_v<T, ParetoDistribution>) {
          if (order == 1 && x.symmetric) return 0.0;
          const double from = std::max(lo, x.scale);
          return detail::pareto_band(x, from, hi, order);
        } else {
          if (order == 1 && x.support == Example41Support::symmetric) return 0.0;
          const auto& s = series::Example41Series::instance();
          const double w = detail::ex41_nonzero(x) / s.total();
          // atoms k with lo < k ≤ hi, k ≥ 2
          const double upper = std::floor(hi);
          const double lower = std::max(1.0, std::floor(lo));
          if (upper <= lower) return 0.0;
          const double sum = order == 2 ? s.inv_log_sum(upper) - s.inv_log_sum(lower)
                                        : s.inv_klog_sum(upper) - s.inv_klog_sum(lower);
          return w * sum;
        }
      },
      d);
}

/// E[X^order 1{|X| ≤ M}].
inline double truncated_moment(const Distribution& d, double M, int order) {
  return band_moment(d, -1.0, M, order);
}

/// ∫_0^M t·P(|X| > t) dt, exact: piecewise linear integrand between atoms of |X|.
inline double tau_integral(const Distribution& d, double M) {
  if (!(M > 0)) return 0.0;
  return std::visit(
      [M](const auto& x) -> double {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, FiniteDistribution>) {
          // S(t) = P(|X| > t) is constant on [b_i, b_{i+1}) between distinct |atom| values.
          double acc = 0, left = 0;
          for (const auto& a : x.atoms_by_abs()) {
            const double b = std::abs(a.value);
            if (b <= left) continue;
            if (b >= M) break;
            acc += tail_prob(x, left) * (b * b - left * left) * 0.5;
            left = b;
          }
          acc += tail_prob(x, left) * (M * M - left * left) * 0.5;
          return acc;
        } else if constexpr (std::is_same_v<T, ParetoDistribution>) {
          return detail::pareto_tau_integral(x, M);
        } else {
          const double first = std::min(M, 2.0);
          double acc = detail::ex41_nonzero(x) * first * first * 0.5;
          const auto& s = series::Example41Series::instance();
          const double w = detail::ex41_nonzero(x) / s.total();
          for (double k = 2.0; k < M; k += 1.0) {
            const double right = std::min(k + 1.0, M);
            acc += w * s.tail_after(static_cast<std::uint64_t>(k)) * (right * right - k * k) * 0.5;
          }
          return acc;
        }
      },
      d);
}

/// Distinct positive atoms of |X| strictly below M; nullopt for continuous laws.
inline std::optional<std::vector<double>> abs_breakpoints(const Distribution& d, double M) {
  return std::visit(
      [M](const auto& x) -> std::optional<std::vector<double>> {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, FiniteDistribution>) {
          std::vector<double> out;
          for (const auto& a : x.atoms_by_abs()) {
            const double b = std::abs(a.value);
            if (b > 0 && b < M && (out.empty() || out.back() != b)) out.push_back(b);
          }
          return out;
        } else if constexpr (std::is_same_v<T, ParetoDistribution>) {
          return std::nullopt;
        } else {
          std::vector<double> out;
          for (double k = 2.0; k < M; k += 1.0) out.push_back(k);
          return out;
        }
      },
      d);
}

/// Atoms with |value| ≤ M in increasing |value| order, together with the
/// remaining mass P(|X| > M). Discrete laws only.
struct AtomEnumeration {
  std::vector<Atom> atoms;
  double remainder = 0;
};

inline AtomEnumeration enumerate_atoms(const Distribution& d, double M) {
  return std::visit(
      [M](const auto& x) -> AtomEnumeration {
        using T = std::decay_t<decltype(x)>;
        AtomEnumeration out;
        if constexpr (std::is_same_v<T, FiniteDistribution>) {
          for (const auto& a : x.atoms_by_abs())
            if (std::abs(a.value) <= M) out.atoms.push_back(a);
          out.remainder = tail_prob(x, M);
        } else if constexpr (std::is_same_v<T, ParetoDistribution>) {
          throw unsupported_oracle("pareto law has no atoms to enumerate");
        } else {
          const auto& s = series::Example41Series::instance();
          const double nz = detail::ex41_nonzero(x);
          out.atoms.push_back({0.0, x.rho});
          for (double k = 2.0; k <= M; k += 1.0) {
            const double p = nz * series::term(k) / s.total();
            if (x.support == Example41Support::symmetric) {
              out.atoms.push_back({-k, 0.5 * p});
              out.atoms.push_back({k, 0.5 * p});
            } else {
              out.atoms.push_back({k, p});
            }
          }
          out.remainder = tail_prob(x, M);
        }
        return out;
      },
      d);
}

/// P(X < −M): mass strictly below the window [−M, M].
inline double lower_tail_mass(const Distribution& d, double M) {
  return std::visit(
      [M](const auto& x) -> double {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, FiniteDistribution>) {
          double p = 0;
          for (const auto& a : x.atoms()) p += a.value < -M ? a.prob : 0.0;
          return p;
        } else if constexpr (std::is_same_v<T, ParetoDistribution>) {
          return x.symmetric ? 0.5 * tail_prob(x, M) : 0.0;
        } else {
          return x.support == Example41Support::symmetric ? 0.5 * tail_prob(x, M) : 0.0;
        }
      },
      d);
}

/// Inverse CDF at u ∈ (0,1). `u_sign` is only consumed by the symmetric Pareto law.
inline double quantile(const Distribution& d, double u, double u_sign = 0.5) {
  return std::visit(
      [u, u_sign](const auto& x) -> double {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, FiniteDistribution>) {
          return x.quantile(u);
        } else if constexpr (std::is_same_v<T, ParetoDistribution>) {
          const double mag = x.scale * std::pow(u, -1.0 / x.alpha);
          return x.symmetric && u_sign < 0.5 ? -mag : mag;
        } else {
          const auto& s = series::Example41Series::instance();
          const double nz = detail::ex41_nonzero(x);
          if (nz <= 0) return 0.0;
          if (x.support == Example41Support::positive) {
            if (u <= x.rho) return 0.0;
            // smallest k with P(X > k) = nz·tail_after(k)/total ≤ 1−u
            const std::uint64_t k = s.first_tail_at_most((1.0 - u) * s.total() / nz);
            return static_cast<double>(std::max<std::uint64_t>(k, 2));
          }
          const double half = 0.5 * nz;
          if (u <= half) {
            // largest k with P(X ≤ −k) = half·tail_after(k−1)/total ≥ u
            const std::uint64_t j = s.first_tail_at_most(std::nextafter(u * s.total() / half, 0.0));
            return -static_cast<double>(std::max<std::uint64_t>(j, 2));
          }
          if (u <= half + x.rho) return 0.0;
          const std::uint64_t k = s.first_tail_at_most((1.0 - u) * s.total() / half);
          return static_cast<double>(std::max<std::uint64_t>(k, 2));
        }
      },
      d);
}

inline bool is_symmetric(const Distribution& d) {
  return std::visit(
      [](const auto& x) -> bool {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, FiniteDistribution>) return x.symmetric();
        else if constexpr (std::is_same_v<T, ParetoDistribution>) return x.symmetric;
        else return x.support == Example41Support::symmetric || x.rho == 1.0;
      },
      d);
}

/// Largest |value| if the support is bounded.
inline std::optional<double> support_bound(const Distribution& d) {
  if (const auto* f = std::get_if<FiniteDistribution>(&d)) return f->max_abs();
  if (const auto* e = std::get_if<Example41Marginal>(&d); e && e->rho == 1.0) return 0.0;
  return std::nullopt;
}

/// X·1{|X| > cut}. With cut = 0 this is X itself.
struct Marginal {
  Distribution dist;
  double cut = 0.0;

  double tail(double t) const { return tail_prob(dist, std::max(t, cut)); }

  double moment(double M, int order) const { return band_moment(dist, cut, M, order); }

  double band(double lo, double hi, int order) const { return band_moment(dist, std::max(lo, cut), hi, order); }

  double tau_integral(double M) const {
    if (cut <= 0) return wlln::tau_integral(dist, M);
    const double head = std::min(M, cut);
    double acc = tail_prob(dist, cut) * head * head * 0.5;
    if (M > cut) acc += wlln::tau_integral(dist, M) - wlln::tau_integral(dist, cut);
    return acc;
  }

  std::optional<std::vector<double>> breakpoints(double M) const {
    auto b = abs_breakpoints(dist, M);
    if (!b || cut <= 0) return b;
    std::vector<double> out;
    if (cut < M) out.push_back(cut);
    for (double v : *b)
      if (v > cut) out.push_back(v);
    return out;
  }

  double sample(double u, double u_sign) const {
    const double x = quantile(dist, u, u_sign);
    return std::abs(x) > cut ? x : 0.0;
  }
};

}  // namespace wlln
