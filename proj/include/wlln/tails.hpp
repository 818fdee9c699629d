#pragma once

// Tail functionals and hypothesis checks.
//
//   tau_n(M)   = M·P(|f_n| > M)
//   sigma_n(M) = (1/M)·E(f_n² 1{|f_n| ≤ M})
//
// with the Feller identity sigma_n(M) = (2/M)∫_0^M tau_n(t) dt − tau_n(M).
//
// Verdicts are three-valued. "fails" and "holds" are only issued from
// closed-form facts about the model family; grid evidence alone gives
// "holds-on-grid" or "inconclusive".

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "wlln/distribution.hpp"
#include "wlln/errors.hpp"
#include "wlln/model.hpp"
#include "wlln/series.hpp"

namespace wlln {

inline double tau_n(const SequenceModel& model, std::uint64_t n, double M) {
  if (!(M > 0)) throw input_error("M must be positive");
  return M * marginal_tail_prob(model, n, M);
}

inline double sigma_n(const SequenceModel& model, std::uint64_t n, double M) {
  if (!(M > 0)) throw input_error("M must be positive");
  return truncated_moment(model, n, M, 2) / M;
}

/// sigma_n(M) − [(2/M)∫_0^M tau_n(t) dt − tau_n(M)], integral in closed form.
inline double feller_identity_residual(const SequenceModel& model, std::uint64_t n, double M) {
  if (!(M > 0)) throw input_error("M must be positive");
  const Marginal m = model.marginal(n);
  const double integral = m.tau_integral(M);
  return sigma_n(model, n, M) - (2.0 / M * integral - tau_n(model, n, M));
}

enum class Verdict { holds, holds_on_grid, fails, inconclusive };

inline const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::holds: return "holds";
    case Verdict::holds_on_grid: return "holds-on-grid";
    case Verdict::fails: return "fails";
    case Verdict::inconclusive: return "inconclusive";
  }
  return "?";
}

inline bool is_positive(Verdict v) { return v == Verdict::holds || v == Verdict::holds_on_grid; }

struct ConditionVerdict {
  std::string condition;
  Verdict verdict = Verdict::inconclusive;
  std::string witness;
  std::vector<std::pair<double, double>> trend;  // (grid point, aggregate value)
  std::vector<std::pair<double, std::uint64_t>> witness_indices;  // (M, n)
};

/// Index window [lo, hi] plus the indices actually evaluated.
struct IndexRange {
  std::uint64_t lo = 1;
  std::uint64_t hi = 1;
};

/// All indices of the window when it is small, otherwise a log-spaced set including both ends.
inline std::vector<std::uint64_t> evaluation_points(IndexRange r, std::size_t max_points = 512) {
  if (r.lo < 1 || r.hi < r.lo) throw input_error("index range must satisfy 1 ≤ lo ≤ hi");
  std::vector<std::uint64_t> out;
  if (r.hi - r.lo < max_points) {
    for (std::uint64_t n = r.lo; n <= r.hi; ++n) out.push_back(n);
    return out;
  }
  const double a = std::log(static_cast<double>(r.lo)), b = std::log(static_cast<double>(r.hi));
  for (std::size_t i = 0; i < max_points; ++i) {
    const double x = std::exp(a + (b - a) * static_cast<double>(i) / static_cast<double>(max_points - 1));
    auto n = static_cast<std::uint64_t>(std::llround(x));
    n = std::clamp(n, r.lo, r.hi);
    if (out.empty() || n > out.back()) out.push_back(n);
  }
  if (out.back() != r.hi) out.push_back(r.hi);
  return out;
}

struct TailProfile {
  std::vector<double> m_grid;
  IndexRange n_range;
  std::vector<std::uint64_t> n_points;
  std::vector<std::vector<double>> tau;    // [point][M]
  std::vector<std::vector<double>> sigma;  // [point][M]
  std::vector<double> tau_sup, tau_liminf, tau_limsup;
  std::vector<double> sigma_sup, sigma_liminf;
};

inline TailProfile build_profile(const SequenceModel& model, std::vector<double> m_grid, IndexRange n_range,
                                 std::size_t max_points = 512) {
  if (m_grid.empty()) throw input_error("M-grid is empty");
  for (std::size_t i = 0; i < m_grid.size(); ++i) {
    if (!(m_grid[i] > 0)) throw input_error("M-grid values must be positive");
    if (i > 0 && !(m_grid[i] > m_grid[i - 1])) throw input_error("M-grid must be strictly increasing");
  }
  model.check_index(n_range.hi);
  TailProfile p;
  p.m_grid = std::move(m_grid);
  p.n_range = n_range;
  p.n_points = evaluation_points(n_range, max_points);
  const std::size_t K = p.m_grid.size();
  p.tau_sup.assign(K, 0.0);
  p.tau_limsup.assign(K, 0.0);
  p.sigma_sup.assign(K, 0.0);
  p.tau_liminf.assign(K, INFINITY);
  p.sigma_liminf.assign(K, INFINITY);
  for (auto n : p.n_points) {
    std::vector<double> t(K), s(K);
    for (std::size_t i = 0; i < K; ++i) {
      t[i] = tau_n(model, n, p.m_grid[i]);
      s[i] = sigma_n(model, n, p.m_grid[i]);
      p.tau_sup[i] = std::max(p.tau_sup[i], t[i]);
      p.tau_liminf[i] = std::min(p.tau_liminf[i], t[i]);
      p.sigma_sup[i] = std::max(p.sigma_sup[i], s[i]);
      p.sigma_liminf[i] = std::min(p.sigma_liminf[i], s[i]);
    }
    p.tau.push_back(std::move(t));
    p.sigma.push_back(std::move(s));
  }
  p.tau_limsup = p.tau_sup;
  return p;
}

/// sup over the profile's evaluated indices of sigma_n(M).
inline double sigma_sup_at(const SequenceModel& model, const std::vector<std::uint64_t>& points, double M) {
  double s = 0;
  for (auto n : points) s = std::max(s, sigma_n(model, n, M));
  return s;
}

/// (2/M)∫_0^M sup_n tau_n(t) dt over the given indices. Exact when every
/// marginal is discrete. Otherwise max_n (2/M)∫tau_n, which is a lower bound.
inline double tau_sup_integral_bound(const SequenceModel& model, const std::vector<std::uint64_t>& points, double M) {
  std::vector<Marginal> ms;
  ms.reserve(points.size());
  std::vector<double> breaks;
  bool discrete = true;
  for (auto n : points) {
    ms.push_back(model.marginal(n));
    auto b = ms.back().breakpoints(M);
    if (!b) {
      discrete = false;
      continue;
    }
    breaks.insert(breaks.end(), b->begin(), b->end());
  }
  if (!discrete) {
    double best = 0;
    for (const auto& m : ms) best = std::max(best, m.tau_integral(M));
    return 2.0 / M * best;
  }
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());
  // sup_n P(|f_n| > t) is constant on each [b_i, b_{i+1})
  double acc = 0, left = 0;
  auto sup_tail = [&](double t) {
    double s = 0;
    for (const auto& m : ms) s = std::max(s, m.tail(t));
    return s;
  };
  for (double b : breaks) {
    acc += sup_tail(left) * (b * b - left * left) * 0.5;
    left = b;
  }
  acc += sup_tail(left) * (M * M - left * left) * 0.5;
  return 2.0 / M * acc;
}

/// Decay envelope M ↦ coefficient / log(M) (M > 1) used for grid verdicts.
struct Envelope {
  double coefficient = 1.0;
  double at(double M) const { return M > 1.0 ? coefficient / std::log(M) : INFINITY; }
};

inline Envelope example41_envelope() { return {2.0 * series::example41_constant_c()}; }

namespace detail {

// Pareto laws with alpha ≤ 1 have M·P(|X|>M) = scale^alpha·M^(1−alpha) ≥ scale^alpha for all M ≥ scale.
inline std::optional<ParetoDistribution> heavy_pareto(const Distribution& d) {
  if (const auto* p = std::get_if<ParetoDistribution>(&d); p && p->alpha <= 1.0) return *p;
  return std::nullopt;
}

inline std::string fmt(double x) {
  std::ostringstream os;
  os.precision(12);
  os << x;
  return os.str();
}

inline Envelope default_envelope(const SequenceModel& model, std::optional<Envelope> configured) {
  if (configured) return *configured;
  if (model.kind() == ModelKind::example41) return example41_envelope();
  return Envelope{};
}

inline ConditionVerdict grid_verdict(std::string name, const std::vector<double>& m_grid,
                                     const std::vector<double>& values, Envelope env, std::size_t tail_points = 3) {
  ConditionVerdict v;
  v.condition = std::move(name);
  for (std::size_t i = 0; i < m_grid.size(); ++i) v.trend.emplace_back(m_grid[i], values[i]);
  const std::size_t from = m_grid.size() > tail_points ? m_grid.size() - tail_points : 0;
  bool below = true;
  for (std::size_t i = from; i < m_grid.size(); ++i) below = below && values[i] <= env.at(m_grid[i]);
  if (below) {
    v.verdict = Verdict::holds_on_grid;
    v.witness = "aggregate ≤ " + fmt(env.coefficient) + "/log M at the largest grid points";
  } else {
    v.verdict = Verdict::inconclusive;
    v.witness = "aggregate above the envelope " + fmt(env.coefficient) + "/log M; see trend";
  }
  return v;
}

}  // namespace detail

/// sup_n tau_n(M) → 0.
inline ConditionVerdict check_weak_l1(const SequenceModel& model, const TailProfile& profile,
                                      std::optional<Envelope> envelope = std::nullopt) {
  if (profile.m_grid.empty()) throw input_error("M-grid is empty");
  if (model.kind() != ModelKind::example41 && model.kind() != ModelKind::latent_shift) {
    for (const auto& d : model.distributions()) {
      if (auto p = detail::heavy_pareto(d)) {
        ConditionVerdict v;
        v.condition = "weak_l1";
        v.verdict = Verdict::fails;
        for (std::size_t i = 0; i < profile.m_grid.size(); ++i)
          v.trend.emplace_back(profile.m_grid[i], profile.tau_sup[i]);
        const double floor = std::pow(p->scale, p->alpha);
        v.witness = p->alpha == 1.0
                        ? "tau(M) = M·P(|g|>M) = " + detail::fmt(floor) + " for all M ≥ " + detail::fmt(p->scale)
                        : "tau(M) = M·P(|g|>M) = " + detail::fmt(floor) + "·M^" + detail::fmt(1.0 - p->alpha) +
                              " does not tend to 0";
        return v;
      }
    }
  }
  return detail::grid_verdict("weak_l1", profile.m_grid, profile.tau_sup, detail::default_envelope(model, envelope));
}

namespace detail {

inline ConditionVerdict window_condition(const SequenceModel& model, const TailProfile& profile, bool use_liminf,
                                         std::optional<Envelope> envelope) {
  const std::string name = use_liminf ? "liminf_tail" : "limsup_tail";
  const auto& values = use_liminf ? profile.tau_liminf : profile.tau_limsup;
  if (model.kind() == ModelKind::tail_vanishing) {
    ConditionVerdict v = grid_verdict(name, profile.m_grid, values, default_envelope(model, envelope));
    v.verdict = Verdict::holds;
    v.witness = "lim_n tau_n(M) = lim_n M·P(|g| > n) = 0 for every M";
    return v;
  }
  if (model.kind() == ModelKind::example41 && model.rho().limit_nonzero_mass() == 0.0) {
    ConditionVerdict v = grid_verdict(name, profile.m_grid, values, default_envelope(model, envelope));
    v.verdict = Verdict::holds;
    v.witness = "tau_n(M) is proportional to 1 − rho_n → 0 for every M";
    return v;
  }
  if (model.kind() == ModelKind::iid || model.kind() == ModelKind::latent_shift ||
      (model.kind() == ModelKind::example41 && model.rho().type == RhoSequence::Type::constant)) {
    // constant in n: same verdict as the sup condition
    ConditionVerdict v = check_weak_l1(model, profile, envelope);
    v.condition = name;
    return v;
  }
  if (profile.n_points.size() < 3) {
    ConditionVerdict v;
    v.condition = name;
    v.witness = "index window too short to estimate a " + std::string(use_liminf ? "liminf" : "limsup");
    for (std::size_t i = 0; i < profile.m_grid.size(); ++i) v.trend.emplace_back(profile.m_grid[i], values[i]);
    return v;
  }
  if (model.kind() == ModelKind::independent_array) {
    // periodic in n: liminf/limsup are the min/max over one cycle
    bool heavy_all = true, heavy_any = false;
    for (const auto& d : model.distributions()) {
      const bool h = heavy_pareto(d).has_value();
      heavy_all = heavy_all && h;
      heavy_any = heavy_any || h;
    }
    if (use_liminf ? heavy_all : heavy_any) {
      ConditionVerdict v = grid_verdict(name, profile.m_grid, values, default_envelope(model, envelope));
      v.verdict = Verdict::fails;
      v.witness = "a cycle entry has M·P(|f|>M) bounded below for all M";
      return v;
    }
  }
  return grid_verdict(name, profile.m_grid, values, default_envelope(model, envelope));
}

}  // namespace detail

inline ConditionVerdict check_liminf_condition(const SequenceModel& model, const TailProfile& profile,
                                               std::optional<Envelope> envelope = std::nullopt) {
  if (profile.m_grid.empty()) throw input_error("M-grid is empty");
  return detail::window_condition(model, profile, true, envelope);
}

inline ConditionVerdict check_limsup_condition(const SequenceModel& model, const TailProfile& profile,
                                               std::optional<Envelope> envelope = std::nullopt) {
  if (profile.m_grid.empty()) throw input_error("M-grid is empty");
  return detail::window_condition(model, profile, false, envelope);
}

/// Smallest n in [lo, hi] with sigma_n(M) ≤ tol, assuming sigma_n(M) is nonincreasing in n.
inline std::optional<std::uint64_t> first_index_below(const SequenceModel& model, double M, double tol,
                                                      IndexRange r) {
  if (sigma_n(model, r.hi, M) > tol) return std::nullopt;
  if (sigma_n(model, r.lo, M) <= tol) return r.lo;
  std::uint64_t lo = r.lo, hi = r.hi;
  while (hi - lo > 1) {
    const std::uint64_t mid = lo + (hi - lo) / 2;
    (sigma_n(model, mid, M) > tol ? lo : hi) = mid;
  }
  return hi;
}

/// liminf_k E(f_k² 1{|f_k| ≤ M}) = 0 for every M. Witness indices are the first
/// n in the window with sigma_n(M) ≤ tol.
inline ConditionVerdict check_energy_vanishing(const SequenceModel& model, const std::vector<double>& m_grid,
                                               IndexRange n_range, double tol = 1e-3) {
  if (m_grid.empty()) throw input_error("M-grid is empty");
  model.check_index(n_range.hi);
  ConditionVerdict v;
  v.condition = "energy_vanishing";
  const auto points = evaluation_points(n_range, 256);
  for (double M : m_grid) {
    double lo = INFINITY;
    for (auto n : points) lo = std::min(lo, truncated_moment(model, n, M, 2));
    v.trend.emplace_back(M, lo);
  }
  switch (model.kind()) {
    case ModelKind::tail_vanishing:
      v.verdict = Verdict::holds;
      v.witness = "E(f_n² 1{|f_n| ≤ M}) = 0 exactly for n ≥ M";
      for (double M : m_grid) {
        const auto n = static_cast<std::uint64_t>(std::max(1.0, std::ceil(M)));
        if (n <= model.index_cap()) v.witness_indices.emplace_back(M, n);
      }
      return v;
    case ModelKind::example41:
      if (model.rho().limit_nonzero_mass() == 0.0) {
        v.verdict = Verdict::holds;
        v.witness = "E(f_n² 1{|f_n| ≤ M}) = (1 − rho_n)·2c·Σ_{2≤k≤M} 1/log k → 0 along rho_n → 1";
        for (double M : m_grid)
          if (auto n = first_index_below(model, M, tol, n_range)) v.witness_indices.emplace_back(M, *n);
        return v;
      }
      break;
    default: break;
  }
  if (model.has_factor_cells() && model.kind() != ModelKind::example41) {
    // constant or periodic in n: the liminf is attained within one cycle
    const std::size_t period = model.kind() == ModelKind::independent_array ? model.distributions().size() : 1;
    bool all_zero = true;
    for (double M : m_grid) {
      double lo = INFINITY;
      std::uint64_t arg = 1;
      for (std::uint64_t n = 1; n <= period; ++n) {
        const double e = truncated_moment(model, n, M, 2);
        if (e < lo) lo = e, arg = n;
      }
      if (lo > 0) {
        all_zero = false;
        v.verdict = Verdict::fails;
        v.witness = "liminf_n E(f_n² 1{|f_n| ≤ M}) = " + detail::fmt(lo) + " > 0 at M = " + detail::fmt(M);
        return v;
      }
      v.witness_indices.emplace_back(M, arg);
    }
    if (all_zero) {
      v.verdict = Verdict::holds;
      v.witness = "E(f_n² 1{|f_n| ≤ M}) = 0 along the witness indices";
    }
    return v;
  }
  if (model.kind() == ModelKind::example41) {
    // constant rho: constant positive sequence unless rho = 1
    for (double M : m_grid) {
      const double e = truncated_moment(model, 1, M, 2);
      if (e > 0) {
        v.verdict = Verdict::fails;
        v.witness = "E(f_n² 1{|f_n| ≤ M}) = " + detail::fmt(e) + " > 0 for every n at M = " + detail::fmt(M);
        return v;
      }
      v.witness_indices.emplace_back(M, 1);
    }
    v.verdict = Verdict::holds;
    v.witness = "rho = 1: all coordinates vanish";
    return v;
  }
  bool small = true;
  for (std::size_t i = 0; i < m_grid.size(); ++i) small = small && v.trend[i].second / m_grid[i] <= tol;
  v.verdict = small ? Verdict::holds_on_grid : Verdict::inconclusive;
  v.witness = small ? "window minimum of sigma_n(M) below tolerance" : "window minimum above tolerance";
  return v;
}

struct FellerNecessary {
  std::vector<double> n_grid;
  std::vector<double> tail_sum;    // Σ_{n≤N} P(|f_n| > N)
  std::vector<double> energy_sum;  // N⁻² Σ_{n≤N} E(f_n² 1{|f_n| ≤ N})
  ConditionVerdict tail_verdict, energy_verdict;
};

namespace detail {

// Σ_{n=1}^{N} h(n) for models whose marginals repeat with the given period.
inline double periodic_sum(std::uint64_t N, std::uint64_t period, const std::function<double(std::uint64_t)>& h) {
  const std::uint64_t full = N / period, rest = N % period;
  double cycle = 0, part = 0;
  for (std::uint64_t n = 1; n <= period; ++n) {
    const double x = h(n);
    cycle += x;
    if (n <= rest) part += x;
  }
  return static_cast<double>(full) * cycle + part;
}

inline ConditionVerdict decay_verdict(std::string name, const std::vector<double>& grid,
                                      const std::vector<double>& values) {
  ConditionVerdict v;
  v.condition = std::move(name);
  for (std::size_t i = 0; i < grid.size(); ++i) v.trend.emplace_back(grid[i], values[i]);
  if (values.back() == 0.0) {
    v.verdict = Verdict::holds_on_grid;
    v.witness = "exactly 0 at the largest grid point";
    return v;
  }
  bool decreasing = values.size() >= 2;
  for (std::size_t i = values.size() / 2; i + 1 < values.size(); ++i) decreasing = decreasing && values[i + 1] <= values[i];
  if (decreasing && values.back() <= 0.5 * values.front()) {
    v.verdict = Verdict::holds_on_grid;
    v.witness = "nonincreasing over the upper half of the grid and at most half its initial value";
  } else {
    v.verdict = Verdict::inconclusive;
    v.witness = "no clear decay on the grid";
  }
  return v;
}

}  // namespace detail

/// Σ_{n≤N} P(|f_n|>N) → 0 and N⁻²Σ_{n≤N} E(f_n² 1{|f_n|≤N}) → 0; for independent
/// coordinates these are necessary and sufficient for the weak law with the
/// correctors (1/N)Σ_{n≤N} E(f_n 1{|f_n|≤N}).
inline FellerNecessary check_feller_necessary(const SequenceModel& model, const std::vector<double>& n_grid) {
  if (!model.independent_coordinates()) throw unsupported_oracle("the Feller conditions need independent coordinates");
  if (n_grid.empty()) throw input_error("N-grid is empty");
  FellerNecessary out;
  out.n_grid = n_grid;
  const std::uint64_t period = model.kind() == ModelKind::independent_array ? model.distributions().size() : 1;
  for (double Nd : n_grid) {
    if (!(Nd >= 1)) throw input_error("N-grid values must be ≥ 1");
    const auto N = static_cast<std::uint64_t>(std::floor(Nd));
    model.check_index(N);
    double a = 0, b = 0;
    if (model.kind() == ModelKind::example41 && model.rho().type != RhoSequence::Type::constant) {
      if (N > (std::uint64_t{1} << 24)) throw input_error("N too large for direct summation (max 2^24)");
      for (std::uint64_t n = 1; n <= N; ++n) {
        a += marginal_tail_prob(model, n, Nd);
        b += truncated_moment(model, n, Nd, 2);
      }
    } else {
      a = detail::periodic_sum(N, period, [&](std::uint64_t n) { return marginal_tail_prob(model, n, Nd); });
      b = detail::periodic_sum(N, period, [&](std::uint64_t n) { return truncated_moment(model, n, Nd, 2); });
    }
    out.tail_sum.push_back(a);
    out.energy_sum.push_back(b / (Nd * Nd));
  }
  out.tail_verdict = detail::decay_verdict("feller_tail_sum", n_grid, out.tail_sum);
  out.energy_verdict = detail::decay_verdict("feller_energy_sum", n_grid, out.energy_sum);
  for (const auto& d : model.distributions()) {
    if (auto p = detail::heavy_pareto(d); p && model.kind() == ModelKind::iid) {
      out.tail_verdict.verdict = Verdict::fails;
      out.tail_verdict.witness = "N·P(|f|>N) = " + detail::fmt(std::pow(p->scale, p->alpha)) + "·N^" +
                                 detail::fmt(1.0 - p->alpha) + " does not tend to 0";
    }
  }
  return out;
}

}  // namespace wlln
