#pragma once

// Corrector sequences D_N.
//
// constant     one number per level
// conditional  a table factor value ↦ number per level, realized per path
// estimated    sample-based Cesàro averages with a cross-path standard error
//
// Every stored value lies in [−N, N].

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "wlln/distribution.hpp"
#include "wlln/errors.hpp"
#include "wlln/model.hpp"
#include "wlln/tails.hpp"

namespace wlln {

enum class CorrectorKind { constant, conditional, estimated };

inline const char* to_string(CorrectorKind k) {
  switch (k) {
    case CorrectorKind::constant: return "constant";
    case CorrectorKind::conditional: return "conditional";
    case CorrectorKind::estimated: return "estimated";
  }
  return "?";
}

struct CorrectorLevel {
  double N = 1;
  double value = 0;                      // constant / estimated
  std::vector<FactorMap::Entry> table;   // conditional
  std::optional<double> uncertainty;     // estimated: standard error across paths
};

class CorrectorSeries {
 public:
  CorrectorKind kind = CorrectorKind::constant;
  std::vector<CorrectorLevel> levels;
  std::string provenance;
  std::string test_functions = "constants";
  bool heuristic = false;
  /// D_N = 0 at every level, including levels outside `levels`.
  bool zero_everywhere = false;

  static CorrectorSeries zero(const std::vector<double>& n_grid = {}, std::string provenance = "zero") {
    CorrectorSeries s;
    s.provenance = std::move(provenance);
    s.zero_everywhere = true;
    for (double N : n_grid) s.levels.push_back({N, 0.0, {}, std::nullopt});
    return s;
  }

  std::vector<double> n_grid() const {
    std::vector<double> g;
    for (const auto& l : levels) g.push_back(l.N);
    return g;
  }

  const CorrectorLevel* find(double N) const {
    for (const auto& l : levels)
      if (l.N == N) return &l;
    return nullptr;
  }

  bool covers(double N) const { return zero_everywhere || find(N) != nullptr; }

  bool needs_factor() const { return kind == CorrectorKind::conditional; }

  /// D_N realized at the path's factor value (ignored unless conditional).
  double value(double N, const std::optional<double>& factor = std::nullopt) const {
    const CorrectorLevel* l = find(N);
    if (!l) {
      if (zero_everywhere) return 0.0;
      throw input_error("corrector has no value at level N = " + std::to_string(N));
    }
    if (kind != CorrectorKind::conditional) return l->value;
    if (!factor) throw input_error("conditional corrector needs the path's factor value");
#pragma GCC diagnostic push
// GCC 11 loses track of the engaged check above once sample loops are inlined
#pragma GCC diagnostic ignored "-Wmaybe-uninitialized"
    for (const auto& e : l->table)
      if (e.factor == *factor) return e.value;
#pragma GCC diagnostic pop
    throw input_error("factor value outside the corrector table");
  }

  /// E(D_N²) under the factor law (the constant squared otherwise).
  double second_moment(double N) const {
    const CorrectorLevel* l = find(N);
    if (!l) return zero_everywhere ? 0.0 : throw input_error("corrector has no value at this level");
    if (kind != CorrectorKind::conditional) return l->value * l->value;
    double s = 0;
    for (const auto& e : l->table) s += e.prob * e.value * e.value;
    return s;
  }

  /// Largest |D_N(ω)| over all realizations at level N.
  double max_abs(double N) const {
    const CorrectorLevel* l = find(N);
    if (!l) return 0.0;
    if (kind != CorrectorKind::conditional) return std::abs(l->value);
    double m = 0;
    for (const auto& e : l->table) m = std::max(m, std::abs(e.value));
    return m;
  }

  /// |D_N| ≤ N for every stored level and realization.
  bool within_bounds() const {
    for (const auto& l : levels)
      if (max_abs(l.N) > l.N) return false;
    return true;
  }
};

inline double clamp_level(double v, double N) { return std::clamp(v, -N, N); }

namespace detail {

inline void check_grid(const std::vector<double>& n_grid) {
  if (n_grid.empty()) throw input_error("corrector level grid is empty");
  for (std::size_t i = 0; i < n_grid.size(); ++i) {
    if (!(n_grid[i] > 0)) throw input_error("corrector levels must be positive");
    if (i > 0 && !(n_grid[i] > n_grid[i - 1])) throw input_error("corrector levels must be strictly increasing");
  }
}

}  // namespace detail

/// D_N = E(f·1{|f| ≤ N}).
inline CorrectorSeries corrector_iid(const Distribution& dist, const std::vector<double>& n_grid) {
  detail::check_grid(n_grid);
  CorrectorSeries s;
  s.provenance = "corrector_iid";
  for (double N : n_grid) s.levels.push_back({N, clamp_level(truncated_moment(dist, N, 1), N), {}, std::nullopt});
  return s;
}

/// D_N = (1/N)·Σ_{j≤N} E(f_{k_j}·1{|f_{k_j}| ≤ N}) along the given index list.
inline CorrectorSeries corrector_independent_on_indices(const SequenceModel& model,
                                                        const std::vector<std::uint64_t>& indices,
                                                        const std::vector<double>& n_grid) {
  if (!model.independent_coordinates())
    throw unsupported_oracle("independent-array correctors need independent coordinates");
  detail::check_grid(n_grid);
  CorrectorSeries s;
  s.provenance = "corrector_independent";
  for (double N : n_grid) {
    const auto count = static_cast<std::size_t>(std::floor(N));
    if (count > indices.size()) throw input_error("index list shorter than the corrector level");
    double acc = 0;
    for (std::size_t j = 0; j < count; ++j) acc += truncated_moment(model, indices[j], N, 1);
    s.levels.push_back({N, clamp_level(acc / N, N), {}, std::nullopt});
  }
  return s;
}

/// D_N = (1/N)·Σ_{n≤N} E(f_n·1{|f_n| ≤ N}).
inline CorrectorSeries corrector_independent(const SequenceModel& model, const std::vector<double>& n_grid) {
  if (!model.independent_coordinates())
    throw unsupported_oracle("independent-array correctors need independent coordinates");
  detail::check_grid(n_grid);
  CorrectorSeries s;
  s.provenance = "corrector_independent";
  const std::uint64_t period = model.kind() == ModelKind::independent_array ? model.distributions().size() : 1;
  const bool varying = model.kind() == ModelKind::example41 && model.rho().type != RhoSequence::Type::constant;
  for (double N : n_grid) {
    const auto count = static_cast<std::uint64_t>(std::floor(N));
    if (count < 1) {
      s.levels.push_back({N, 0.0, {}, std::nullopt});
      continue;
    }
    model.check_index(count);
    double acc = 0;
    if (varying) {
      if (count > (std::uint64_t{1} << 24)) throw input_error("level too large for direct summation (max 2^24)");
      for (std::uint64_t n = 1; n <= count; ++n) acc += truncated_moment(model, n, N, 1);
    } else {
      acc = detail::periodic_sum(count, period, [&](std::uint64_t n) { return truncated_moment(model, n, N, 1); });
    }
    s.levels.push_back({N, clamp_level(acc / N, N), {}, std::nullopt});
  }
  return s;
}

/// Weak-L² limit of f_n·1{|f_n| ≤ N} where the model structure determines it.
inline CorrectorSeries corrector_weak_l2(const SequenceModel& model, const std::vector<double>& n_grid) {
  detail::check_grid(n_grid);
  switch (model.kind()) {
    case ModelKind::iid: {
      auto s = corrector_iid(model.distributions()[0], n_grid);
      s.provenance = "corrector_weak_l2";
      return s;
    }
    case ModelKind::independent_array: {
      // Cesàro limit of the truncated means: the cycle average
      CorrectorSeries s;
      s.provenance = "corrector_weak_l2";
      const auto& cyc = model.distributions();
      for (double N : n_grid) {
        double acc = 0;
        for (const auto& d : cyc) acc += truncated_moment(d, N, 1);
        s.levels.push_back({N, clamp_level(acc / static_cast<double>(cyc.size()), N), {}, std::nullopt});
      }
      return s;
    }
    case ModelKind::tail_vanishing: return CorrectorSeries::zero(n_grid, "corrector_weak_l2");
    case ModelKind::example41: {
      if (model.rho().limit_nonzero_mass() == 0.0) {
        // E(f_n² 1{|f_n| ≤ N}) → 0, so the truncations tend to 0 in L²
        return CorrectorSeries::zero(n_grid, "corrector_weak_l2");
      }
      if (model.joint_law() == JointLaw::comonotone)
        throw unsupported_oracle("comonotone coordinates with constant rho have no constant weak limit");
      CorrectorSeries s;
      s.provenance = "corrector_weak_l2";
      for (double N : n_grid)
        s.levels.push_back({N, clamp_level(truncated_moment(model, 1, N, 1), N), {}, std::nullopt});
      return s;
    }
    case ModelKind::latent_shift: {
      CorrectorSeries s;
      s.kind = CorrectorKind::conditional;
      s.provenance = "corrector_weak_l2";
      s.test_functions = "bounded functions of the driving factor";
      for (double N : n_grid) {
        auto map = conditional_truncated_mean(model, N);
        for (auto& e : map.entries) e.value = clamp_level(e.value, N);
        s.levels.push_back({N, 0.0, std::move(map.entries), std::nullopt});
      }
      return s;
    }
  }
  throw unsupported_oracle("unsupported model structure");
}

/// Per-path pilot averages of the truncated values over the first
/// floor(pilot_fraction·L) coordinates, pooled across paths.
inline CorrectorSeries corrector_cesaro_estimate(const std::vector<SamplePath>& paths,
                                                 const std::vector<double>& n_grid, double pilot_fraction = 0.2) {
  if (paths.size() < 2) throw input_error("Cesàro estimation needs at least 2 paths");
  if (!(pilot_fraction > 0.0 && pilot_fraction < 1.0)) throw input_error("pilot_fraction must lie in (0,1)");
  detail::check_grid(n_grid);
  CorrectorSeries s;
  s.kind = CorrectorKind::estimated;
  s.provenance = "corrector_cesaro_estimate";
  s.heuristic = true;
  for (double N : n_grid) {
    std::vector<double> est;
    for (const auto& p : paths) {
      const auto L = static_cast<std::size_t>(std::floor(pilot_fraction * static_cast<double>(p.values.size())));
      if (L == 0) throw input_error("pilot prefix is empty");
      double acc = 0;
      for (std::size_t i = 0; i < L; ++i) acc += std::abs(p.values[i]) <= N ? p.values[i] : 0.0;
      est.push_back(clamp_level(acc / static_cast<double>(L), N));
    }
    double mean = 0;
    for (double e : est) mean += e;
    mean /= static_cast<double>(est.size());
    double ss = 0;
    for (double e : est) ss += (e - mean) * (e - mean);
    const double se = std::sqrt(ss / static_cast<double>(est.size() - 1) / static_cast<double>(est.size()));
    s.levels.push_back({N, clamp_level(mean, N), {}, se});
  }
  return s;
}

}  // namespace wlln
