#pragma once

// Monte Carlo probes of the weak law along an index sequence k_1 < k_2 < ...
//
// Replication r draws f at the needed indices from Stream{seed, r, verification}.
// Because draws are keyed by index, every epsilon, every N and every thinned
// pattern reuses the same underlying values (common random numbers).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "wlln/correctors.hpp"
#include "wlln/errors.hpp"
#include "wlln/extract.hpp"
#include "wlln/model.hpp"
#include "wlln/rng.hpp"

namespace wlln {

struct Interval {
  double lo = 0;
  double hi = 1;
  bool contains(double x) const { return lo <= x && x <= hi; }
};

/// Wilson score interval for k successes in n trials.
inline Interval wilson(std::uint64_t k, std::uint64_t n, double z = kZ99) {
  if (n == 0) return {0.0, 1.0};
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(k) / nn;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double centre = (p + z2 / (2.0 * nn)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn)) / denom;
  // the closed form can miss p by an ulp at the boundaries
  return {std::min(p, std::max(0.0, centre - half)), std::max(p, std::min(1.0, centre + half))};
}

enum class ConvergenceVerdict { consistent, violation, inconclusive };

inline const char* to_string(ConvergenceVerdict v) {
  switch (v) {
    case ConvergenceVerdict::consistent: return "consistent-with-wlln";
    case ConvergenceVerdict::violation: return "violation";
    case ConvergenceVerdict::inconclusive: return "inconclusive";
  }
  return "?";
}

struct GridPoint {
  double N = 0;
  std::uint64_t exceed = 0;      // |A_N − D_N| > eps
  double p_hat = 0;
  Interval ci;
  double p_hat_truncated = 0;    // |(1/N)Σ(f^T − D_N)| > eps
  double l2_hat = 0;             // mean of ((1/N)Σ(f^T − D_N))²
  double l2_se = 0;
  bool markov_ok = true;         // p_hat_truncated ≤ l2_hat/eps² + 3 combined SE
};

struct ConvergenceReport {
  std::string label = "full";
  std::vector<double> n_grid;
  double epsilon = 0;
  std::uint64_t reps = 0;
  std::uint64_t seed = 0;
  double pass_threshold = 0.05;
  double margin = 0.01;
  std::vector<GridPoint> points;
  ConvergenceVerdict verdict = ConvergenceVerdict::inconclusive;
  bool significant_increase = false;
  std::string corrector_provenance;
  std::string corrector_mode = "fixed";
  std::vector<std::string> notes;

  bool markov_ok() const {
    return std::all_of(points.begin(), points.end(), [](const GridPoint& g) { return g.markov_ok; });
  }
};

struct ProbeConfig {
  std::vector<double> n_grid;
  std::uint64_t reps = 1000;
  std::uint64_t seed = 0;
  double pass_threshold = 0.05;
  double margin = 0.01;
};

namespace detail {

inline void check_probe_inputs(const SequenceModel& model, const std::vector<std::uint64_t>& indices,
                               const CorrectorSeries& D, const ProbeConfig& cfg) {
  if (cfg.reps < 1) throw input_error("replications must be ≥ 1");
  if (cfg.n_grid.empty()) throw input_error("N-grid is empty");
  for (std::size_t i = 0; i < cfg.n_grid.size(); ++i) {
    const double N = cfg.n_grid[i];
    if (!(N >= 1) || N != std::floor(N)) throw input_error("N-grid values must be positive integers");
    if (i > 0 && !(N > cfg.n_grid[i - 1])) throw input_error("N-grid must be strictly increasing");
    if (!D.covers(N)) throw input_error("corrector does not cover every grid level");
  }
  if (static_cast<double>(indices.size()) < cfg.n_grid.back()) throw input_error("index list shorter than max(N-grid)");
  for (std::size_t i = 1; i < indices.size(); ++i)
    if (!(indices[i] > indices[i - 1])) throw input_error("indices must be strictly increasing");
  if (!indices.empty()) model.check_index(indices.back());
  if (D.needs_factor() && !model.exposes_factor())
    throw input_error("conditional corrector needs the path's factor value, which this model does not expose");
}

inline ConvergenceVerdict decide(std::vector<GridPoint>& pts, double threshold, double margin, bool& increase) {
  increase = false;
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = i + 1; j < pts.size(); ++j)
      if (pts[j].ci.lo > pts[i].ci.hi + margin) increase = true;
  const double last = pts.back().p_hat;
  if (increase && last > threshold) return ConvergenceVerdict::violation;
  if (!increase && last < threshold) return ConvergenceVerdict::consistent;
  return ConvergenceVerdict::inconclusive;
}

}  // namespace detail

/// One report per epsilon, all from the same replications.
inline std::vector<ConvergenceReport> wlln_probe_multi(const SequenceModel& model,
                                                       const std::vector<std::uint64_t>& indices,
                                                       const CorrectorSeries& D, const std::vector<double>& epsilons,
                                                       const ProbeConfig& cfg) {
  detail::check_probe_inputs(model, indices, D, cfg);
  if (epsilons.empty()) throw input_error("no epsilon given");
  for (double e : epsilons)
    if (!(e > 0)) throw input_error("epsilon must be positive");
  const std::size_t G = cfg.n_grid.size(), E = epsilons.size();
  const auto Nmax = static_cast<std::size_t>(cfg.n_grid.back());
  const std::vector<std::uint64_t> used(indices.begin(), indices.begin() + static_cast<std::ptrdiff_t>(Nmax));

  std::vector<std::vector<std::uint64_t>> exceed(E, std::vector<std::uint64_t>(G, 0)),
      exceed_t(E, std::vector<std::uint64_t>(G, 0));
  std::vector<double> l2_sum(G, 0.0), l2_sq(G, 0.0);
  std::vector<double> vals;
  std::optional<double> factor;
  for (std::uint64_t r = 0; r < cfg.reps; ++r) {
    sample_at(model, used, rng::Stream{cfg.seed, r, rng::Purpose::verification}, vals, factor);
    for (std::size_t g = 0; g < G; ++g) {
      const double N = cfg.n_grid[g];
      const auto count = static_cast<std::size_t>(N);
      double s = 0, st = 0;
      for (std::size_t i = 0; i < count; ++i) {
        s += vals[i];
        st += truncate(vals[i], N);
      }
      const double d = D.value(N, factor);
      const double dev = s / N - d;
      const double dev_t = st / N - d;
      for (std::size_t e = 0; e < E; ++e) {
        exceed[e][g] += std::abs(dev) > epsilons[e];
        exceed_t[e][g] += std::abs(dev_t) > epsilons[e];
      }
      l2_sum[g] += dev_t * dev_t;
      l2_sq[g] += dev_t * dev_t * dev_t * dev_t;
    }
  }

  const double R = static_cast<double>(cfg.reps);
  std::vector<ConvergenceReport> out;
  for (std::size_t e = 0; e < E; ++e) {
    ConvergenceReport rep;
    rep.n_grid = cfg.n_grid;
    rep.epsilon = epsilons[e];
    rep.reps = cfg.reps;
    rep.seed = cfg.seed;
    rep.pass_threshold = cfg.pass_threshold;
    rep.margin = cfg.margin;
    rep.corrector_provenance = D.provenance;
    if (D.heuristic) rep.notes.push_back("corrector is a heuristic sample estimate");
    for (std::size_t g = 0; g < G; ++g) {
      GridPoint p;
      p.N = cfg.n_grid[g];
      p.exceed = exceed[e][g];
      p.p_hat = static_cast<double>(p.exceed) / R;
      p.ci = wilson(p.exceed, cfg.reps);
      p.p_hat_truncated = static_cast<double>(exceed_t[e][g]) / R;
      p.l2_hat = l2_sum[g] / R;
      const double var = cfg.reps > 1 ? std::max(0.0, (l2_sq[g] - R * p.l2_hat * p.l2_hat) / (R - 1.0)) : 0.0;
      p.l2_se = std::sqrt(var / R);
      const double eps2 = epsilons[e] * epsilons[e];
      const double se_p = std::sqrt(p.p_hat_truncated * (1.0 - p.p_hat_truncated) / R);
      const double se = std::sqrt(se_p * se_p + (p.l2_se / eps2) * (p.l2_se / eps2));
      p.markov_ok = p.p_hat_truncated <= p.l2_hat / eps2 + 3.0 * se + 1e-12;
      rep.points.push_back(p);
    }
    rep.verdict = detail::decide(rep.points, cfg.pass_threshold, cfg.margin, rep.significant_increase);
    out.push_back(std::move(rep));
  }
  return out;
}

/// P(|(1/N)Σ_{n≤N} f_{k_n} − D_N| > eps) over the N-grid.
inline ConvergenceReport wlln_probe(const SequenceModel& model, const std::vector<std::uint64_t>& indices,
                                    const CorrectorSeries& D, double epsilon, const ProbeConfig& cfg) {
  return wlln_probe_multi(model, indices, D, {epsilon}, cfg).front();
}

/// The L² part of a probe: N⁻²E(Σ(f^T − D_N))² with standard errors, plus the Markov check.
inline ConvergenceReport l2_probe(const SequenceModel& model, const std::vector<std::uint64_t>& indices,
                                  const CorrectorSeries& D, double epsilon, const ProbeConfig& cfg) {
  return wlln_probe(model, indices, D, epsilon, cfg);
}

inline std::vector<std::uint64_t> identity_indices(std::uint64_t n) {
  std::vector<std::uint64_t> v(n);
  for (std::uint64_t i = 0; i < n; ++i) v[i] = i + 1;
  return v;
}

// ---------------------------------------------------------------------------
// Truncation gap

struct GapPoint {
  double N = 0;
  double p_hat = 0;        // P(|(1/N)Σ f·1{|f|>N}| > eps)
  double se = 0;
  double p_hat_union = 0;  // P(some |f_{k_n}| > N, n ≤ N)
  double union_bound = 0;  // N·max_n P(|f_{k_n}| > N)
  std::optional<double> exact_union;
  bool dominated = true;   // p_hat ≤ union_bound + 3 SE
};

struct GapReport {
  double epsilon = 0;
  std::uint64_t reps = 0;
  std::uint64_t seed = 0;
  std::vector<GapPoint> points;
  bool all_dominated() const {
    return std::all_of(points.begin(), points.end(), [](const GapPoint& p) { return p.dominated; });
  }
};

/// P(∪_{n≤N} {|f_{k_n}| > N}) where the event algebra has a closed form.
inline std::optional<double> exact_union_probability(const SequenceModel& model,
                                                     const std::vector<std::uint64_t>& indices, double N) {
  const auto count = static_cast<std::size_t>(N);
  if (model.has_factor_cells()) {
    const auto cells = model.cells();
    double acc = 0;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      double none = 1.0;
      for (std::size_t i = 0; i < count; ++i) none *= 1.0 - model.conditional_marginal(indices[i], c).tail(N);
      acc += cells[c].prob * (1.0 - none);
    }
    return acc;
  }
  if (model.kind() == ModelKind::tail_vanishing) {
    // {|f_k| > N} = {|g| > max(N, k)}: nested, the smallest index dominates
    return tail_prob(model.distributions()[0], std::max(N, static_cast<double>(indices.front())));
  }
  if (model.kind() == ModelKind::example41 && model.joint_law() == JointLaw::comonotone) {
    // one shared uniform: each event is a union of two end intervals of (0,1), hence nested
    double lo = 0, hi = 0;
    for (std::size_t i = 0; i < count; ++i) {
      const Marginal m = model.marginal(indices[i]);
      lo = std::max(lo, lower_tail_mass(m.dist, N));
      hi = std::max(hi, m.tail(N) - lower_tail_mass(m.dist, N));
    }
    return lo + hi;
  }
  return std::nullopt;
}

inline GapReport truncation_gap_probe(const SequenceModel& model, const std::vector<std::uint64_t>& indices,
                                      double epsilon, const ProbeConfig& cfg) {
  if (cfg.reps < 100) throw input_error("truncation gap probe needs at least 100 replications");
  if (!(epsilon > 0)) throw input_error("epsilon must be positive");
  detail::check_probe_inputs(model, indices, CorrectorSeries::zero(), cfg);
  const std::size_t G = cfg.n_grid.size();
  const auto Nmax = static_cast<std::size_t>(cfg.n_grid.back());
  const std::vector<std::uint64_t> used(indices.begin(), indices.begin() + static_cast<std::ptrdiff_t>(Nmax));
  std::vector<std::uint64_t> hits(G, 0), unions(G, 0);
  std::vector<double> vals;
  std::optional<double> factor;
  for (std::uint64_t r = 0; r < cfg.reps; ++r) {
    sample_at(model, used, rng::Stream{cfg.seed, r, rng::Purpose::verification}, vals, factor);
    for (std::size_t g = 0; g < G; ++g) {
      const double N = cfg.n_grid[g];
      double s = 0;
      bool any = false;
      for (std::size_t i = 0; i < static_cast<std::size_t>(N); ++i) {
        if (std::abs(vals[i]) > N) {
          s += vals[i];
          any = true;
        }
      }
      hits[g] += std::abs(s / N) > epsilon;
      unions[g] += any;
    }
  }
  GapReport out;
  out.epsilon = epsilon;
  out.reps = cfg.reps;
  out.seed = cfg.seed;
  const double R = static_cast<double>(cfg.reps);
  for (std::size_t g = 0; g < G; ++g) {
    GapPoint p;
    p.N = cfg.n_grid[g];
    p.p_hat = static_cast<double>(hits[g]) / R;
    p.se = std::sqrt(p.p_hat * (1.0 - p.p_hat) / R);
    p.p_hat_union = static_cast<double>(unions[g]) / R;
    double worst = 0;
    for (std::size_t i = 0; i < static_cast<std::size_t>(p.N); ++i) worst = std::max(worst, model.marginal(used[i]).tail(p.N));
    p.union_bound = p.N * worst;
    p.exact_union = exact_union_probability(model, used, p.N);
    p.dominated = p.p_hat <= p.union_bound + 3.0 * p.se + 1e-12;
    out.points.push_back(p);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Hereditary suite

enum class Pattern { every_2nd, every_3rd, random_thinning, prefix_shift };

inline const char* to_string(Pattern p) {
  switch (p) {
    case Pattern::every_2nd: return "every-2nd";
    case Pattern::every_3rd: return "every-3rd";
    case Pattern::random_thinning: return "random-thinning";
    case Pattern::prefix_shift: return "prefix-shift";
  }
  return "?";
}

inline Pattern parse_pattern(const std::string& s) {
  if (s == "every-2nd") return Pattern::every_2nd;
  if (s == "every-3rd") return Pattern::every_3rd;
  if (s == "random-thinning") return Pattern::random_thinning;
  if (s == "prefix-shift") return Pattern::prefix_shift;
  throw input_error("unknown pattern '" + s + "'");
}

enum class CorrectorMode { fixed, recomputed };

struct HereditaryConfig {
  std::vector<Pattern> patterns{Pattern::every_2nd, Pattern::every_3rd, Pattern::random_thinning,
                                Pattern::prefix_shift};
  CorrectorMode corrector_mode = CorrectorMode::fixed;
  std::size_t prefix_shift = 16;
};

/// 1-based positions of the plan kept by a pattern.
inline std::vector<std::size_t> pattern_positions(Pattern p, std::size_t length, std::uint64_t seed,
                                                  std::size_t shift = 16) {
  std::vector<std::size_t> out;
  for (std::size_t pos = 1; pos <= length; ++pos) {
    bool keep = false;
    switch (p) {
      case Pattern::every_2nd: keep = pos % 2 == 0; break;
      case Pattern::every_3rd: keep = pos % 3 == 0; break;
      case Pattern::random_thinning:
        keep = rng::uniform(rng::Stream{seed, 0, rng::Purpose::thinning}, rng::Draw::marginal, pos) < 0.5;
        break;
      case Pattern::prefix_shift: keep = pos > shift; break;
    }
    if (keep) out.push_back(pos);
  }
  return out;
}

struct HereditaryResult {
  std::vector<ConvergenceReport> reports;
  bool pass = true;
  std::vector<std::string> warnings;
};

inline HereditaryResult hereditary_suite(const SequenceModel& model, const std::vector<std::uint64_t>& plan_indices,
                                         const CorrectorSeries& D, double epsilon, const ProbeConfig& cfg,
                                         const HereditaryConfig& hcfg = {}) {
  if (hcfg.patterns.empty()) throw input_error("no thinning patterns given");
  HereditaryResult out;
  for (Pattern p : hcfg.patterns) {
    const auto pos = pattern_positions(p, plan_indices.size(), cfg.seed, hcfg.prefix_shift);
    std::vector<std::uint64_t> idx;
    for (auto q : pos) idx.push_back(plan_indices[q - 1]);
    ProbeConfig c = cfg;
    c.n_grid.clear();
    for (double N : cfg.n_grid)
      if (N <= static_cast<double>(idx.size())) c.n_grid.push_back(N);
    std::string warning;
    if (c.n_grid.size() < cfg.n_grid.size())
      warning = std::string(to_string(p)) + ": subsequence of length " + std::to_string(idx.size()) +
                " shorter than max(N-grid); grid truncated";
    if (!warning.empty()) out.warnings.push_back(warning);
    if (c.n_grid.empty()) {
      ConvergenceReport rep;
      rep.label = to_string(p);
      rep.epsilon = epsilon;
      rep.reps = cfg.reps;
      rep.seed = cfg.seed;
      rep.notes.push_back(warning);
      out.reports.push_back(rep);
      out.pass = false;
      continue;
    }
    CorrectorSeries used = D;
    if (hcfg.corrector_mode == CorrectorMode::recomputed) used = corrector_independent_on_indices(model, idx, c.n_grid);
    auto rep = wlln_probe(model, idx, used, epsilon, c);
    rep.label = to_string(p);
    rep.corrector_mode = hcfg.corrector_mode == CorrectorMode::fixed ? "fixed" : "recomputed";
    if (!warning.empty()) rep.notes.push_back(warning);
    out.pass = out.pass && rep.verdict == ConvergenceVerdict::consistent;
    out.reports.push_back(std::move(rep));
  }
  return out;
}

}  // namespace wlln
