#pragma once

// Truncation and the greedy near-orthogonal subsequence extraction.
//
// At step n the extractor accepts the smallest candidate k > k_{n−1} with
//
//   |E[(f_{k_j}^{[−N,N]} − D_N)(f_k^{[−N,N]} − D_N)]| ≤ eps_n   for all j < n
//
// and every grid level N ≤ exp(n²), where eps_n = max(exp(−n²), eps_floor).
// Inner products are exact (model oracles) or Monte Carlo estimates with a
// 99% half-width, in which case the estimate plus half-width must fit.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "wlln/correctors.hpp"
#include "wlln/errors.hpp"
#include "wlln/model.hpp"
#include "wlln/rng.hpp"
#include "wlln/tails.hpp"

namespace wlln {

/// f·1{|f| ≤ N}: zero outside the band, not clipped.
inline double truncate(double x, double N) { return std::abs(x) <= N ? x : 0.0; }

struct TruncationLevel {
  double N;
  explicit TruncationLevel(double n) : N(n) {
    if (!(n > 0)) throw input_error("truncation level must be positive");
  }
};

inline double truncate(double x, TruncationLevel level) { return truncate(x, level.N); }

enum class InnerProductMode { exact, sample };

inline const char* to_string(InnerProductMode m) { return m == InnerProductMode::exact ? "exact" : "sample"; }

struct ModeSpec {
  InnerProductMode mode = InnerProductMode::exact;
  std::uint64_t reps = 0;  // sample mode, ≥ 100
  std::uint64_t seed = 0;  // sample mode

  static ModeSpec exact() { return {}; }
  static ModeSpec sample(std::uint64_t reps, std::uint64_t seed) { return {InnerProductMode::sample, reps, seed}; }
};

struct Estimate {
  double value = 0;
  double half_width = 0;
};

inline constexpr double kZ99 = 2.5758293035489004;

namespace detail {

// Per-index, per-level conditional first and second truncated moments for factor-cell models.
struct CellMoments {
  std::vector<double> mean;    // per cell
  std::vector<double> square;  // per cell
};

inline CellMoments cell_moments(const SequenceModel& model, std::uint64_t k, double N) {
  CellMoments c;
  const std::size_t nc = model.cells().size();
  for (std::size_t i = 0; i < nc; ++i) {
    const Marginal m = model.conditional_marginal(k, i);
    c.mean.push_back(m.moment(N, 1));
    c.square.push_back(m.moment(N, 2));
  }
  return c;
}

inline std::vector<double> corrector_by_cell(const SequenceModel& model, const CorrectorSeries& D, double N) {
  std::vector<double> out;
  for (const auto& c : model.cells())
    out.push_back(D.needs_factor() ? D.value(N, c.factor) : D.value(N));
  return out;
}

inline double cell_inner(const std::vector<FactorCell>& cells, const CellMoments& a, const CellMoments& b,
                         const std::vector<double>& d, bool diagonal) {
  double acc = 0;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (diagonal)
      acc += cells[i].prob * (a.square[i] - 2.0 * d[i] * a.mean[i] + d[i] * d[i]);
    else
      acc += cells[i].prob * (a.mean[i] - d[i]) * (b.mean[i] - d[i]);
  }
  return acc;
}

inline double exact_inner(const SequenceModel& model, std::uint64_t j, std::uint64_t n, double N,
                          const CorrectorSeries& D) {
  if (model.has_factor_cells()) {
    const auto cells = model.cells();
    const auto d = corrector_by_cell(model, D, N);
    const auto a = cell_moments(model, j, N);
    if (j == n) return cell_inner(cells, a, a, d, true);
    return cell_inner(cells, a, cell_moments(model, n, N), d, false);
  }
  if (D.needs_factor()) throw unsupported_oracle("conditional corrector on a model without factor cells");
  const double dn = D.value(N);
  const double joint = joint_truncated_moment(model, j, n, N);
  if (dn == 0.0) return joint;
  return joint - dn * (truncated_moment(model, j, N, 1) + truncated_moment(model, n, N, 1)) + dn * dn;
}

}  // namespace detail

/// E[(f_j^{[−N,N]} − D_N)(f_n^{[−N,N]} − D_N)], exact or estimated.
inline Estimate centered_inner_product(const SequenceModel& model, std::uint64_t j, std::uint64_t n, double N,
                                       const CorrectorSeries& D, const ModeSpec& mode = ModeSpec::exact()) {
  TruncationLevel level(N);
  model.check_index(std::max(j, n));
  if (mode.mode == InnerProductMode::exact) return {detail::exact_inner(model, j, n, level.N, D), 0.0};
  if (mode.reps < 100) throw input_error("sample mode needs at least 100 replications");
  if (D.needs_factor() && !model.exposes_factor()) throw input_error("conditional corrector needs a path factor");
  const std::uint64_t idx[2] = {j, n};
  std::vector<double> vals;
  std::optional<double> factor;
  double sum = 0, sum2 = 0;
  for (std::uint64_t r = 0; r < mode.reps; ++r) {
    sample_at(model, std::span<const std::uint64_t>(idx, 2), rng::Stream{mode.seed, r, rng::Purpose::extraction}, vals,
              factor);
    const double d = D.value(N, factor);
    const double x = (truncate(vals[0], N) - d) * (truncate(vals[1], N) - d);
    sum += x;
    sum2 += x * x;
  }
  const double R = static_cast<double>(mode.reps);
  const double mean = sum / R;
  const double var = std::max(0.0, (sum2 - R * mean * mean) / (R - 1.0));
  return {mean, kZ99 * std::sqrt(var / R)};
}

/// max(exp(−n²), floor).
inline double threshold(std::size_t step, double eps_floor) {
  const double n = static_cast<double>(step);
  return std::max(std::exp(-n * n), eps_floor);
}

/// N ≤ exp(n²), evaluated in log space.
inline bool level_admissible(double N, std::size_t step) {
  const double n = static_cast<double>(step);
  return std::log(N) <= n * n;
}

struct ExtractionConfig {
  std::size_t target_length = 1;
  std::vector<double> n_grid;
  ModeSpec mode;
  std::optional<double> eps_floor;  // default: 0 exact, 1e-2 sample
  std::uint64_t search_cap = 0;     // largest candidate index examined
  std::uint64_t search_start = 1;   // smallest candidate for the first step

  double floor() const {
    if (eps_floor) return *eps_floor;
    return mode.mode == InnerProductMode::exact ? 0.0 : 1e-2;
  }
};

/// Worst recorded constraint at one (step, level).
struct ConstraintRecord {
  std::size_t step = 0;  // 1-based position n of the accepted index
  double N = 0;
  double worst_value = 0;        // inner product with the largest |value| (+ half-width in sample mode)
  double worst_half_width = 0;
  std::size_t worst_predecessor = 0;  // 1-based position j
  std::size_t checks = 0;
};

struct ExtractionPlan {
  std::vector<std::uint64_t> indices;
  std::vector<double> n_grid;
  std::vector<double> thresholds;  // thresholds[n−1] = eps_n
  std::vector<ConstraintRecord> records;
  ModeSpec mode;
  double eps_floor = 0;
  std::uint64_t search_cap = 0;
  std::uint64_t search_start = 1;
  std::uint64_t candidates_examined = 0;
  std::string corrector_provenance;
  std::vector<std::string> notes;
};

struct ExtractionDiagnostics {
  std::size_t step = 0;
  std::size_t accepted = 0;
  std::uint64_t best_candidate = 0;
  double best_excess = INFINITY;  // smallest (|ip| + hw − eps_n) over candidates, at its worst constraint
  std::uint64_t tightest_predecessor = 0;
  double tightest_N = 0;
  double tightest_value = 0;
  double threshold = 0;
};

class extraction_failure : public std::runtime_error {
 public:
  extraction_failure(const std::string& what, ExtractionDiagnostics d) : std::runtime_error(what), diag(d) {}
  ExtractionDiagnostics diag;
};

namespace detail {

// Caches the per-level cell moments of accepted indices so each candidate
// costs one pass over the predecessors.
class InnerProductCache {
 public:
  InnerProductCache(const SequenceModel& model, const CorrectorSeries& D, const std::vector<double>& grid,
                    const ModeSpec& mode)
      : model_(model), D_(D), grid_(grid), mode_(mode) {
    structured_ = mode.mode == InnerProductMode::exact && model.has_factor_cells();
    if (structured_) {
      cells_ = model.cells();
      for (double N : grid) dcell_.push_back(corrector_by_cell(model, D, N));
    }
  }

  void prepare_candidate(std::uint64_t k) {
    if (!structured_) return;
    cand_.clear();
    for (double N : grid_) cand_.push_back(cell_moments(model_, k, N));
  }

  void accept(std::uint64_t k) {
    accepted_.push_back(k);
    if (structured_) acc_moments_.push_back(cand_);
  }

  Estimate inner(std::size_t j_pos, std::uint64_t k, std::size_t level) const {
    if (structured_)
      return {cell_inner(cells_, acc_moments_[j_pos][level], cand_[level], dcell_[level], false), 0.0};
    return centered_inner_product(model_, accepted_[j_pos], k, grid_[level], D_, mode_);
  }

 private:
  // per accepted index: per level moments
  const SequenceModel& model_;
  const CorrectorSeries& D_;
  const std::vector<double>& grid_;
  ModeSpec mode_;
  bool structured_ = false;
  std::vector<FactorCell> cells_;
  std::vector<std::vector<double>> dcell_;
  std::vector<CellMoments> cand_;
  std::vector<std::uint64_t> accepted_;
  std::vector<std::vector<CellMoments>> acc_moments_;
};

}  // namespace detail

inline ExtractionPlan greedy_extract(const SequenceModel& model, const CorrectorSeries& D,
                                     const ExtractionConfig& cfg) {
  if (cfg.target_length < 1) throw input_error("target length must be ≥ 1");
  if (cfg.n_grid.empty()) throw input_error("level grid is empty");
  for (std::size_t i = 0; i < cfg.n_grid.size(); ++i) {
    if (!(cfg.n_grid[i] > 0)) throw input_error("levels must be positive");
    if (i > 0 && !(cfg.n_grid[i] > cfg.n_grid[i - 1])) throw input_error("levels must be strictly increasing");
    if (!D.covers(cfg.n_grid[i])) throw input_error("corrector does not cover every extraction level");
  }
  if (cfg.search_cap < 1) throw input_error("search_cap must be ≥ 1");
  if (cfg.search_cap > model.index_cap()) throw capacity_error("search_cap exceeds the model's index_cap");
  if (cfg.search_start < 1 || cfg.search_start > cfg.search_cap) throw input_error("search_start outside [1, search_cap]");
  if (cfg.mode.mode == InnerProductMode::sample && cfg.mode.reps < 100)
    throw input_error("sample mode needs at least 100 replications");

  ExtractionPlan plan;
  plan.n_grid = cfg.n_grid;
  plan.mode = cfg.mode;
  plan.eps_floor = cfg.floor();
  plan.search_cap = cfg.search_cap;
  plan.search_start = cfg.search_start;
  plan.corrector_provenance = D.provenance;
  if (plan.eps_floor > 0)
    plan.notes.push_back("thresholds floored at " + std::to_string(plan.eps_floor) + " instead of exp(-n^2)");
  plan.notes.push_back("constraints enforced on the configured level grid intersected with N <= exp(n^2)");
  if (cfg.search_start > 1)
    plan.notes.push_back("candidate search starts at index " + std::to_string(cfg.search_start));

  detail::InnerProductCache cache(model, D, cfg.n_grid, cfg.mode);
  std::uint64_t next = cfg.search_start;
  for (std::size_t step = 1; step <= cfg.target_length; ++step) {
    const double eps = threshold(step, plan.eps_floor);
    std::vector<std::size_t> levels;
    for (std::size_t l = 0; l < cfg.n_grid.size(); ++l)
      if (level_admissible(cfg.n_grid[l], step)) levels.push_back(l);

    ExtractionDiagnostics diag;
    diag.step = step;
    diag.accepted = step - 1;
    diag.threshold = eps;
    bool found = false;
    for (std::uint64_t k = next; k <= cfg.search_cap; ++k) {
      ++plan.candidates_examined;
      cache.prepare_candidate(k);
      std::vector<ConstraintRecord> recs;
      for (std::size_t l : levels) recs.push_back({step, cfg.n_grid[l], 0.0, 0.0, 0, 0});
      bool ok = true;
      double worst_excess = -INFINITY;
      std::size_t worst_j = 0, worst_l = 0;
      double worst_val = 0;
      for (std::size_t li = 0; li < levels.size() && ok; ++li) {
        for (std::size_t j = 0; j + 1 < step; ++j) {
          const Estimate e = cache.inner(j, k, levels[li]);
          const double mag = std::abs(e.value) + e.half_width;
          auto& r = recs[li];
          ++r.checks;
          if (r.checks == 1 || mag > std::abs(r.worst_value) + r.worst_half_width) {
            r.worst_value = e.value;
            r.worst_half_width = e.half_width;
            r.worst_predecessor = j + 1;
          }
          if (mag - eps > worst_excess) {
            worst_excess = mag - eps;
            worst_j = j;
            worst_l = levels[li];
            worst_val = e.value;
          }
          if (mag > eps) {
            ok = false;
            break;
          }
        }
      }
      if (ok) {
        cache.accept(k);
        plan.indices.push_back(k);
        plan.thresholds.push_back(eps);
        for (auto& r : recs) plan.records.push_back(r);
        next = k + 1;
        found = true;
        break;
      }
      if (worst_excess < diag.best_excess) {
        diag.best_excess = worst_excess;
        diag.best_candidate = k;
        diag.tightest_predecessor = plan.indices[worst_j];
        diag.tightest_N = cfg.n_grid[worst_l];
        diag.tightest_value = worst_val;
      }
    }
    if (!found)
      throw extraction_failure("candidate pool exhausted at step " + std::to_string(step) + " (search_cap " +
                                   std::to_string(cfg.search_cap) + ")",
                               diag);
  }
  return plan;
}

struct ReverifyResult {
  bool constraints_ok = true;     // every recomputed product within eps_n
  bool records_match = true;      // recomputed worst values equal the stored ones
  double max_record_deviation = 0;
  std::size_t products_checked = 0;
  std::string first_problem;
};

/// Recomputes every (j, n, N) constraint of the plan from scratch.
inline ReverifyResult reverify_plan(const ExtractionPlan& plan, const SequenceModel& model, const CorrectorSeries& D,
                                    double tol = 1e-12) {
  ReverifyResult out;
  std::size_t rec = 0;
  for (std::size_t step = 1; step <= plan.indices.size(); ++step) {
    const double eps = plan.thresholds.at(step - 1);
    if (step > 1 && !(plan.indices[step - 1] > plan.indices[step - 2])) {
      out.constraints_ok = false;
      if (out.first_problem.empty()) out.first_problem = "indices not strictly increasing";
    }
    for (double N : plan.n_grid) {
      if (!level_admissible(N, step)) continue;
      double worst = 0, worst_hw = 0;
      bool any = false;
      for (std::size_t j = 0; j + 1 < step; ++j) {
        const Estimate e = centered_inner_product(model, plan.indices[j], plan.indices[step - 1], N, D, plan.mode);
        ++out.products_checked;
        const double mag = std::abs(e.value) + e.half_width;
        if (mag > eps) {
          out.constraints_ok = false;
          if (out.first_problem.empty())
            out.first_problem = "constraint violated at step " + std::to_string(step) + ", N = " + std::to_string(N);
        }
        if (!any || mag > std::abs(worst) + worst_hw) worst = e.value, worst_hw = e.half_width;
        any = true;
      }
      if (rec >= plan.records.size() || plan.records[rec].step != step || plan.records[rec].N != N) {
        out.records_match = false;
        if (out.first_problem.empty()) out.first_problem = "record table does not match the plan layout";
        continue;
      }
      const auto& r = plan.records[rec++];
      const double dev = plan.mode.mode == InnerProductMode::exact
                             ? std::abs(std::abs(r.worst_value) - std::abs(worst))
                             : std::max(0.0, std::abs(std::abs(r.worst_value) - std::abs(worst)) - r.worst_half_width);
      out.max_record_deviation = std::max(out.max_record_deviation, dev);
      if (dev > tol) out.records_match = false;
    }
  }
  if (rec != plan.records.size()) out.records_match = false;
  return out;
}

/// A subsequence of the plan's positions (1-based, strictly increasing)
/// re-checked against the thresholds of the ORIGINAL step numbers.
inline ReverifyResult check_inherited_constraints(const ExtractionPlan& plan, const std::vector<std::size_t>& positions,
                                                  const SequenceModel& model, const CorrectorSeries& D) {
  ReverifyResult out;
  for (std::size_t a = 0; a < positions.size(); ++a) {
    const std::size_t step = positions[a];
    if (step < 1 || step > plan.indices.size() || (a > 0 && step <= positions[a - 1]))
      throw input_error("positions must be strictly increasing plan positions");
    const double eps = plan.thresholds[step - 1];
    for (double N : plan.n_grid) {
      if (!level_admissible(N, step)) continue;
      for (std::size_t b = 0; b < a; ++b) {
        const Estimate e =
            centered_inner_product(model, plan.indices[positions[b] - 1], plan.indices[step - 1], N, D, plan.mode);
        ++out.products_checked;
        if (std::abs(e.value) + e.half_width > eps) {
          out.constraints_ok = false;
          if (out.first_problem.empty())
            out.first_problem = "inherited constraint violated at original step " + std::to_string(step);
        }
      }
    }
  }
  return out;
}

struct CrossProductBudget {
  double N = 0;
  double head_sum = 0;
  double tail_sum = 0;
  double total = 0;
  double head_bound = 0;
  std::optional<double> tail_bound;  // only when N is a plan level
  bool within = true;
};

/// 2·Σ_{n≤N} Σ_{j<n} |E[(f_{k_j}^T − D_N)(f_{k_n}^T − D_N)]|, split at √(log N).
inline CrossProductBudget cross_product_budget(const ExtractionPlan& plan, const SequenceModel& model,
                                               const CorrectorSeries& D, double N, double tolerance = 1e-9) {
  const auto count = static_cast<std::size_t>(std::floor(N));
  if (count < 1 || count > plan.indices.size()) throw input_error("plan shorter than N");
  CrossProductBudget b;
  b.N = N;
  const double split = std::sqrt(std::log(N));
  const ModeSpec exact = ModeSpec::exact();
  for (std::size_t n = 2; n <= count; ++n) {
    double row = 0;
    for (std::size_t j = 1; j < n; ++j)
      row += std::abs(centered_inner_product(model, plan.indices[j - 1], plan.indices[n - 1], N, D, exact).value);
    (static_cast<double>(n) <= split ? b.head_sum : b.tail_sum) += 2.0 * row;
  }
  b.total = b.head_sum + b.tail_sum;

  std::vector<std::uint64_t> used(plan.indices.begin(), plan.indices.begin() + static_cast<std::ptrdiff_t>(count));
  const double ssup = sigma_sup_at(model, used, N);
  const double per_term = (D.zero_everywhere ? 1.0 : 4.0) * N * ssup;
  // at most log(N)/2 pairs sit in the head, each bounded by per_term via Cauchy-Schwarz
  b.head_bound = per_term * std::log(N) * (1.0 + tolerance) + tolerance;
  const bool on_grid = std::find(plan.n_grid.begin(), plan.n_grid.end(), N) != plan.n_grid.end();
  if (on_grid) {
    double t = 0;
    for (std::size_t n = 2; n <= count; ++n)
      if (static_cast<double>(n) > split) t += 2.0 * static_cast<double>(n - 1) * plan.thresholds[n - 1];
    b.tail_bound = t;
  }
  b.within = b.head_sum <= b.head_bound && (!b.tail_bound || b.tail_sum <= *b.tail_bound * (1.0 + tolerance) + tolerance);
  return b;
}

struct SumOfSquares {
  double N = 0;
  double lhs = 0;       // Σ E(f^T − D_N)²
  double middle = 0;    // 2ΣE(f^T)² + 2N·E(D_N²)
  double rhs = 0;       // 4N²·sigma_sup(N)
  bool first_ok = true;
  bool second_ok = true;
};

/// Σ_{n in window} E(f_n^T − D_N)² ≤ 2Σ E(f_n^T)² + 2N·E(D_N²) ≤ 4N²·sigma_sup(N).
inline SumOfSquares sum_of_squares_check(const SequenceModel& model, const CorrectorSeries& D, double N,
                                         const std::vector<std::uint64_t>& window, double tol = 1e-9) {
  if (window.empty()) throw input_error("index window is empty");
  if (static_cast<double>(window.size()) > std::floor(N)) throw input_error("window longer than N");
  SumOfSquares s;
  s.N = N;
  double sq = 0;
  for (auto k : window) {
    s.lhs += centered_inner_product(model, k, k, N, D).value;
    sq += truncated_moment(model, k, N, 2);
  }
  s.middle = 2.0 * sq + 2.0 * N * D.second_moment(N);
  s.rhs = 4.0 * N * N * sigma_sup_at(model, window, N);
  s.first_ok = s.lhs <= s.middle + tol;
  s.second_ok = s.middle <= s.rhs + tol;
  return s;
}

}  // namespace wlln
