#pragma once

// Random sequences f_1, f_2, ... with seeded sampling and exact oracles.
//
// Five kinds:
//   iid                f_n ~ dist
//   independent_array  f_n ~ cycle[(n-1) mod p], independent coordinates
//   tail_vanishing     f_n = g·1{|g| > n}, one g per path
//   example41          P(f_n = 0) = rho_n, heavy-tailed atoms otherwise;
//                      coordinates independent or comonotone (one shared uniform)
//   latent_shift       f_n = B + eta_n, B drawn once per path, eta_n iid given B
//
// "Factor cells" describe conditional independence: given the cell, the
// coordinates are independent with the cell's conditional marginals. The
// independent kinds have one trivial cell; latent_shift has one cell per
// atom of B; tail_vanishing and comonotone example41 have none.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "wlln/distribution.hpp"
#include "wlln/errors.hpp"
#include "wlln/rng.hpp"
#include "wlln/series.hpp"

namespace wlln {

enum class ModelKind { iid, independent_array, tail_vanishing, example41, latent_shift };
enum class JointLaw { independent, comonotone };

inline const char* to_string(ModelKind k) {
  switch (k) {
    case ModelKind::iid: return "iid";
    case ModelKind::independent_array: return "independent_array";
    case ModelKind::tail_vanishing: return "tail_vanishing";
    case ModelKind::example41: return "example41";
    case ModelKind::latent_shift: return "latent_shift";
  }
  return "?";
}

/// n ↦ rho_n for the example model.
struct RhoSequence {
  enum class Type { constant, log_decay };
  Type type = Type::constant;
  double value = 0.5;  // constant
  double shift = 2.0;  // log_decay: rho_n = 1 − 1/log(n + shift)

  static RhoSequence constant(double v) { return {Type::constant, v, 2.0}; }
  static RhoSequence log_decay(double s = 2.0) { return {Type::log_decay, 0.0, s}; }

  void validate() const {
    if (type == Type::constant && !(value >= 0.0 && value <= 1.0)) throw input_error("rho must lie in [0,1]");
    if (type == Type::log_decay && !(shift >= std::exp(1.0) - 1.0))
      throw input_error("log_decay shift must be ≥ e − 1 so that rho_1 ≥ 0");
  }

  double at(std::uint64_t n) const {
    if (type == Type::constant) return value;
    return 1.0 - 1.0 / std::log(static_cast<double>(n) + shift);
  }

  /// lim_n (1 − rho_n).
  double limit_nonzero_mass() const { return type == Type::constant ? 1.0 - value : 0.0; }
};

struct FactorCell {
  double factor = 0;
  double prob = 1;
};

struct SamplePath {
  std::uint64_t seed = 0;
  std::vector<double> values;
  std::optional<double> factor_value;
};

class SequenceModel {
 public:
  static constexpr std::uint64_t kDefaultCap = std::uint64_t{1} << 40;

  static SequenceModel iid(Distribution d, std::uint64_t cap = kDefaultCap) {
    validate(d);
    SequenceModel m(ModelKind::iid, cap);
    m.dists_.push_back(std::move(d));
    return m;
  }

  static SequenceModel independent_array(std::vector<Distribution> cycle, std::uint64_t cap = kDefaultCap) {
    if (cycle.empty()) throw input_error("independent_array needs a non-empty cycle");
    for (const auto& d : cycle) validate(d);
    SequenceModel m(ModelKind::independent_array, cap);
    m.dists_ = std::move(cycle);
    return m;
  }

  static SequenceModel tail_vanishing(Distribution g, std::uint64_t cap = kDefaultCap) {
    validate(g);
    SequenceModel m(ModelKind::tail_vanishing, cap);
    m.dists_.push_back(std::move(g));
    return m;
  }

  static SequenceModel example41(RhoSequence rho, Example41Support support = Example41Support::symmetric,
                                 JointLaw law = JointLaw::independent, std::uint64_t cap = kDefaultCap) {
    rho.validate();
    SequenceModel m(ModelKind::example41, cap);
    m.rho_ = rho;
    m.support_ = support;
    m.joint_ = law;
    return m;
  }

  static SequenceModel latent_shift(FiniteDistribution factor, FiniteDistribution noise,
                                    std::uint64_t cap = kDefaultCap) {
    SequenceModel m(ModelKind::latent_shift, cap);
    m.factor_ = std::move(factor);
    m.noise_ = std::move(noise);
    for (const auto& b : m.factor_.atoms()) m.cond_.push_back(shifted(m.noise_, b.value));
    std::vector<Atom> mix;
    for (std::size_t i = 0; i < m.cond_.size(); ++i)
      for (const auto& a : m.cond_[i].atoms()) mix.push_back({a.value, a.prob * m.factor_.atoms()[i].prob});
    m.dists_.push_back(FiniteDistribution(std::move(mix)));
    return m;
  }

  ModelKind kind() const { return kind_; }
  std::uint64_t index_cap() const { return cap_; }
  JointLaw joint_law() const { return joint_; }
  const RhoSequence& rho() const { return rho_; }
  Example41Support support() const { return support_; }
  const std::vector<Distribution>& distributions() const { return dists_; }
  const FiniteDistribution& factor_distribution() const { return factor_; }
  const FiniteDistribution& noise_distribution() const { return noise_; }

  void check_index(std::uint64_t n) const {
    if (n < 1) throw input_error("indices start at 1");
    if (n > cap_) throw capacity_error("index " + std::to_string(n) + " exceeds index_cap " + std::to_string(cap_));
  }

  /// Law of f_n.
  Marginal marginal(std::uint64_t n) const {
    check_index(n);
    switch (kind_) {
      case ModelKind::iid:
      case ModelKind::latent_shift: return {dists_[0], 0.0};
      case ModelKind::independent_array: return {dists_[(n - 1) % dists_.size()], 0.0};
      case ModelKind::tail_vanishing: return {dists_[0], static_cast<double>(n)};
      case ModelKind::example41: return {Example41Marginal{rho_.at(n), support_}, 0.0};
    }
    return {};
  }

  /// True when coordinates are conditionally independent given a finite factor.
  bool has_factor_cells() const {
    return kind_ == ModelKind::iid || kind_ == ModelKind::independent_array || kind_ == ModelKind::latent_shift ||
           (kind_ == ModelKind::example41 && joint_ == JointLaw::independent);
  }

  /// Fully independent coordinates (single trivial cell).
  bool independent_coordinates() const { return has_factor_cells() && kind_ != ModelKind::latent_shift; }

  std::vector<FactorCell> cells() const {
    if (!has_factor_cells()) throw unsupported_oracle(std::string(to_string(kind_)) + " has no factor cells");
    if (kind_ != ModelKind::latent_shift) return {{0.0, 1.0}};
    std::vector<FactorCell> out;
    for (const auto& a : factor_.atoms()) out.push_back({a.value, a.prob});
    return out;
  }

  /// Law of f_n given factor cell `cell` (index into cells()).
  Marginal conditional_marginal(std::uint64_t n, std::size_t cell) const {
    if (kind_ == ModelKind::latent_shift) {
      check_index(n);
      return {cond_.at(cell), 0.0};
    }
    return marginal(n);
  }

  /// Whether sample paths expose a realized driving factor.
  bool exposes_factor() const { return kind_ == ModelKind::latent_shift; }

 private:
  SequenceModel(ModelKind k, std::uint64_t cap) : kind_(k), cap_(cap) {
    if (cap < 1) throw input_error("index_cap must be ≥ 1");
  }

  static FiniteDistribution shifted(const FiniteDistribution& d, double b) {
    std::vector<Atom> out;
    for (const auto& a : d.atoms()) out.push_back({a.value + b, a.prob});
    return FiniteDistribution(std::move(out));
  }

  ModelKind kind_;
  std::uint64_t cap_;
  std::vector<Distribution> dists_;
  RhoSequence rho_;
  Example41Support support_ = Example41Support::symmetric;
  JointLaw joint_ = JointLaw::independent;
  FiniteDistribution factor_, noise_;
  std::vector<FiniteDistribution> cond_;
};

// ---------------------------------------------------------------------------
// Sampling

/// Draws f at the given (strictly positive) indices for one replication.
/// Values depend only on (seed, replication, purpose, index), never on which
/// other indices are requested.
inline void sample_at(const SequenceModel& model, std::span<const std::uint64_t> indices, const rng::Stream& stream,
                      std::vector<double>& out, std::optional<double>& factor) {
  out.resize(indices.size());
  factor.reset();
  for (auto n : indices) model.check_index(n);
  switch (model.kind()) {
    case ModelKind::iid:
    case ModelKind::independent_array:
    case ModelKind::example41: {
      if (model.kind() == ModelKind::example41 && model.joint_law() == JointLaw::comonotone) {
        const double u = rng::uniform(stream, rng::Draw::factor, 0);
        for (std::size_t i = 0; i < indices.size(); ++i) out[i] = model.marginal(indices[i]).sample(u, 0.5);
        return;
      }
      if (model.kind() == ModelKind::iid) {
        const auto& d = model.distributions()[0];
        for (std::size_t i = 0; i < indices.size(); ++i) {
          const auto u = rng::uniform_pair(stream, rng::Draw::marginal, indices[i]);
          out[i] = quantile(d, u[0], u[1]);
        }
        return;
      }
      for (std::size_t i = 0; i < indices.size(); ++i) {
        const auto u = rng::uniform_pair(stream, rng::Draw::marginal, indices[i]);
        out[i] = model.marginal(indices[i]).sample(u[0], u[1]);
      }
      return;
    }
    case ModelKind::tail_vanishing: {
      const auto u = rng::uniform_pair(stream, rng::Draw::factor, 0);
      const double g = quantile(model.distributions()[0], u[0], u[1]);
      for (std::size_t i = 0; i < indices.size(); ++i)
        out[i] = std::abs(g) > static_cast<double>(indices[i]) ? g : 0.0;
      return;
    }
    case ModelKind::latent_shift: {
      const double b = model.factor_distribution().quantile(rng::uniform(stream, rng::Draw::factor, 0));
      factor = b;
      for (std::size_t i = 0; i < indices.size(); ++i)
        out[i] = b + model.noise_distribution().quantile(rng::uniform(stream, rng::Draw::marginal, indices[i]));
      return;
    }
  }
}

/// f_1..f_length for replication 0 of `seed`.
inline SamplePath sample_path(const SequenceModel& model, std::uint64_t length, std::uint64_t seed,
                              std::uint64_t replication = 0, rng::Purpose purpose = rng::Purpose::verification) {
  if (length < 1) throw input_error("path length must be positive");
  if (length > model.index_cap())
    throw capacity_error("path length " + std::to_string(length) + " exceeds index_cap");
  std::vector<std::uint64_t> idx(length);
  for (std::uint64_t i = 0; i < length; ++i) idx[i] = i + 1;
  SamplePath p;
  p.seed = seed;
  sample_at(model, idx, rng::Stream{seed, replication, purpose}, p.values, p.factor_value);
  return p;
}

// ---------------------------------------------------------------------------
// Exact oracles

/// P(|f_n| > M).
inline double marginal_tail_prob(const SequenceModel& model, std::uint64_t n, double M) {
  return model.marginal(n).tail(M);
}

/// E(f_n^order · 1{|f_n| ≤ M}), order ∈ {1, 2}.
inline double truncated_moment(const SequenceModel& model, std::uint64_t n, double M, int order) {
  return model.marginal(n).moment(M, order);
}

/// b ↦ E[f·1{|f| ≤ N} | B = b] for conditionally iid models.
struct FactorMap {
  struct Entry {
    double factor = 0;
    double prob = 1;
    double value = 0;
  };
  std::vector<Entry> entries;

  bool constant() const { return entries.size() == 1; }

  double at(double factor) const {
    if (entries.size() == 1) return entries[0].value;
    for (const auto& e : entries)
      if (e.factor == factor) return e.value;
    throw input_error("factor value not in the factor support");
  }
};

inline FactorMap conditional_truncated_mean(const SequenceModel& model, double N) {
  if (!(N > 0)) throw input_error("truncation level must be positive");
  FactorMap out;
  if (model.kind() == ModelKind::iid) {
    out.entries.push_back({0.0, 1.0, truncated_moment(model, 1, N, 1)});
    return out;
  }
  if (model.kind() != ModelKind::latent_shift)
    throw unsupported_oracle("conditional truncated mean needs an iid or latent_shift model");
  const auto cells = model.cells();
  for (std::size_t c = 0; c < cells.size(); ++c)
    out.entries.push_back({cells[c].factor, cells[c].prob, model.conditional_marginal(1, c).moment(N, 1)});
  return out;
}

namespace detail {

struct UInterval {
  double lo, hi, value;
};

// Inverse-CDF layout of the atoms with |value| ≤ N on (0,1), nonzero values only.
inline std::vector<UInterval> quantile_layout(const Marginal& m, double N) {
  auto e = enumerate_atoms(m.dist, N);
  std::sort(e.atoms.begin(), e.atoms.end(), [](const Atom& a, const Atom& b) { return a.value < b.value; });
  std::vector<UInterval> out;
  double u = lower_tail_mass(m.dist, N);
  for (const auto& a : e.atoms) {
    const double hi = u + a.prob;
    if (a.value != 0.0 && a.prob > 0) out.push_back({u, hi, a.value});
    u = hi;
  }
  return out;
}

}  // namespace detail

/// E[Q_a(U)·1{|Q_a(U)|≤N} · Q_b(U)·1{|Q_b(U)|≤N}] for one shared uniform U.
inline double comonotone_product(const Marginal& a, const Marginal& b, double N) {
  const auto la = detail::quantile_layout(a, N);
  const auto lb = detail::quantile_layout(b, N);
  double acc = 0;
  std::size_t i = 0, j = 0;
  while (i < la.size() && j < lb.size()) {
    const double lo = std::max(la[i].lo, lb[j].lo);
    const double hi = std::min(la[i].hi, lb[j].hi);
    if (hi > lo) acc += la[i].value * lb[j].value * (hi - lo);
    (la[i].hi < lb[j].hi ? i : j)++;
  }
  return acc;
}

/// E[f_j^{[-N,N]} · f_k^{[-N,N]}].
inline double joint_truncated_moment(const SequenceModel& model, std::uint64_t j, std::uint64_t k, double N) {
  if (j == k) return truncated_moment(model, j, N, 2);
  if (model.has_factor_cells()) {
    const auto cells = model.cells();
    double acc = 0;
    for (std::size_t c = 0; c < cells.size(); ++c)
      acc += cells[c].prob * model.conditional_marginal(j, c).moment(N, 1) * model.conditional_marginal(k, c).moment(N, 1);
    return acc;
  }
  if (model.kind() == ModelKind::tail_vanishing) {
    // both nonzero iff |g| > max(j,k); product is g^2 on that event
    const double lo = static_cast<double>(std::max(j, k));
    model.check_index(std::max(j, k));
    return band_moment(model.distributions()[0], lo, N, 2);
  }
  return comonotone_product(model.marginal(j), model.marginal(k), N);
}

}  // namespace wlln
