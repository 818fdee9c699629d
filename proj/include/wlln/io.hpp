#pragma once

// JSON and CSV forms of models, correctors, plans and reports.
//
// Model files:
//
//   {"kind": "iid",               "params": {"dist": <dist>}}
//   {"kind": "independent_array", "params": {"cycle": [<dist>, ...]}}
//   {"kind": "tail_vanishing",    "params": {"g": <dist>}}
//   {"kind": "example41",         "params": {"rho": <rho>, "support": "symmetric"|"positive"},
//                                 "joint_law": "independent"|"comonotone"}
//   {"kind": "latent_shift",      "params": {"factor": <finite dist>, "noise": <finite dist>}}
//
// plus an optional "index_cap". Distributions:
//
//   {"family": "finite", "atoms": [[value, prob], ...]}
//   {"family": "point_mass", "value": v}
//   {"family": "uniform_int", "lo": a, "hi": b}
//   {"family": "pareto", "alpha": a, "scale": s, "symmetric": false}
//   {"family": "example41", "rho": r, "support": "symmetric"}
//
// rho: {"type": "constant", "value": r} or {"type": "log_decay", "shift": s}.
// Unknown keys are rejected everywhere.

#include <charconv>
#include <cstdint>
#include <initializer_list>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wlln/correctors.hpp"
#include "wlln/distribution.hpp"
#include "wlln/errors.hpp"
#include "wlln/extract.hpp"
#include "wlln/model.hpp"
#include "wlln/tails.hpp"
#include "wlln/verify.hpp"

namespace wlln::io {

using json = nlohmann::json;

inline void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw input_error(where + ": expected an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : j.items())
    if (!ok.count(k)) throw input_error(where + ": unknown key '" + k + "'");
}

template <class T>
T get(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw input_error(where + ": missing key '" + std::string(key) + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw input_error(where + ": bad value for '" + std::string(key) + "': " + e.what());
  }
}

template <class T>
T get_or(const json& j, const char* key, T fallback, const std::string& where) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  return get<T>(j, key, where);
}

// ---------------------------------------------------------------------------
// Distributions and models

inline Example41Support parse_support(const std::string& s) {
  if (s == "symmetric") return Example41Support::symmetric;
  if (s == "positive") return Example41Support::positive;
  throw input_error("support must be 'symmetric' or 'positive'");
}

inline const char* to_string(Example41Support s) {
  return s == Example41Support::symmetric ? "symmetric" : "positive";
}

inline FiniteDistribution parse_finite(const json& j, const std::string& where) {
  const auto fam = get<std::string>(j, "family", where);
  if (fam == "finite") {
    check_keys(j, {"family", "atoms"}, where);
    std::vector<Atom> atoms;
    for (const auto& a : get<json>(j, "atoms", where)) {
      if (!a.is_array() || a.size() != 2) throw input_error(where + ": atoms are [value, prob] pairs");
      atoms.push_back({a[0].get<double>(), a[1].get<double>()});
    }
    return FiniteDistribution(std::move(atoms));
  }
  if (fam == "point_mass") {
    check_keys(j, {"family", "value"}, where);
    return FiniteDistribution::point_mass(get<double>(j, "value", where));
  }
  if (fam == "uniform_int") {
    check_keys(j, {"family", "lo", "hi"}, where);
    const auto lo = get<std::int64_t>(j, "lo", where), hi = get<std::int64_t>(j, "hi", where);
    if (hi < lo || hi - lo > 100000) throw input_error(where + ": uniform_int needs lo ≤ hi and at most 1e5 atoms");
    std::vector<Atom> atoms;
    const double p = 1.0 / static_cast<double>(hi - lo + 1);
    for (auto v = lo; v <= hi; ++v) atoms.push_back({static_cast<double>(v), p});
    return FiniteDistribution(std::move(atoms));
  }
  throw input_error(where + ": expected a finite distribution family, got '" + fam + "'");
}

inline Distribution parse_distribution(const json& j, const std::string& where = "dist") {
  const auto fam = get<std::string>(j, "family", where);
  if (fam == "pareto") {
    check_keys(j, {"family", "alpha", "scale", "symmetric"}, where);
    ParetoDistribution p{get<double>(j, "alpha", where), get_or<double>(j, "scale", 1.0, where),
                         get_or<bool>(j, "symmetric", false, where)};
    Distribution d = p;
    validate(d);
    return d;
  }
  if (fam == "example41") {
    check_keys(j, {"family", "rho", "support"}, where);
    Distribution d = Example41Marginal{get<double>(j, "rho", where),
                                       parse_support(get_or<std::string>(j, "support", "symmetric", where))};
    validate(d);
    return d;
  }
  return parse_finite(j, where);
}

inline json to_json(const Distribution& d) {
  return std::visit(
      [](const auto& x) -> json {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, FiniteDistribution>) {
          json atoms = json::array();
          for (const auto& a : x.atoms()) atoms.push_back({a.value, a.prob});
          return {{"family", "finite"}, {"atoms", atoms}};
        } else if constexpr (std::is_same_v<T, ParetoDistribution>) {
          return {{"family", "pareto"}, {"alpha", x.alpha}, {"scale", x.scale}, {"symmetric", x.symmetric}};
        } else {
          return {{"family", "example41"}, {"rho", x.rho}, {"support", to_string(x.support)}};
        }
      },
      d);
}

inline RhoSequence parse_rho(const json& j) {
  if (j.is_number()) return RhoSequence::constant(j.get<double>());
  const auto type = get<std::string>(j, "type", "rho");
  if (type == "constant") {
    check_keys(j, {"type", "value"}, "rho");
    return RhoSequence::constant(get<double>(j, "value", "rho"));
  }
  if (type == "log_decay") {
    check_keys(j, {"type", "shift"}, "rho");
    return RhoSequence::log_decay(get_or<double>(j, "shift", 2.0, "rho"));
  }
  throw input_error("rho type must be 'constant' or 'log_decay'");
}

inline json to_json(const RhoSequence& r) {
  if (r.type == RhoSequence::Type::constant) return {{"type", "constant"}, {"value", r.value}};
  return {{"type", "log_decay"}, {"shift", r.shift}};
}

inline SequenceModel parse_model(const json& j) {
  check_keys(j, {"kind", "params", "index_cap", "joint_law"}, "model");
  const auto kind = get<std::string>(j, "kind", "model");
  const auto cap = get_or<std::uint64_t>(j, "index_cap", SequenceModel::kDefaultCap, "model");
  const json params = get_or<json>(j, "params", json::object(), "model");
  if (j.contains("joint_law") && kind != "example41") throw input_error("model: joint_law only applies to example41");
  if (kind == "iid") {
    check_keys(params, {"dist"}, "model.params");
    return SequenceModel::iid(parse_distribution(get<json>(params, "dist", "model.params"), "model.params.dist"), cap);
  }
  if (kind == "independent_array") {
    check_keys(params, {"cycle"}, "model.params");
    std::vector<Distribution> cyc;
    for (const auto& d : get<json>(params, "cycle", "model.params")) cyc.push_back(parse_distribution(d, "cycle"));
    return SequenceModel::independent_array(std::move(cyc), cap);
  }
  if (kind == "tail_vanishing") {
    check_keys(params, {"g"}, "model.params");
    return SequenceModel::tail_vanishing(parse_distribution(get<json>(params, "g", "model.params"), "model.params.g"),
                                         cap);
  }
  if (kind == "example41") {
    check_keys(params, {"rho", "support"}, "model.params");
    const auto law = get_or<std::string>(j, "joint_law", "independent", "model");
    if (law != "independent" && law != "comonotone") throw input_error("joint_law must be independent|comonotone");
    return SequenceModel::example41(parse_rho(get<json>(params, "rho", "model.params")),
                                    parse_support(get_or<std::string>(params, "support", "symmetric", "model.params")),
                                    law == "independent" ? JointLaw::independent : JointLaw::comonotone, cap);
  }
  if (kind == "latent_shift") {
    check_keys(params, {"factor", "noise"}, "model.params");
    return SequenceModel::latent_shift(parse_finite(get<json>(params, "factor", "model.params"), "factor"),
                                       parse_finite(get<json>(params, "noise", "model.params"), "noise"), cap);
  }
  throw input_error("model: unknown kind '" + kind + "'");
}

inline json to_json(const SequenceModel& m) {
  json j;
  j["kind"] = to_string(m.kind());
  j["index_cap"] = m.index_cap();
  switch (m.kind()) {
    case ModelKind::iid: j["params"] = {{"dist", to_json(m.distributions()[0])}}; break;
    case ModelKind::independent_array: {
      json c = json::array();
      for (const auto& d : m.distributions()) c.push_back(to_json(d));
      j["params"] = {{"cycle", c}};
      break;
    }
    case ModelKind::tail_vanishing: j["params"] = {{"g", to_json(m.distributions()[0])}}; break;
    case ModelKind::example41:
      j["params"] = {{"rho", to_json(m.rho())}, {"support", to_string(m.support())}};
      j["joint_law"] = m.joint_law() == JointLaw::independent ? "independent" : "comonotone";
      break;
    case ModelKind::latent_shift:
      j["params"] = {{"factor", to_json(Distribution(m.factor_distribution()))},
                     {"noise", to_json(Distribution(m.noise_distribution()))}};
      break;
  }
  return j;
}

// ---------------------------------------------------------------------------
// Correctors

inline json to_json(const CorrectorSeries& s) {
  json levels = json::array();
  for (const auto& l : s.levels) {
    json e{{"N", l.N}};
    if (s.kind == CorrectorKind::conditional) {
      json t = json::array();
      for (const auto& x : l.table) t.push_back({{"factor", x.factor}, {"prob", x.prob}, {"value", x.value}});
      e["table"] = t;
    } else {
      e["value"] = l.value;
    }
    if (l.uncertainty) e["uncertainty"] = *l.uncertainty;
    levels.push_back(e);
  }
  return {{"kind", to_string(s.kind)},       {"provenance", s.provenance}, {"test_functions", s.test_functions},
          {"heuristic", s.heuristic},        {"zero_everywhere", s.zero_everywhere}, {"levels", levels}};
}

inline CorrectorSeries parse_corrector(const json& j) {
  check_keys(j, {"kind", "provenance", "test_functions", "heuristic", "zero_everywhere", "levels"}, "corrector");
  CorrectorSeries s;
  const auto kind = get<std::string>(j, "kind", "corrector");
  if (kind == "constant") s.kind = CorrectorKind::constant;
  else if (kind == "conditional") s.kind = CorrectorKind::conditional;
  else if (kind == "estimated") s.kind = CorrectorKind::estimated;
  else throw input_error("corrector: unknown kind '" + kind + "'");
  s.provenance = get_or<std::string>(j, "provenance", "", "corrector");
  s.test_functions = get_or<std::string>(j, "test_functions", "constants", "corrector");
  s.heuristic = get_or<bool>(j, "heuristic", false, "corrector");
  s.zero_everywhere = get_or<bool>(j, "zero_everywhere", false, "corrector");
  for (const auto& e : get<json>(j, "levels", "corrector")) {
    check_keys(e, {"N", "value", "table", "uncertainty"}, "corrector.levels");
    CorrectorLevel l;
    l.N = get<double>(e, "N", "corrector.levels");
    l.value = get_or<double>(e, "value", 0.0, "corrector.levels");
    if (e.contains("table"))
      for (const auto& t : e.at("table"))
        l.table.push_back({get<double>(t, "factor", "table"), get<double>(t, "prob", "table"),
                           get<double>(t, "value", "table")});
    if (e.contains("uncertainty")) l.uncertainty = get<double>(e, "uncertainty", "corrector.levels");
    s.levels.push_back(std::move(l));
  }
  return s;
}

// ---------------------------------------------------------------------------
// Plans

inline json to_json(const ExtractionPlan& p) {
  json recs = json::array();
  for (const auto& r : p.records)
    recs.push_back({{"step", r.step},
                    {"N", r.N},
                    {"worst_value", r.worst_value},
                    {"worst_half_width", r.worst_half_width},
                    {"worst_predecessor", r.worst_predecessor},
                    {"checks", r.checks}});
  return {{"indices", p.indices},
          {"thresholds", p.thresholds},
          {"n_grid", p.n_grid},
          {"records", recs},
          {"mode", {{"mode", to_string(p.mode.mode)}, {"reps", p.mode.reps}, {"seed", p.mode.seed}}},
          {"eps_floor", p.eps_floor},
          {"search_cap", p.search_cap},
          {"search_start", p.search_start},
          {"candidates_examined", p.candidates_examined},
          {"corrector_provenance", p.corrector_provenance},
          {"notes", p.notes}};
}

inline ExtractionPlan parse_plan(const json& j) {
  ExtractionPlan p;
  p.indices = get<std::vector<std::uint64_t>>(j, "indices", "plan");
  p.thresholds = get<std::vector<double>>(j, "thresholds", "plan");
  p.n_grid = get<std::vector<double>>(j, "n_grid", "plan");
  for (const auto& r : get<json>(j, "records", "plan"))
    p.records.push_back({get<std::size_t>(r, "step", "record"), get<double>(r, "N", "record"),
                         get<double>(r, "worst_value", "record"), get<double>(r, "worst_half_width", "record"),
                         get<std::size_t>(r, "worst_predecessor", "record"), get<std::size_t>(r, "checks", "record")});
  const json m = get<json>(j, "mode", "plan");
  p.mode.mode = get<std::string>(m, "mode", "plan.mode") == "exact" ? InnerProductMode::exact : InnerProductMode::sample;
  p.mode.reps = get<std::uint64_t>(m, "reps", "plan.mode");
  p.mode.seed = get<std::uint64_t>(m, "seed", "plan.mode");
  p.eps_floor = get<double>(j, "eps_floor", "plan");
  p.search_cap = get<std::uint64_t>(j, "search_cap", "plan");
  p.search_start = get_or<std::uint64_t>(j, "search_start", 1, "plan");
  p.candidates_examined = get_or<std::uint64_t>(j, "candidates_examined", 0, "plan");
  p.corrector_provenance = get_or<std::string>(j, "corrector_provenance", "", "plan");
  p.notes = get_or<std::vector<std::string>>(j, "notes", {}, "plan");
  return p;
}

inline json to_json(const ExtractionDiagnostics& d) {
  return {{"step", d.step},
          {"accepted", d.accepted},
          {"best_candidate", d.best_candidate},
          {"best_excess", std::isfinite(d.best_excess) ? json(d.best_excess) : json(nullptr)},
          {"tightest_predecessor", d.tightest_predecessor},
          {"tightest_N", d.tightest_N},
          {"tightest_value", d.tightest_value},
          {"threshold", d.threshold}};
}

// ---------------------------------------------------------------------------
// Verdicts and reports

inline json to_json(const ConditionVerdict& v) {
  json trend = json::array();
  for (const auto& [x, y] : v.trend) trend.push_back({x, y});
  json wi = json::array();
  for (const auto& [M, n] : v.witness_indices) wi.push_back({{"M", M}, {"n", n}});
  return {{"condition", v.condition},
          {"verdict", to_string(v.verdict)},
          {"witness", v.witness},
          {"trend", trend},
          {"witness_indices", wi}};
}

inline json to_json(const ConvergenceReport& r) {
  json pts = json::array();
  for (const auto& p : r.points)
    pts.push_back({{"N", p.N},
                   {"exceed", p.exceed},
                   {"p_hat", p.p_hat},
                   {"ci", {p.ci.lo, p.ci.hi}},
                   {"p_hat_truncated", p.p_hat_truncated},
                   {"l2_hat", p.l2_hat},
                   {"l2_se", p.l2_se},
                   {"markov_ok", p.markov_ok}});
  return {{"label", r.label},
          {"n_grid", r.n_grid},
          {"epsilon", r.epsilon},
          {"reps", r.reps},
          {"seed", r.seed},
          {"pass_threshold", r.pass_threshold},
          {"margin", r.margin},
          {"points", pts},
          {"verdict", to_string(r.verdict)},
          {"significant_increase", r.significant_increase},
          {"corrector_provenance", r.corrector_provenance},
          {"corrector_mode", r.corrector_mode},
          {"notes", r.notes}};
}

inline json to_json(const GapReport& g) {
  json pts = json::array();
  for (const auto& p : g.points)
    pts.push_back({{"N", p.N},
                   {"p_hat", p.p_hat},
                   {"se", p.se},
                   {"p_hat_union", p.p_hat_union},
                   {"union_bound", p.union_bound},
                   {"exact_union", p.exact_union ? json(*p.exact_union) : json(nullptr)},
                   {"dominated", p.dominated}});
  return {{"epsilon", g.epsilon}, {"reps", g.reps}, {"seed", g.seed}, {"points", pts}};
}

// ---------------------------------------------------------------------------
// CSV

/// Shortest round-trip decimal form of a double.
inline std::string num(double x) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

inline std::string num(std::uint64_t x) { return std::to_string(x); }

inline std::string report_csv(const ConvergenceReport& r) {
  std::ostringstream os;
  os << "N,p_hat,ci_lo,ci_hi,l2_hat\r\n";
  for (const auto& p : r.points)
    os << num(p.N) << ',' << num(p.p_hat) << ',' << num(p.ci.lo) << ',' << num(p.ci.hi) << ',' << num(p.l2_hat)
       << "\r\n";
  return os.str();
}

inline std::string tails_csv(const SequenceModel& model, const TailProfile& p) {
  std::ostringstream os;
  os << "n,M,tau,sigma,feller_residual\r\n";
  for (std::size_t i = 0; i < p.n_points.size(); ++i)
    for (std::size_t k = 0; k < p.m_grid.size(); ++k)
      os << p.n_points[i] << ',' << num(p.m_grid[k]) << ',' << num(p.tau[i][k]) << ',' << num(p.sigma[i][k]) << ','
         << num(feller_identity_residual(model, p.n_points[i], p.m_grid[k])) << "\r\n";
  return os.str();
}

inline std::string gap_csv(const GapReport& g) {
  std::ostringstream os;
  os << "N,p_hat,se,p_hat_union,union_bound,exact_union\r\n";
  for (const auto& p : g.points)
    os << num(p.N) << ',' << num(p.p_hat) << ',' << num(p.se) << ',' << num(p.p_hat_union) << ','
       << num(p.union_bound) << ',' << (p.exact_union ? num(*p.exact_union) : std::string()) << "\r\n";
  return os.str();
}

}  // namespace wlln::io
