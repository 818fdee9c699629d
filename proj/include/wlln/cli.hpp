#pragma once

// Experiment configuration and the command pipeline behind the `wlln` tool.
//
// A config is resolved once (every default made explicit), written to
// manifest.json together with the command name, and then executed. The
// manifest never records the output directory, so replaying it into a fresh
// directory reproduces every JSON and CSV file byte for byte.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wlln/correctors.hpp"
#include "wlln/errors.hpp"
#include "wlln/extract.hpp"
#include "wlln/io.hpp"
#include "wlln/model.hpp"
#include "wlln/tails.hpp"
#include "wlln/verify.hpp"

namespace wlln::cli {

using json = nlohmann::json;
namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitExpectation = 2;
inline constexpr int kExitExtraction = 3;
inline constexpr int kExitViolation = 4;
inline constexpr int kExitUsage = 64;

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kToolVersion = "wlln 1.0.0";

inline std::vector<double> doubling(double from, double to) {
  std::vector<double> g;
  for (double x = from; x <= to; x *= 2) g.push_back(x);
  return g;
}

// ---------------------------------------------------------------------------
// Config resolution

inline std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> g;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t"), e = item.find_last_not_of(" \t");
    if (b == std::string::npos) throw input_error("empty entry in grid '" + text + "'");
    const std::string t = item.substr(b, e - b + 1);
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(t, &used);
    } catch (const std::exception&) {
      throw input_error("bad grid entry '" + t + "'");
    }
    if (used != t.size()) throw input_error("bad grid entry '" + t + "'");
    g.push_back(v);
  }
  if (g.empty()) throw input_error("grid is empty");
  return g;
}

namespace detail {

inline json section(const json& cfg, const char* name) {
  if (!cfg.contains(name) || cfg.at(name).is_null()) return json::object();
  if (!cfg.at(name).is_object()) throw input_error(std::string(name) + ": expected an object");
  return cfg.at(name);
}

inline void check_grid(const std::vector<double>& g, const std::string& what, bool integers) {
  if (g.empty()) throw input_error(what + " is empty");
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!(g[i] > 0) || !std::isfinite(g[i])) throw input_error(what + " values must be positive");
    if (integers && g[i] != std::floor(g[i])) throw input_error(what + " values must be integers");
    if (i > 0 && !(g[i] > g[i - 1])) throw input_error(what + " must be strictly increasing");
  }
}

inline const std::set<std::string> kVerdictTokens{"holds", "holds-on-grid", "fails", "inconclusive"};
inline const std::set<std::string> kProbeTokens{"consistent-with-wlln", "violation", "inconclusive"};

inline json opt_token(const json& j, const char* key, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.contains(key) || j.at(key).is_null()) return nullptr;
  const auto s = io::get<std::string>(j, key, where);
  if (!allowed.count(s)) throw input_error(where + ": '" + s + "' is not a valid expectation for " + key);
  return s;
}

}  // namespace detail

/// Fills in every default and validates. The result is self-contained
/// (model inlined) and is what the manifest records.
inline json resolve_config(const json& in, const fs::path& base_dir = {}) {
  if (!in.is_object()) throw input_error("config must be a JSON object");
  io::check_keys(in, {"schema_version", "label", "seed", "model", "tails", "corrector", "extract", "verify",
                      "hereditary", "gap", "expect"},
                 "config");
  json out;
  const int version = io::get_or<int>(in, "schema_version", kSchemaVersion, "config");
  if (version != kSchemaVersion) throw input_error("unsupported schema_version " + std::to_string(version));
  out["schema_version"] = version;
  out["label"] = io::get_or<std::string>(in, "label", "custom", "config");
  out["seed"] = io::get_or<std::uint64_t>(in, "seed", 20240601, "config");

  if (!in.contains("model")) throw input_error("config: missing 'model'");
  json model_j = in.at("model");
  if (model_j.is_string()) {
    fs::path p = model_j.get<std::string>();
    if (p.is_relative()) p = base_dir / p;
    std::ifstream f(p);
    if (!f) throw input_error("cannot open model file " + p.string());
    try {
      model_j = json::parse(f);
    } catch (const json::exception& e) {
      throw input_error("model file " + p.string() + ": " + e.what());
    }
  }
  const SequenceModel model = io::parse_model(model_j);
  out["model"] = io::to_json(model);

  // tails
  {
    const json t = detail::section(in, "tails");
    io::check_keys(t, {"m_grid", "n_range", "max_points", "envelope", "energy_tol", "feller_grid"}, "tails");
    const auto m_grid = io::get_or<std::vector<double>>(t, "m_grid", doubling(1, 4096), "tails");
    detail::check_grid(m_grid, "tails.m_grid", false);
    auto n_range = io::get_or<std::vector<std::uint64_t>>(
        t, "n_range", {1, std::min<std::uint64_t>(model.index_cap(), 4096)}, "tails");
    if (n_range.size() != 2 || n_range[0] < 1 || n_range[1] < n_range[0])
      throw input_error("tails.n_range must be [lo, hi] with 1 ≤ lo ≤ hi");
    if (n_range[1] > model.index_cap()) throw input_error("tails.n_range exceeds the model's index_cap");
    json feller = nullptr;
    if (t.contains("feller_grid") && !t.at("feller_grid").is_null()) {
      const auto fg = io::get<std::vector<double>>(t, "feller_grid", "tails");
      detail::check_grid(fg, "tails.feller_grid", true);
      feller = fg;
    } else if (model.independent_coordinates()) {
      feller = doubling(64, 16384);
    }
    out["tails"] = {{"m_grid", m_grid},
                    {"n_range", n_range},
                    {"max_points", io::get_or<std::uint64_t>(t, "max_points", 512, "tails")},
                    {"envelope", t.contains("envelope") ? t.at("envelope") : json(nullptr)},
                    {"energy_tol", io::get_or<double>(t, "energy_tol", 1e-3, "tails")},
                    {"feller_grid", feller}};
    if (!out["tails"]["envelope"].is_null() && !out["tails"]["envelope"].is_number())
      throw input_error("tails.envelope must be a number (the coefficient a in a/log M)");
  }

  // verify
  json verify;
  {
    const json v = detail::section(in, "verify");
    io::check_keys(v, {"epsilon", "n_grid", "reps", "pass_threshold", "margin", "indices", "expect", "contrast"},
                   "verify");
    const auto grid = io::get_or<std::vector<double>>(v, "n_grid", {64, 256, 1024, 4096}, "verify");
    detail::check_grid(grid, "verify.n_grid", true);
    const auto reps = io::get_or<std::int64_t>(v, "reps", 2000, "verify");
    if (reps < 1) throw input_error("verify.reps must be ≥ 1");
    const double eps = io::get_or<double>(v, "epsilon", 0.25, "verify");
    if (!(eps > 0)) throw input_error("verify.epsilon must be positive");
    const auto indices = io::get_or<std::string>(v, "indices", "plan", "verify");
    if (indices != "plan" && indices != "identity") throw input_error("verify.indices must be plan|identity");
    json contrast = nullptr;
    if (v.contains("contrast") && !v.at("contrast").is_null()) {
      const json c = v.at("contrast");
      io::check_keys(c, {"corrector", "expect"}, "verify.contrast");
      contrast = {{"corrector", io::get<json>(c, "corrector", "verify.contrast")},
                  {"expect", detail::opt_token(c, "expect", detail::kProbeTokens, "verify.contrast")}};
    }
    verify = {{"epsilon", eps},
              {"n_grid", grid},
              {"reps", reps},
              {"pass_threshold", io::get_or<double>(v, "pass_threshold", 0.05, "verify")},
              {"margin", io::get_or<double>(v, "margin", 0.01, "verify")},
              {"indices", indices},
              {"expect", detail::opt_token(v, "expect", detail::kProbeTokens, "verify")},
              {"contrast", contrast}};
  }

  // hereditary
  json hered;
  {
    const json h = detail::section(in, "hereditary");
    io::check_keys(h, {"enabled", "n_grid", "patterns", "corrector_mode", "prefix_shift", "expect"}, "hereditary");
    const auto grid = io::get_or<std::vector<double>>(h, "n_grid", verify["n_grid"].get<std::vector<double>>(),
                                                      "hereditary");
    detail::check_grid(grid, "hereditary.n_grid", true);
    const auto pats = io::get_or<std::vector<std::string>>(
        h, "patterns", {"every-2nd", "every-3rd", "random-thinning", "prefix-shift"}, "hereditary");
    for (const auto& p : pats) parse_pattern(p);
    const auto mode = io::get_or<std::string>(h, "corrector_mode", "fixed", "hereditary");
    if (mode != "fixed" && mode != "recomputed") throw input_error("hereditary.corrector_mode must be fixed|recomputed");
    json expect = nullptr;
    if (h.contains("expect") && !h.at("expect").is_null()) {
      const auto e = io::get<std::string>(h, "expect", "hereditary");
      if (e != "pass" && e != "fail") throw input_error("hereditary.expect must be pass|fail");
      expect = e;
    }
    hered = {{"enabled", io::get_or<bool>(h, "enabled", true, "hereditary")},
             {"n_grid", grid},
             {"patterns", pats},
             {"corrector_mode", mode},
             {"prefix_shift", io::get_or<std::uint64_t>(h, "prefix_shift", 16, "hereditary")},
             {"expect", expect}};
  }

  // extract
  json extract;
  {
    const json e = detail::section(in, "extract");
    io::check_keys(e, {"enabled", "target_length", "levels", "mode", "reps", "eps_floor", "search_start",
                       "witness_tol", "witness_M", "search_cap"},
                   "extract");
    const auto levels = io::get_or<std::vector<double>>(e, "levels", doubling(1, 4096), "extract");
    detail::check_grid(levels, "extract.levels", false);
    const auto vmax = static_cast<std::uint64_t>(verify["n_grid"].back().get<double>());
    const auto target = io::get_or<std::uint64_t>(e, "target_length", vmax, "extract");
    if (target < 1) throw input_error("extract.target_length must be ≥ 1");
    const auto mode = io::get_or<std::string>(e, "mode", "exact", "extract");
    if (mode != "exact" && mode != "sample") throw input_error("extract.mode must be exact|sample");
    json start = e.contains("search_start") ? e.at("search_start") : json(1);
    if (!((start.is_number_integer() && start.get<std::int64_t>() >= 1) || start == "energy_witness"))
      throw input_error("extract.search_start must be a positive integer or \"energy_witness\"");
    if (start.is_number_integer()) start = start.get<std::uint64_t>();
    json cap = e.contains("search_cap") ? e.at("search_cap") : json(nullptr);
    if (!cap.is_null() && !(cap.is_number_integer() && cap.get<std::int64_t>() >= 1))
      throw input_error("extract.search_cap must be a positive integer");
    if (!cap.is_null()) cap = cap.get<std::uint64_t>();
    extract = {{"enabled", io::get_or<bool>(e, "enabled", true, "extract")},
               {"target_length", target},
               {"levels", levels},
               {"mode", mode},
               {"reps", io::get_or<std::uint64_t>(e, "reps", 1000, "extract")},
               {"eps_floor", e.contains("eps_floor") ? e.at("eps_floor") : json(nullptr)},
               {"search_start", start},
               {"witness_tol", io::get_or<double>(e, "witness_tol", 1e-3, "extract")},
               {"witness_M", io::get_or<double>(e, "witness_M", out["tails"]["m_grid"].back().get<double>(), "extract")},
               {"search_cap", cap}};
  }

  // corrector
  {
    const json c = detail::section(in, "corrector");
    io::check_keys(c, {"method", "levels", "pilot_fraction", "paths", "path_length"}, "corrector");
    const auto method = io::get_or<std::string>(c, "method", "weak_l2", "corrector");
    static const std::set<std::string> methods{"zero", "iid", "independent", "weak_l2", "cesaro"};
    if (!methods.count(method)) throw input_error("corrector.method must be one of zero|iid|independent|weak_l2|cesaro");
    std::vector<double> levels;
    if (c.contains("levels") && !c.at("levels").is_null()) {
      levels = io::get<std::vector<double>>(c, "levels", "corrector");
    } else {
      std::set<double> all;
      for (const auto& x : extract["levels"]) all.insert(x.get<double>());
      for (const auto& x : verify["n_grid"]) all.insert(x.get<double>());
      for (const auto& x : hered["n_grid"]) all.insert(x.get<double>());
      levels.assign(all.begin(), all.end());
    }
    detail::check_grid(levels, "corrector.levels", false);
    const double pf = io::get_or<double>(c, "pilot_fraction", 0.2, "corrector");
    if (!(pf > 0 && pf < 1)) throw input_error("corrector.pilot_fraction must lie in (0,1)");
    out["corrector"] = {{"method", method},
                        {"levels", levels},
                        {"pilot_fraction", pf},
                        {"paths", io::get_or<std::uint64_t>(c, "paths", 64, "corrector")},
                        {"path_length", io::get_or<std::uint64_t>(
                                            c, "path_length",
                                            static_cast<std::uint64_t>(5.0 * levels.back()), "corrector")}};
  }

  // gap
  {
    const json g = detail::section(in, "gap");
    io::check_keys(g, {"enabled", "epsilon"}, "gap");
    out["gap"] = {{"enabled", io::get_or<bool>(g, "enabled", true, "gap")},
                  {"epsilon", io::get_or<double>(g, "epsilon", verify["epsilon"].get<double>(), "gap")}};
  }

  // expectations on the tail conditions
  {
    const json x = detail::section(in, "expect");
    io::check_keys(x, {"weak_l1", "liminf_tail", "limsup_tail", "energy_vanishing", "feller_tail", "feller_energy"},
                   "expect");
    json e = json::object();
    for (const char* k : {"weak_l1", "liminf_tail", "limsup_tail", "energy_vanishing", "feller_tail", "feller_energy"})
      e[k] = detail::opt_token(x, k, detail::kVerdictTokens, "expect");
    out["expect"] = e;
  }

  out["extract"] = extract;
  out["verify"] = verify;
  out["hereditary"] = hered;
  return out;
}

// ---------------------------------------------------------------------------
// Demo presets

inline json demo_preset(const std::string& name) {
  if (name == "counterexample") {
    return json::parse(R"({
      "label": "counterexample",
      "seed": 20240601,
      "model": {"kind": "tail_vanishing", "params": {"g": {"family": "pareto", "alpha": 1.0, "scale": 1.0}}},
      "tails": {"m_grid": [1,2,4,8,16,32,64,128,256,512,1024,2048,4096], "n_range": [1, 1048576]},
      "corrector": {"method": "weak_l2"},
      "extract": {"levels": [1,2,4,8,16,32,64,128,256,512,1024,2048,4096], "target_length": 4096,
                  "mode": "exact", "search_cap": 16384},
      "verify": {"epsilon": 0.25, "n_grid": [64,256,1024,4096], "reps": 2000, "expect": "consistent-with-wlln"},
      "hereditary": {"n_grid": [64,256,1024], "expect": "pass"},
      "expect": {"weak_l1": "fails", "limsup_tail": "holds", "liminf_tail": "holds", "energy_vanishing": "holds"}
    })");
  }
  if (name == "example41") {
    return json::parse(R"({
      "label": "example41",
      "seed": 20240601,
      "model": {"kind": "example41", "params": {"rho": {"type": "log_decay", "shift": 2.0}, "support": "symmetric"},
                "joint_law": "independent", "index_cap": 4611686018427387904},
      "tails": {"m_grid": [1,2,4,8,16,32,64,128,256,512,1024,2048,4096], "n_range": [1, 4611686018427387904]},
      "corrector": {"method": "weak_l2"},
      "extract": {"levels": [2,4,8,16,32,64,128,256,512,1024,2048,4096], "target_length": 4096, "mode": "exact",
                  "search_start": "energy_witness", "witness_tol": 0.006, "witness_M": 4096},
      "verify": {"epsilon": 0.25, "n_grid": [64,256,1024,4096], "reps": 2000, "expect": "consistent-with-wlln"},
      "hereditary": {"n_grid": [64,256,1024], "expect": "pass"},
      "expect": {"weak_l1": "holds-on-grid", "liminf_tail": "holds", "limsup_tail": "holds",
                 "energy_vanishing": "holds"}
    })");
  }
  if (name == "latent-shift") {
    return json::parse(R"({
      "label": "latent-shift",
      "seed": 20240601,
      "model": {"kind": "latent_shift",
                "params": {"factor": {"family": "finite", "atoms": [[-1, 0.5], [1, 0.5]]},
                           "noise": {"family": "uniform_int", "lo": -2, "hi": 2}}},
      "tails": {"m_grid": [1,2,4,8,16], "n_range": [1, 1024]},
      "corrector": {"method": "weak_l2"},
      "extract": {"levels": [1,4,16,64,256,1024], "target_length": 1024, "mode": "exact", "search_cap": 4096},
      "verify": {"epsilon": 0.5, "n_grid": [1,4,16,64,256,1024], "reps": 2000, "expect": "consistent-with-wlln",
                 "contrast": {"corrector": {"method": "zero"}, "expect": "violation"}},
      "hereditary": {"n_grid": [4,16,64,256], "expect": "pass"},
      "expect": {"weak_l1": "holds-on-grid", "energy_vanishing": "fails"}
    })");
  }
  throw input_error("unknown demo '" + name + "' (expected example41, counterexample or latent-shift)");
}

// ---------------------------------------------------------------------------
// Running

struct RunOptions {
  bool plot = false;
  std::ostream* log = &std::cout;
};

struct Expectation {
  std::string name, expected, observed;
  bool met = true;
};

struct RunResult {
  int exit_code = kExitOk;
  std::vector<Expectation> expectations;
  std::vector<std::string> files;
  std::optional<ExtractionPlan> plan;
  std::optional<CorrectorSeries> corrector;
  std::optional<ConvergenceReport> report;
  std::optional<ConvergenceReport> contrast;
  std::optional<HereditaryResult> hereditary;
  std::optional<GapReport> gap;
  std::map<std::string, ConditionVerdict> verdicts;
  std::string summary;
};

inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

inline void write_file(const fs::path& dir, const std::string& name, const std::string& text, RunResult& res) {
  std::ofstream f(dir / name, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + (dir / name).string());
  f << text;
  res.files.push_back(name);
}

/// p_hat against N (log scale) with 99% Wilson bars.
inline std::string report_svg(const ConvergenceReport& r) {
  const double W = 480, H = 300, L = 60, B = 40, T = 20, Rm = 20;
  const double x0 = std::log2(r.points.front().N), x1 = std::max(x0 + 1, std::log2(r.points.back().N));
  auto X = [&](double N) { return L + (std::log2(N) - x0) / (x1 - x0) * (W - L - Rm); };
  auto Y = [&](double p) { return H - B - p * (H - B - T); };
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << Y(0) << "\" x2=\"" << W - Rm << "\" y2=\"" << Y(0)
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << Y(0) << "\" x2=\"" << L << "\" y2=\"" << Y(1) << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << Y(r.pass_threshold) << "\" x2=\"" << W - Rm << "\" y2=\""
     << Y(r.pass_threshold) << "\" stroke=\"grey\" stroke-dasharray=\"4\"/>\n";
  for (double p : {0.0, 0.5, 1.0})
    os << "<text x=\"" << L - 8 << "\" y=\"" << Y(p) + 4 << "\" font-size=\"11\" text-anchor=\"end\">" << p
       << "</text>\n";
  std::string poly;
  for (const auto& p : r.points) {
    os << "<line x1=\"" << X(p.N) << "\" y1=\"" << Y(p.ci.lo) << "\" x2=\"" << X(p.N) << "\" y2=\"" << Y(p.ci.hi)
       << "\" stroke=\"steelblue\"/>\n";
    os << "<circle cx=\"" << X(p.N) << "\" cy=\"" << Y(p.p_hat) << "\" r=\"3\" fill=\"steelblue\"/>\n";
    os << "<text x=\"" << X(p.N) << "\" y=\"" << H - B + 16 << "\" font-size=\"11\" text-anchor=\"middle\">"
       << io::num(p.N) << "</text>\n";
    poly += std::to_string(X(p.N)) + "," + std::to_string(Y(p.p_hat)) + " ";
  }
  os << "<polyline points=\"" << poly << "\" fill=\"none\" stroke=\"steelblue\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"" << H - 6 << "\" font-size=\"12\" text-anchor=\"middle\">N</text>\n";
  os << "<text x=\"14\" y=\"" << H / 2 << "\" font-size=\"12\" transform=\"rotate(-90 14 " << H / 2
     << ")\" text-anchor=\"middle\">P(|A_N - D_N| &gt; " << r.epsilon << ")</text>\n";
  os << "</svg>\n";
  return os.str();
}

namespace detail {

inline bool verdict_matches(Verdict v, const std::string& expected) {
  if (expected == "holds") return is_positive(v);
  return expected == to_string(v);
}

inline std::vector<double> levels_of(const json& j) { return j.get<std::vector<double>>(); }

inline CorrectorSeries build_corrector(const SequenceModel& model, const json& spec, const json& cfg) {
  const auto method = spec.at("method").get<std::string>();
  const auto levels = levels_of(spec.at("levels"));
  if (method == "zero") return CorrectorSeries::zero(levels);
  if (method == "iid") {
    if (model.kind() != ModelKind::iid) throw input_error("corrector method iid needs an iid model");
    return corrector_iid(model.distributions()[0], levels);
  }
  if (method == "independent") return corrector_independent(model, levels);
  if (method == "weak_l2") return corrector_weak_l2(model, levels);
  // cesaro: pilot paths from a stream separate from verification
  const auto P = spec.at("paths").get<std::uint64_t>();
  const auto L = spec.at("path_length").get<std::uint64_t>();
  std::vector<SamplePath> paths;
  for (std::uint64_t r = 0; r < P; ++r)
    paths.push_back(sample_path(model, L, cfg.at("seed").get<std::uint64_t>(), r, rng::Purpose::pilot));
  return corrector_cesaro_estimate(paths, levels, spec.at("pilot_fraction").get<double>());
}

// A corrector spec given inline (e.g. verify.contrast) inherits the main levels.
inline json corrector_spec(const json& partial, const json& main) {
  json s = main;
  for (const auto& [k, v] : partial.items()) {
    if (!s.contains(k)) throw input_error("corrector: unknown key '" + k + "'");
    s[k] = v;
  }
  return s;
}

}  // namespace detail

struct Stages {
  bool tails = false, extract = false, verify = false, hereditary = false;
};

inline Stages stages_for(const std::string& command) {
  if (command == "tails") return {true, false, false, false};
  if (command == "extract") return {false, true, false, false};
  if (command == "verify") return {false, false, true, false};
  if (command == "hereditary") return {false, false, false, true};
  if (command == "pipeline") return {true, true, true, true};
  throw input_error("unknown command '" + command + "'");
}

/// Runs `command` on a resolved config, writing outputs into `out_dir`.
inline RunResult run(const std::string& command, const json& cfg, const fs::path& out_dir,
                     const RunOptions& opt = {}) {
  const Stages st = stages_for(command);
  RunResult res;
  fs::create_directories(out_dir);
  std::ostream& log = *opt.log;
  const SequenceModel model = io::parse_model(cfg.at("model"));
  const auto seed = cfg.at("seed").get<std::uint64_t>();
  const json& tc = cfg.at("tails");
  const json& ec = cfg.at("extract");
  const json& vc = cfg.at("verify");
  const json& hc = cfg.at("hereditary");

  write_file(out_dir, "manifest.json",
             dump({{"command", command}, {"config", cfg}, {"schema_version", kSchemaVersion}, {"tool", kToolVersion}}),
             res);

  std::ostringstream summary;
  summary << "wlln " << command << " [" << cfg.at("label").get<std::string>() << "]  model "
          << to_string(model.kind()) << ", seed " << seed << "\n";

  auto expect = [&](const std::string& name, const json& expected, const std::string& observed, bool met) {
    if (expected.is_null()) return;
    res.expectations.push_back({name, expected.get<std::string>(), observed, met});
  };

  // tail conditions
  if (st.tails) {
    const auto m_grid = tc.at("m_grid").get<std::vector<double>>();
    const auto nr = tc.at("n_range").get<std::vector<std::uint64_t>>();
    const IndexRange range{nr[0], nr[1]};
    const auto profile = build_profile(model, m_grid, range, tc.at("max_points").get<std::size_t>());
    std::optional<Envelope> env;
    if (!tc.at("envelope").is_null()) env = Envelope{tc.at("envelope").get<double>()};
    res.verdicts["weak_l1"] = check_weak_l1(model, profile, env);
    res.verdicts["liminf_tail"] = check_liminf_condition(model, profile, env);
    res.verdicts["limsup_tail"] = check_limsup_condition(model, profile, env);
    res.verdicts["energy_vanishing"] = check_energy_vanishing(model, m_grid, range, tc.at("energy_tol").get<double>());
    if (!tc.at("feller_grid").is_null() && model.independent_coordinates()) {
      auto f = check_feller_necessary(model, tc.at("feller_grid").get<std::vector<double>>());
      res.verdicts["feller_tail"] = f.tail_verdict;
      res.verdicts["feller_energy"] = f.energy_verdict;
    }
    json vj = json::object();
    for (const auto& [k, v] : res.verdicts) vj[k] = io::to_json(v);
    write_file(out_dir, "tails.csv", io::tails_csv(model, profile), res);
    write_file(out_dir, "verdicts.json", dump(vj), res);
    summary << "tail conditions:\n";
    for (const auto& [k, v] : res.verdicts) {
      summary << "  " << k << ": " << to_string(v.verdict) << "  (" << v.witness << ")\n";
      const json& e = cfg.at("expect").contains(k) ? cfg.at("expect").at(k) : json(nullptr);
      if (!e.is_null()) expect(k, e, to_string(v.verdict), detail::verdict_matches(v.verdict, e.get<std::string>()));
    }
  }

  const bool need_plan = st.extract || st.hereditary || (st.verify && vc.at("indices") == "plan");
  const bool need_corrector = need_plan || st.verify;
  if (need_corrector) {
    res.corrector = detail::build_corrector(model, cfg.at("corrector"), cfg);
    write_file(out_dir, "corrector.json", dump(io::to_json(*res.corrector)), res);
    summary << "corrector: " << to_string(res.corrector->kind) << " via " << res.corrector->provenance
            << (res.corrector->zero_everywhere ? " (identically zero)" : "") << "\n";
  }

  if (need_plan && ec.at("enabled").get<bool>()) {
    ExtractionConfig xc;
    xc.target_length = ec.at("target_length").get<std::size_t>();
    xc.n_grid = ec.at("levels").get<std::vector<double>>();
    xc.mode = ec.at("mode") == "exact" ? ModeSpec::exact() : ModeSpec::sample(ec.at("reps").get<std::uint64_t>(), seed);
    if (!ec.at("eps_floor").is_null()) xc.eps_floor = ec.at("eps_floor").get<double>();
    if (ec.at("search_start").is_string()) {
      const double M = ec.at("witness_M").get<double>();
      const auto w = check_energy_vanishing(model, {M}, {1, model.index_cap()}, ec.at("witness_tol").get<double>());
      if (w.witness_indices.empty())
        throw input_error("no energy witness index with sigma_n(M) ≤ witness_tol within index_cap");
      xc.search_start = w.witness_indices.front().second;
      summary << "energy witness: sigma_n(" << io::num(M) << ") ≤ " << io::num(ec.at("witness_tol").get<double>())
              << " from n = " << xc.search_start << "\n";
    } else {
      xc.search_start = ec.at("search_start").get<std::uint64_t>();
    }
    if (ec.at("search_cap").is_null()) {
      const double room = 4.0 * static_cast<double>(xc.target_length) + xc.n_grid.back();
      const double cap = std::min(static_cast<double>(model.index_cap()), static_cast<double>(xc.search_start) + room);
      xc.search_cap = static_cast<std::uint64_t>(cap);
    } else {
      xc.search_cap = ec.at("search_cap").get<std::uint64_t>();
    }
    try {
      res.plan = greedy_extract(model, *res.corrector, xc);
    } catch (const extraction_failure& f) {
      write_file(out_dir, "failure.json", dump({{"error", f.what()}, {"diagnostics", io::to_json(f.diag)}}), res);
      summary << "extraction FAILED: " << f.what() << "\n";
      res.summary = summary.str();
      log << res.summary;
      res.exit_code = kExitExtraction;
      return res;
    }
    write_file(out_dir, "plan.json", dump(io::to_json(*res.plan)), res);
    const auto& ix = res.plan->indices;
    summary << "plan: " << ix.size() << " indices, first";
    for (std::size_t i = 0; i < std::min<std::size_t>(4, ix.size()); ++i) summary << ' ' << ix[i];
    summary << ", last " << ix.back() << " (" << to_string(res.plan->mode.mode) << " mode)\n";
  }

  auto probe_cfg = [&](const json& grid) {
    ProbeConfig pc;
    pc.n_grid = grid.get<std::vector<double>>();
    pc.reps = vc.at("reps").get<std::uint64_t>();
    pc.seed = seed;
    pc.pass_threshold = vc.at("pass_threshold").get<double>();
    pc.margin = vc.at("margin").get<double>();
    return pc;
  };
  auto indices_for = [&](double n_needed) {
    if (vc.at("indices") == "identity" || !res.plan) return identity_indices(static_cast<std::uint64_t>(n_needed));
    return res.plan->indices;
  };
  bool violation = false;

  if (st.verify) {
    const ProbeConfig pc = probe_cfg(vc.at("n_grid"));
    const auto idx = indices_for(pc.n_grid.back());
    const double eps = vc.at("epsilon").get<double>();
    res.report = wlln_probe(model, idx, *res.corrector, eps, pc);
    write_file(out_dir, "report.json", dump(io::to_json(*res.report)), res);
    write_file(out_dir, "report.csv", io::report_csv(*res.report), res);
    if (opt.plot) write_file(out_dir, "report.svg", report_svg(*res.report), res);
    summary << "verify (eps " << io::num(eps) << ", R " << pc.reps << "): " << to_string(res.report->verdict) << "\n";
    for (const auto& p : res.report->points)
      summary << "  N " << io::num(p.N) << "  p_hat " << io::num(p.p_hat) << "  l2_hat " << io::num(p.l2_hat) << "\n";
    const json& e = vc.at("expect");
    expect("verify", e, to_string(res.report->verdict), e.is_null() || e == to_string(res.report->verdict));
    if (res.report->verdict == ConvergenceVerdict::violation && e != "violation") violation = true;

    if (!vc.at("contrast").is_null()) {
      const json spec = detail::corrector_spec(vc.at("contrast").at("corrector"), cfg.at("corrector"));
      const CorrectorSeries alt = detail::build_corrector(model, spec, cfg);
      res.contrast = wlln_probe(model, idx, alt, eps, pc);
      res.contrast->label = "contrast";
      write_file(out_dir, "contrast.json", dump({{"corrector", io::to_json(alt)}, {"report", io::to_json(*res.contrast)}}),
                 res);
      write_file(out_dir, "contrast.csv", io::report_csv(*res.contrast), res);
      summary << "contrast corrector " << spec.at("method").get<std::string>() << ": "
              << to_string(res.contrast->verdict) << "\n";
      const json& ce = vc.at("contrast").at("expect");
      expect("verify.contrast", ce, to_string(res.contrast->verdict),
             ce.is_null() || ce == to_string(res.contrast->verdict));
      if (res.contrast->verdict == ConvergenceVerdict::violation && ce != "violation") violation = true;
    }

    if (cfg.at("gap").at("enabled").get<bool>() && pc.reps >= 100) {
      res.gap = truncation_gap_probe(model, idx, cfg.at("gap").at("epsilon").get<double>(), pc);
      write_file(out_dir, "gap.json", dump(io::to_json(*res.gap)), res);
      write_file(out_dir, "gap.csv", io::gap_csv(*res.gap), res);
      summary << "truncation gap: " << (res.gap->all_dominated() ? "dominated by the union bound" : "NOT dominated")
              << " on every N\n";
    }
  }

  if (st.hereditary && hc.at("enabled").get<bool>()) {
    if (!res.plan) throw input_error("hereditary suite needs an extraction plan");
    const ProbeConfig pc = probe_cfg(hc.at("n_grid"));
    HereditaryConfig hcfg;
    hcfg.patterns.clear();
    for (const auto& p : hc.at("patterns")) hcfg.patterns.push_back(parse_pattern(p.get<std::string>()));
    hcfg.corrector_mode = hc.at("corrector_mode") == "fixed" ? CorrectorMode::fixed : CorrectorMode::recomputed;
    hcfg.prefix_shift = hc.at("prefix_shift").get<std::size_t>();
    res.hereditary = hereditary_suite(model, res.plan->indices, *res.corrector, vc.at("epsilon").get<double>(), pc, hcfg);
    json reps = json::array();
    for (const auto& r : res.hereditary->reports) {
      reps.push_back(io::to_json(r));
      write_file(out_dir, "hereditary_" + r.label + ".csv", io::report_csv(r), res);
    }
    write_file(out_dir, "hereditary.json",
               dump({{"pass", res.hereditary->pass}, {"warnings", res.hereditary->warnings}, {"reports", reps}}), res);
    summary << "hereditary (" << hc.at("corrector_mode").get<std::string>() << " correctors): "
            << (res.hereditary->pass ? "pass" : "fail") << "\n";
    for (const auto& r : res.hereditary->reports)
      summary << "  " << r.label << ": " << to_string(r.verdict)
              << (r.points.empty() ? "" : ", final p_hat " + io::num(r.points.back().p_hat)) << "\n";
    const json& e = hc.at("expect");
    const std::string obs = res.hereditary->pass ? "pass" : "fail";
    expect("hereditary", e, obs, e.is_null() || e == obs);
    for (const auto& r : res.hereditary->reports)
      if (r.verdict == ConvergenceVerdict::violation && e != "fail") violation = true;
  }

  json ej = json::array();
  bool all_met = true;
  for (const auto& x : res.expectations) {
    ej.push_back({{"name", x.name}, {"expected", x.expected}, {"observed", x.observed}, {"met", x.met}});
    all_met = all_met && x.met;
  }
  if (!res.expectations.empty()) {
    summary << "expectations:\n";
    for (const auto& x : res.expectations)
      summary << "  " << (x.met ? "met    " : "UNMET  ") << x.name << ": expected " << x.expected << ", observed "
              << x.observed << "\n";
  }
  res.exit_code = violation ? kExitViolation : (all_met ? kExitOk : kExitExpectation);
  write_file(out_dir, "summary.json", dump({{"command", command}, {"exit_code", res.exit_code}, {"expectations", ej}}),
             res);
  summary << "exit code " << res.exit_code << "\n";
  res.summary = summary.str();
  log << res.summary;
  return res;
}

/// Re-executes the command recorded in a manifest.
inline RunResult replay(const fs::path& manifest, const fs::path& out_dir, const RunOptions& opt = {}) {
  std::ifstream f(manifest);
  if (!f) throw input_error("cannot open manifest " + manifest.string());
  json m;
  try {
    m = json::parse(f);
  } catch (const json::exception& e) {
    throw input_error("manifest: " + std::string(e.what()));
  }
  io::check_keys(m, {"command", "config", "schema_version", "tool"}, "manifest");
  return run(io::get<std::string>(m, "command", "manifest"), resolve_config(io::get<json>(m, "config", "manifest")),
             out_dir, opt);
}

inline json load_config(const fs::path& p) {
  std::ifstream f(p);
  if (!f) throw input_error("cannot open config " + p.string());
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    throw input_error("config " + p.string() + ": " + e.what());
  }
}

inline fs::path default_out(const std::string& leaf) {
  const char* root = std::getenv("WLLN_OUT_ROOT");
  return fs::path(root && *root ? root : "wlln-out") / leaf;
}

}  // namespace wlln::cli
