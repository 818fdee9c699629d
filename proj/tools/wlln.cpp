#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "wlln/cli.hpp"

namespace {

using wlln::cli::json;
namespace fs = std::filesystem;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<std::int64_t> reps;
  std::optional<double> epsilon;
  std::optional<std::string> grid;
  std::optional<std::string> expect;
  std::optional<std::string> mode;
  bool plot = false;
};

void add_common(CLI::App* sub, Common& c, bool needs_config) {
  auto* opt = sub->add_option("--config", c.config, "experiment config (JSON)");
  if (needs_config) opt->required();
  sub->add_option("--seed", c.seed, "override the master seed");
  sub->add_option("--out", c.out, "output directory (default $WLLN_OUT_ROOT/<command>)");
  sub->add_option("--reps", c.reps, "Monte Carlo replications");
  sub->add_option("--epsilon", c.epsilon, "deviation threshold for the probes");
  sub->add_option("--grid", c.grid, "comma separated grid for this command");
  sub->add_option("--expect", c.expect, "expected verdict");
  sub->add_option("--mode", c.mode, "inner product mode (exact|sample)");
  sub->add_flag("--plot", c.plot, "write an SVG of the convergence report");
}

// Applies command line overrides to the raw config before resolution.
void apply_overrides(json& cfg, const std::string& command, const Common& c) {
  auto sect = [&](const char* name) -> json& {
    if (!cfg.contains(name) || cfg[name].is_null()) cfg[name] = json::object();
    return cfg[name];
  };
  if (c.seed) cfg["seed"] = *c.seed;
  if (c.reps) {
    if (*c.reps < 1) throw wlln::input_error("--reps must be ≥ 1");
    sect("verify")["reps"] = *c.reps;
  }
  if (c.epsilon) sect("verify")["epsilon"] = *c.epsilon;
  if (c.mode) sect("extract")["mode"] = *c.mode;
  if (c.grid) {
    const auto g = wlln::cli::parse_grid(*c.grid);
    if (command == "tails") sect("tails")["m_grid"] = g;
    else if (command == "extract") sect("extract")["levels"] = g;
    else if (command == "hereditary") sect("hereditary")["n_grid"] = g;
    else sect("verify")["n_grid"] = g;
  }
  if (c.expect) {
    if (command == "tails") sect("expect")["weak_l1"] = *c.expect;
    else if (command == "hereditary") sect("hereditary")["expect"] = *c.expect;
    else sect("verify")["expect"] = *c.expect;
  }
}

int execute(const std::string& command, json raw, const fs::path& base, const Common& c, const std::string& leaf) {
  apply_overrides(raw, command, c);
  const json cfg = wlln::cli::resolve_config(raw, base);
  const fs::path out = c.out.empty() ? wlln::cli::default_out(leaf) : fs::path(c.out);
  wlln::cli::RunOptions opt;
  opt.plot = c.plot;
  const auto res = wlln::cli::run(command, cfg, out, opt);
  std::cout << "outputs in " << out.string() << "\n";
  return res.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Extraction and verification tool for hereditary weak laws of large numbers"};
  app.require_subcommand(1);
  app.set_version_flag("--version", wlln::cli::kToolVersion);

  Common common;
  std::string demo_name, manifest, show_target;
  std::map<std::string, CLI::App*> subs;
  for (const char* name : {"tails", "extract", "verify", "hereditary", "pipeline"}) {
    subs[name] = app.add_subcommand(name, std::string("run the ") + name + " stage(s) of a config");
    add_common(subs[name], common, true);
  }
  auto* demo = app.add_subcommand("demo", "run a built-in end-to-end demonstration");
  demo->add_option("name", demo_name, "example41 | counterexample | latent-shift")->required();
  add_common(demo, common, false);
  auto* rep = app.add_subcommand("replay", "re-run the command recorded in a manifest");
  rep->add_option("--manifest", manifest, "manifest.json from an earlier run")->required();
  rep->add_option("--out", common.out, "output directory");
  auto* show = app.add_subcommand("show-config", "print the resolved config for a demo name or config file");
  show->add_option("target", show_target, "demo name or path to a config")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : wlln::cli::kExitUsage;
  }

  try {
    for (const auto& [name, sub] : subs) {
      if (!sub->parsed()) continue;
      const fs::path path = common.config;
      return execute(name, wlln::cli::load_config(path), path.parent_path(), common, name);
    }
    if (demo->parsed()) {
      if (!common.config.empty()) throw wlln::input_error("demo takes no --config");
      return execute("pipeline", wlln::cli::demo_preset(demo_name), {}, common, "demo-" + demo_name);
    }
    if (rep->parsed()) {
      const fs::path out = common.out.empty() ? wlln::cli::default_out("replay") : fs::path(common.out);
      const auto res = wlln::cli::replay(manifest, out);
      std::cout << "outputs in " << out.string() << "\n";
      return res.exit_code;
    }
    if (show->parsed()) {
      json raw;
      fs::path base;
      if (fs::exists(show_target)) {
        raw = wlln::cli::load_config(show_target);
        base = fs::path(show_target).parent_path();
      } else {
        raw = wlln::cli::demo_preset(show_target);
      }
      std::cout << wlln::cli::dump(wlln::cli::resolve_config(raw, base));
      return 0;
    }
  } catch (const wlln::input_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return wlln::cli::kExitUsage;
  } catch (const wlln::unsupported_oracle& e) {
    std::cerr << "unsupported: " << e.what() << "\n";
    return wlln::cli::kExitUsage;
  } catch (const wlln::capacity_error& e) {
    std::cerr << "capacity: " << e.what() << "\n";
    return wlln::cli::kExitUsage;
  }
  return 0;
}
