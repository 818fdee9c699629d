#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <sys/wait.h>
#include <unistd.h>

#include "wlln/cli.hpp"

using namespace wlln;
using cli::json;
namespace fs = std::filesystem;

namespace {

const fs::path kSource = WLLN_SOURCE_DIR;

const fs::path kScratchRoot = fs::temp_directory_path() / ("wlln-test-cli-" + std::to_string(::getpid()));

struct ScratchCleanup : ::testing::Environment {
  void TearDown() override {
    std::error_code ec;
    fs::remove_all(kScratchRoot, ec);
  }
};
const auto* const kCleanup = ::testing::AddGlobalTestEnvironment(new ScratchCleanup);

fs::path scratch(const std::string& name) {
  const fs::path p = kScratchRoot / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

// A small latent shift pipeline that runs in well under a second.
json small_latent() {
  return json::parse(R"({
    "label": "small",
    "seed": 5,
    "model": {"kind": "latent_shift",
              "params": {"factor": {"family": "finite", "atoms": [[-1, 0.5], [1, 0.5]]},
                         "noise": {"family": "uniform_int", "lo": -2, "hi": 2}}},
    "tails": {"m_grid": [1, 2, 4, 8], "n_range": [1, 64], "feller_grid": null},
    "extract": {"levels": [1, 4, 16, 64], "target_length": 256, "search_cap": 1024},
    "verify": {"epsilon": 0.5, "n_grid": [4, 16, 64], "reps": 200},
    "hereditary": {"n_grid": [16, 64], "expect": "pass"}
  })");
}

cli::RunResult quiet_run(const std::string& command, const json& raw, const fs::path& out) {
  std::ostringstream sink;
  cli::RunOptions opt;
  opt.log = &sink;
  return cli::run(command, cli::resolve_config(raw), out, opt);
}

int run_binary(const std::string& args) {
  const std::string cmd = std::string(WLLN_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Grid, ParseAndDoubling) {
  EXPECT_EQ(cli::parse_grid("64, 256,1024"), (std::vector<double>{64, 256, 1024}));
  EXPECT_THROW(cli::parse_grid(""), input_error);
  EXPECT_THROW(cli::parse_grid("4,x"), input_error);
  EXPECT_EQ(cli::doubling(1, 8), (std::vector<double>{1, 2, 4, 8}));
}

TEST(Config, DefaultsAreFilled) {
  const json c = cli::resolve_config(
      json::parse(R"({"model": {"kind": "iid", "params": {"dist": {"family": "point_mass", "value": 0}}}})"));
  EXPECT_EQ(c.at("schema_version"), cli::kSchemaVersion);
  EXPECT_EQ(c.at("seed"), 20240601);
  EXPECT_EQ(c.at("verify").at("n_grid"), json({64, 256, 1024, 4096}));
  EXPECT_EQ(c.at("verify").at("reps"), 2000);
  EXPECT_EQ(c.at("verify").at("epsilon"), 0.25);
  EXPECT_EQ(c.at("extract").at("target_length"), 4096);
  EXPECT_EQ(c.at("extract").at("search_start"), 1);
  EXPECT_EQ(c.at("corrector").at("method"), "weak_l2");
  EXPECT_EQ(c.at("gap").at("epsilon"), 0.25);
  // resolution is idempotent
  EXPECT_EQ(cli::resolve_config(c), c);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  const json base = small_latent();
  auto with = [&](const char* section, const char* key, json v) {
    json c = base;
    c[section][key] = std::move(v);
    return c;
  };
  json top = base;
  top["colour"] = "blue";
  EXPECT_THROW(cli::resolve_config(top), input_error);
  EXPECT_THROW(cli::resolve_config(with("verify", "epsilonn", 0.1)), input_error);
  EXPECT_THROW(cli::resolve_config(with("verify", "reps", 0)), input_error);
  EXPECT_THROW(cli::resolve_config(with("verify", "n_grid", json::array())), input_error);
  EXPECT_THROW(cli::resolve_config(with("verify", "n_grid", {4, 2})), input_error);
  EXPECT_THROW(cli::resolve_config(with("verify", "expect", "passes")), input_error);
  EXPECT_THROW(cli::resolve_config(with("extract", "mode", "fast")), input_error);
  EXPECT_THROW(cli::resolve_config(with("extract", "search_start", 0)), input_error);
  EXPECT_THROW(cli::resolve_config(with("extract", "search_start", "somewhere")), input_error);
  EXPECT_THROW(cli::resolve_config(with("extract", "search_cap", -3)), input_error);
  EXPECT_THROW(cli::resolve_config(with("corrector", "method", "median")), input_error);
  EXPECT_THROW(cli::resolve_config(with("hereditary", "patterns", {"every-5th"})), input_error);
  EXPECT_THROW(cli::resolve_config(with("expect", "weak_l1", "yes")), input_error);
  json version = base;
  version["schema_version"] = 2;
  EXPECT_THROW(cli::resolve_config(version), input_error);
  json missing = base;
  missing.erase("model");
  EXPECT_THROW(cli::resolve_config(missing), input_error);
}

TEST(Config, ModelFromFile) {
  const auto dir = scratch("model-file");
  std::ofstream(dir / "m.json") << small_latent().at("model").dump();
  json c = small_latent();
  c["model"] = "m.json";
  EXPECT_EQ(cli::resolve_config(c, dir).at("model"), cli::resolve_config(small_latent()).at("model"));
  c["model"] = "absent.json";
  EXPECT_THROW(cli::resolve_config(c, dir), input_error);
}

TEST(Config, ShippedDemoFilesMatchPresets) {
  for (const auto& [file, name] : {std::pair{"demo_counterexample.json", "counterexample"},
                                   std::pair{"demo_example41.json", "example41"},
                                   std::pair{"demo_latent_shift.json", "latent-shift"}}) {
    const auto path = kSource / "configs" / file;
    EXPECT_EQ(cli::resolve_config(cli::load_config(path), path.parent_path()),
              cli::resolve_config(cli::demo_preset(name)))
        << file;
  }
  for (const auto& entry : fs::directory_iterator(kSource / "configs"))
    EXPECT_NO_THROW(cli::resolve_config(cli::load_config(entry.path()), entry.path().parent_path())) << entry.path();
  EXPECT_THROW(cli::demo_preset("nope"), input_error);
}

TEST(Run, PipelineWritesOutputs) {
  const auto out = scratch("pipeline");
  const auto res = quiet_run("pipeline", small_latent(), out);
  EXPECT_EQ(res.exit_code, cli::kExitOk) << res.summary;
  for (const char* f : {"manifest.json", "summary.json", "tails.csv", "verdicts.json", "corrector.json", "plan.json",
                        "report.json", "report.csv", "gap.json", "gap.csv", "hereditary.json",
                        "hereditary_every-2nd.csv"})
    EXPECT_TRUE(fs::exists(out / f)) << f;
  const json manifest = json::parse(slurp(out / "manifest.json"));
  EXPECT_EQ(manifest.at("command"), "pipeline");
  EXPECT_EQ(manifest.at("tool"), cli::kToolVersion);
  ASSERT_TRUE(res.plan.has_value());
  EXPECT_EQ(res.plan->indices.size(), 256u);
  EXPECT_EQ(res.report->verdict, ConvergenceVerdict::consistent);
}

TEST(Run, ReplayIsByteIdentical) {
  const auto a = scratch("replay-a"), b = scratch("replay-b");
  std::ostringstream sink;
  cli::RunOptions opt;
  opt.log = &sink;
  const auto first = quiet_run("pipeline", small_latent(), a);
  const auto second = cli::replay(a / "manifest.json", b, opt);
  EXPECT_EQ(first.exit_code, second.exit_code);
  ASSERT_EQ(first.files, second.files);
  for (const auto& f : first.files) EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
}

TEST(Run, ExitCodes) {
  json expect_holds = small_latent();
  expect_holds["expect"] = {{"energy_vanishing", "holds"}};
  EXPECT_EQ(quiet_run("tails", expect_holds, scratch("x2")).exit_code, cli::kExitExpectation);

  // at step 2 every candidate near index 1 shares the factor, so nothing fits
  json tight = small_latent();
  tight["corrector"] = {{"method", "zero"}};
  tight["extract"]["search_cap"] = 20;
  const auto x3 = scratch("x3");
  const auto fail = quiet_run("extract", tight, x3);
  EXPECT_EQ(fail.exit_code, cli::kExitExtraction);
  EXPECT_TRUE(fs::exists(x3 / "failure.json"));
  EXPECT_FALSE(fs::exists(x3 / "plan.json"));

  json wrong = small_latent();
  wrong["corrector"] = {{"method", "zero"}};
  wrong["verify"]["indices"] = "identity";
  wrong["verify"]["n_grid"] = {1, 4, 16, 64};
  const auto v = quiet_run("verify", wrong, scratch("x4"));
  ASSERT_TRUE(v.report.has_value());
  EXPECT_EQ(v.report->verdict, ConvergenceVerdict::violation);
  EXPECT_EQ(v.exit_code, cli::kExitViolation);

  wrong["verify"]["expect"] = "violation";
  EXPECT_EQ(quiet_run("verify", wrong, scratch("x0")).exit_code, cli::kExitOk);
  EXPECT_THROW(quiet_run("simulate", small_latent(), scratch("bad")), input_error);
}

TEST(Binary, ExitCodes) {
  const auto dir = scratch("binary");
  const auto cfg = dir / "small.json";
  std::ofstream(cfg) << small_latent().dump();
  const std::string out = " --out " + (dir / "out").string();
  EXPECT_EQ(run_binary("tails --config " + cfg.string() + out), 0);
  EXPECT_EQ(run_binary("tails --config " + cfg.string() + out + " --expect fails"), cli::kExitExpectation);
  EXPECT_EQ(run_binary("verify --config " + cfg.string() + out + " --grid ''"), cli::kExitUsage);
  EXPECT_EQ(run_binary("verify --config " + cfg.string() + out + " --reps 0"), cli::kExitUsage);
  EXPECT_EQ(run_binary("verify --config " + (dir / "absent.json").string() + out), cli::kExitUsage);
  EXPECT_EQ(run_binary("frobnicate"), cli::kExitUsage);
  EXPECT_EQ(run_binary("demo nowhere" + out), cli::kExitUsage);
  EXPECT_EQ(run_binary("show-config latent-shift"), 0);
  EXPECT_EQ(run_binary("--version"), 0);
}
