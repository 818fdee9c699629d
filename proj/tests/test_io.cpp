#include <gtest/gtest.h>

#include <random>

#include "wlln/io.hpp"

using namespace wlln;
using io::json;

namespace {

std::vector<SequenceModel> zoo() {
  return {SequenceModel::iid(FiniteDistribution({{-1, 0.25}, {3, 0.75}})),
          SequenceModel::iid(ParetoDistribution{1.5, 2.0, true}, 1000),
          SequenceModel::independent_array({FiniteDistribution::point_mass(1), ParetoDistribution{1.0, 1.0, false}}),
          SequenceModel::tail_vanishing(ParetoDistribution{1.0, 1.0, false}),
          SequenceModel::example41(RhoSequence::constant(0.5)),
          SequenceModel::example41(RhoSequence::log_decay(2.0), Example41Support::positive, JointLaw::comonotone),
          SequenceModel::latent_shift(FiniteDistribution({{-1, 0.5}, {1, 0.5}}),
                                      FiniteDistribution({{0, 0.5}, {2, 0.5}}))};
}

std::size_t count_lines(const std::string& s) {
  std::size_t n = 0;
  for (std::size_t i = 0; i + 1 < s.size(); ++i)
    if (s[i] == '\r' && s[i + 1] == '\n') ++n;
  return n;
}

}  // namespace

TEST(ModelJson, RoundTrip) {
  for (const auto& m : zoo()) {
    const json j = io::to_json(m);
    const auto back = io::parse_model(j);
    EXPECT_EQ(io::to_json(back), j) << j.dump();
    for (std::uint64_t k : {1u, 2u, 3u, 17u})
      for (double t : {0.5, 1.0, 2.5, 40.0}) EXPECT_EQ(back.marginal(k).tail(t), m.marginal(k).tail(t));
  }
}

TEST(ModelJson, ParsesDocumentedForms) {
  const auto m = io::parse_model(json::parse(R"({"kind": "iid", "params": {"dist": {"family": "uniform_int", "lo": -2, "hi": 2}}})"));
  EXPECT_DOUBLE_EQ(m.marginal(1).tail(1.5), 0.4);
  const auto e = io::parse_model(json::parse(R"({"kind": "example41", "params": {"rho": 0.5}})"));
  EXPECT_EQ(e.support(), Example41Support::symmetric);
  EXPECT_EQ(e.joint_law(), JointLaw::independent);
  const auto p = io::parse_model(json::parse(R"({"kind": "iid", "params": {"dist": {"family": "point_mass", "value": 4}}, "index_cap": 10})"));
  EXPECT_EQ(p.index_cap(), 10u);
}

TEST(ModelJson, RejectsUnknownAndBadKeys) {
  const char* bad[] = {
      R"({"kind": "iid", "params": {"dist": {"family": "point_mass", "value": 1}}, "extra": 1})",
      R"({"kind": "iid", "params": {"dist": {"family": "point_mass", "value": 1, "x": 2}}})",
      R"({"kind": "iid", "params": {"dist": {"family": "point_mass", "value": 1}, "more": 1}})",
      R"({"kind": "iid", "params": {"dist": {"family": "gauss"}}})",
      R"({"kind": "iid", "params": {"dist": {"family": "pareto", "alpha": -1}}})",
      R"({"kind": "iid", "params": {"dist": {"family": "finite", "atoms": [[1, 0.5]]}}})",
      R"({"kind": "iid", "params": {"dist": {"family": "finite", "atoms": [1, 2]}}})",
      R"({"kind": "iid", "params": {"dist": {"family": "uniform_int", "lo": 3, "hi": 1}}})",
      R"({"kind": "iid", "joint_law": "comonotone", "params": {"dist": {"family": "point_mass", "value": 1}}})",
      R"({"kind": "example41", "joint_law": "antithetic", "params": {"rho": 0.5}})",
      R"({"kind": "example41", "params": {"rho": {"type": "constant", "value": 1.5}}})",
      R"({"kind": "example41", "params": {"rho": {"type": "cubic"}}})",
      R"({"kind": "example41", "params": {"rho": 0.5, "support": "left"}})",
      R"({"kind": "latent_shift", "params": {"factor": {"family": "pareto", "alpha": 1}, "noise": {"family": "point_mass", "value": 0}}})",
      R"({"kind": "brownian"})",
      R"({"params": {}})",
      R"([1, 2])",
  };
  for (const char* s : bad) EXPECT_THROW(io::parse_model(json::parse(s)), input_error) << s;
}

TEST(CorrectorJson, RoundTrip) {
  const auto latent = zoo()[6];
  const std::vector<double> grid{1, 2, 4};
  const std::vector<CorrectorSeries> series{
      CorrectorSeries::zero(grid), corrector_iid(FiniteDistribution({{-1, 0.25}, {3, 0.75}}), grid),
      corrector_weak_l2(latent, grid)};
  for (const auto& s : series) {
    const json j = io::to_json(s);
    const auto back = io::parse_corrector(j);
    EXPECT_EQ(io::to_json(back), j);
    for (double N : grid)
      for (double f : {-1.0, 1.0}) {
        const std::optional<double> factor = s.needs_factor() ? std::optional<double>(f) : std::nullopt;
        EXPECT_EQ(back.value(N, factor), s.value(N, factor));
      }
  }
  EXPECT_THROW(io::parse_corrector(json::parse(R"({"kind": "constant", "levels": [], "note": 1})")), input_error);
  EXPECT_THROW(io::parse_corrector(json::parse(R"({"kind": "mystery", "levels": []})")), input_error);
  EXPECT_THROW(io::parse_corrector(json::parse(R"({"kind": "constant", "levels": [{"N": 1, "v": 0}]})")), input_error);
}

TEST(PlanJson, RoundTripStillReverifies) {
  const auto m = SequenceModel::tail_vanishing(ParetoDistribution{1.0, 1.0, false});
  const std::vector<double> grid{1, 2, 4, 8};
  const auto D = CorrectorSeries::zero(grid);
  ExtractionConfig cfg;
  cfg.target_length = 12;
  cfg.n_grid = grid;
  cfg.search_cap = 100;
  const auto plan = greedy_extract(m, D, cfg);
  const json j = io::to_json(plan);
  const auto back = io::parse_plan(json::parse(j.dump()));
  EXPECT_EQ(io::to_json(back), j);
  EXPECT_EQ(back.indices, plan.indices);
  const auto rv = reverify_plan(back, m, D);
  EXPECT_TRUE(rv.constraints_ok && rv.records_match) << rv.first_problem;
  EXPECT_THROW(io::parse_plan(json::parse(R"({"indices": [1]})")), input_error);
}

TEST(Numbers, ShortestFormRoundTrips) {
  std::mt19937_64 gen(2);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 20000; ++i) {
    const double x = u(gen) * std::pow(10.0, static_cast<int>(gen() % 40) - 20);
    EXPECT_EQ(std::stod(io::num(x)), x);
  }
  EXPECT_EQ(io::num(0.5), "0.5");
  EXPECT_EQ(io::num(64.0), "64");
  EXPECT_EQ(io::num(std::uint64_t{67842943103619020}), "67842943103619020");
}

TEST(Csv, CrlfAndShape) {
  const auto m = SequenceModel::iid(FiniteDistribution({{-1, 0.5}, {1, 0.5}}));
  ProbeConfig cfg;
  cfg.n_grid = {4, 16};
  cfg.reps = 100;
  const auto r = wlln_probe(m, identity_indices(16), CorrectorSeries::zero(cfg.n_grid), 0.5, cfg);
  const auto csv = io::report_csv(r);
  EXPECT_EQ(csv.rfind("N,p_hat,ci_lo,ci_hi,l2_hat\r\n", 0), 0u);
  EXPECT_EQ(count_lines(csv), 3u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);

  const auto prof = build_profile(m, {1, 2}, IndexRange{1, 3});
  const auto t = io::tails_csv(m, prof);
  EXPECT_EQ(count_lines(t), 1 + prof.n_points.size() * 2);

  cfg.reps = 100;
  const auto g = io::gap_csv(truncation_gap_probe(m, identity_indices(16), 0.5, cfg));
  EXPECT_EQ(count_lines(g), 3u);
  EXPECT_NE(g.find(",0\r\n"), std::string::npos);  // exact union column filled
}

TEST(ReportJson, Fields) {
  const auto m = SequenceModel::iid(FiniteDistribution::point_mass(0));
  ProbeConfig cfg;
  cfg.n_grid = {2, 4};
  cfg.reps = 10;
  cfg.seed = 99;
  const auto j = io::to_json(wlln_probe(m, identity_indices(4), CorrectorSeries::zero(), 0.1, cfg));
  EXPECT_EQ(j.at("verdict"), "consistent-with-wlln");
  EXPECT_EQ(j.at("seed"), 99);
  EXPECT_EQ(j.at("points").size(), 2u);
}
