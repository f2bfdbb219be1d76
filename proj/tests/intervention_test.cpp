#include "fedbias/intervention.hpp"

#include <cmath>
#include <fstream>

#include <gtest/gtest.h>

#include "fedbias/errors.hpp"
#include "test_util.hpp"

namespace fedbias {
namespace {

TrainingConfig quick(std::size_t rounds) {
  TrainingConfig c;
  c.rounds = rounds;
  c.seed = 4;
  c.hidden_width = 8;
  return c;
}

TEST(SensitiveNorm, HandComputedValues) {
  const auto schema = testing::binary_schema(6);
  MlpModel m({8, 1, 1});
  EXPECT_EQ(sensitive_param_norm(m, *schema), 0.0);  // all-zero weights
  for (std::size_t c = 0; c < 8; ++c) m.weight(0, 0, c) = 1.0;
  m.bias(0, 0) = 100.0;  // biases do not count
  EXPECT_DOUBLE_EQ(sensitive_param_norm(m, *schema), 0.5);
  for (std::size_t c = 0; c < 6; ++c) m.weight(0, 0, c) = 0.0;
  EXPECT_DOUBLE_EQ(sensitive_param_norm(m, *schema), 1.0);
  const MlpModel wrong({5, 1, 1});
  EXPECT_THROW(sensitive_param_norm(wrong, *schema), InvalidArgument);
}

TEST(ScaleParams, TouchesOnlyTheTargetColumns) {
  const auto schema = testing::binary_schema(3);
  const auto m = testing::random_model({5, 4, 3, 1}, 1);
  EXPECT_EQ(scale_params(m, *schema, 1.0, ScaleTarget::kSensitive), m);
  const auto s = scale_params(m, *schema, 3.0, ScaleTarget::kSensitive);
  std::size_t changed = 0;
  for (std::size_t i = 0; i < m.num_params(); ++i) changed += s.params()[i] != m.params()[i];
  EXPECT_EQ(changed, schema->sensitive_columns.size() * 4);
  for (std::size_t j = 0; j < 4; ++j) {
    EXPECT_EQ(s.weight(0, j, 3), 3.0 * m.weight(0, j, 3));
    EXPECT_EQ(s.weight(0, j, 0), m.weight(0, j, 0));
  }
  const auto o = scale_params(m, *schema, 3.0, ScaleTarget::kOther);
  changed = 0;
  for (std::size_t i = 0; i < m.num_params(); ++i) changed += o.params()[i] != m.params()[i];
  EXPECT_EQ(changed, 3u * 4);
}

TEST(ScaleParams, InverseRestoresAndZeroSevers) {
  const auto schema = testing::binary_schema(3);
  const auto m = testing::random_model({5, 4, 1}, 2);
  const auto back = scale_params(scale_params(m, *schema, 7.0, ScaleTarget::kSensitive), *schema,
                                 1.0 / 7.0, ScaleTarget::kSensitive);
  for (std::size_t i = 0; i < m.num_params(); ++i) EXPECT_NEAR(back.params()[i], m.params()[i], 1e-12);
  const auto cut = scale_params(m, *schema, 0.0, ScaleTarget::kSensitive);
  EXPECT_EQ(sensitive_param_norm(cut, *schema), 0.0);
  std::vector<double> x0{0.3, -1.0, 2.0, 1.0, 0.0}, x1{0.3, -1.0, 2.0, 0.0, 1.0};
  EXPECT_EQ(score(cut, x0), score(cut, x1));
  EXPECT_THROW(scale_params(m, *schema, -1.0, ScaleTarget::kSensitive), InvalidArgument);
  EXPECT_THROW(scale_params(m, *schema, NAN, ScaleTarget::kSensitive), InvalidArgument);
  EXPECT_THROW(parse_scale_target("both"), InvalidArgument);
  EXPECT_EQ(parse_scale_target(to_string(ScaleTarget::kOther)), ScaleTarget::kOther);
}

TEST(ScalingSweep, UnitFactorMatchesBaselineEvaluation) {
  const auto parties = testing::small_federation(3, 80, 3);
  const auto m = testing::random_model({6, 5, 1}, 3);
  const std::vector<double> factors{0.5, 1.0};
  const auto sweep = scaling_sweep(m, parties, factors, ScaleTarget::kSensitive);
  ASSERT_EQ(sweep.points.size(), 2u);
  const auto& p = sweep.points[1];
  double acc = 0.0;
  for (std::size_t k = 0; k < 3; ++k) {
    const auto r = evaluate(m, parties[k].test, 2);
    EXPECT_EQ(p.accuracy[k], r.accuracy);
    EXPECT_EQ(p.dp[k], r.dp_gap);
    EXPECT_EQ(p.eo[k], r.eo_gap);
    acc += r.accuracy;
  }
  EXPECT_DOUBLE_EQ(p.mean_accuracy, acc / 3.0);

  const auto dir = testing::scratch_dir();
  write_sweep_csv(dir / "s.csv", sweep);
  std::ifstream in(dir / "s.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_TRUE(header.starts_with("factor,mean_accuracy,mean_dp,mean_eo,accuracy_0,dp_0,eo_0"));
  EXPECT_THROW(scaling_sweep(m, parties, std::vector<double>{}, ScaleTarget::kOther),
               InvalidArgument);
}

TEST(Reweigh, IndependentCountsGiveUnitWeights) {
  const auto t = reweigh_weights({{10, 30}, {20, 60}});
  for (int g = 0; g < 2; ++g) {
    for (int y = 0; y < 2; ++y) EXPECT_DOUBLE_EQ(t.at(g, y), 1.0);
  }
  EXPECT_TRUE(t.notices.empty());
}

TEST(Reweigh, HandExample) {
  // n = 100, group 0 has 40 rows, 50 positives overall, 10 in (0, 1).
  const auto t = reweigh_weights({{30, 10}, {20, 40}});
  EXPECT_DOUBLE_EQ(t.at(0, 1), 40.0 * 50.0 / (100.0 * 10.0));
  EXPECT_DOUBLE_EQ(t.at(0, 0), 40.0 * 50.0 / (100.0 * 30.0));
  EXPECT_DOUBLE_EQ(t.at(1, 1), 60.0 * 50.0 / (100.0 * 40.0));
  // The reweighed joint has the original marginals and independent cells.
  const std::vector<std::array<std::size_t, 2>> c{{30, 10}, {20, 40}};
  for (int g = 0; g < 2; ++g) {
    double mass = 0.0;
    for (int y = 0; y < 2; ++y) mass += t.at(g, y) * c[g][y] / 100.0;
    EXPECT_NEAR(mass, (c[g][0] + c[g][1]) / 100.0, 1e-15);
  }
}

TEST(Reweigh, EmptyCellsAndEmptyData) {
  const auto t = reweigh_weights({{10, 0}, {5, 5}});
  EXPECT_EQ(t.at(0, 1), 1.0);
  EXPECT_EQ(t.notices.size(), 1u);
  EXPECT_THROW(reweigh_weights({{0, 0}, {0, 0}}), InvalidArgument);
  EXPECT_THROW(parse_reweigh_scope("regional"), InvalidArgument);
}

TEST(Reweigh, SampleWeightsFollowTheirScope) {
  const auto parties = testing::small_federation(3, 60, 5);
  const auto local = reweigh_sample_weights(parties, ReweighScope::kLocal);
  const auto global = reweigh_sample_weights(parties, ReweighScope::kGlobal);
  ASSERT_EQ(local.size(), 3u);
  for (std::size_t k = 0; k < 3; ++k) {
    const auto t = reweigh_weights(cell_counts(parties[k].train, 2));
    ASSERT_EQ(local[k].size(), parties[k].n_train());
    for (std::size_t r = 0; r < local[k].size(); ++r) {
      EXPECT_EQ(local[k][r], t.at(parties[k].train.a[r], parties[k].train.y[r]));
    }
  }
  // Global weights depend on the cell only, across parties.
  EXPECT_EQ(global[0].size(), parties[0].n_train());
  for (std::size_t k = 1; k < 3; ++k) {
    for (std::size_t r = 0; r < parties[k].n_train(); ++r) {
      for (std::size_t q = 0; q < parties[0].n_train(); ++q) {
        if (parties[0].train.a[q] == parties[k].train.a[r] &&
            parties[0].train.y[q] == parties[k].train.y[r]) {
          EXPECT_EQ(global[0][q], global[k][r]);
          break;
        }
      }
    }
  }
}

TEST(Reweigh, UnitWeightsReproducePlainTraining) {
  const auto parties = testing::small_federation(2, 60, 6);
  FederatedOptions opts;
  for (const auto& p : parties) opts.sample_weights.emplace_back(p.n_train(), 1.0);
  EXPECT_EQ(run_federated(parties, quick(3), opts).final_model,
            run_federated(parties, quick(3)).final_model);
}

TEST(Reweigh, SinglePartyLocalEqualsWeightedStandalone) {
  const std::vector<PartyDataset> parties{testing::small_federation(2, 80, 7)[0]};
  const auto w = reweigh_sample_weights(parties, ReweighScope::kLocal);
  EXPECT_EQ(run_federated_reweighed(parties, quick(4), ReweighScope::kLocal).final_model,
            train_standalone(parties[0], quick(4), w[0]));
}

TEST(Norms, OverTracesAndCsv) {
  const auto parties = testing::small_federation(2, 60, 8);
  const auto res = run_federated(parties, quick(5));
  const auto rows = norms_over_traces(InMemoryTraces(res.traces), *parties[0].schema, 2);
  ASSERT_EQ(rows.size(), 3u * 3u);
  EXPECT_EQ(rows[0].round, 1u);
  EXPECT_EQ(rows[3].round, 3u);
  EXPECT_EQ(rows[1].model, "party_0");
  EXPECT_EQ(rows[0].norm, sensitive_param_norm(res.traces[0].global_after, *parties[0].schema));
  EXPECT_THROW(norms_over_traces(InMemoryTraces(res.traces), *parties[0].schema, 0),
               InvalidArgument);
  const auto dir = testing::scratch_dir();
  write_norms_csv(dir / "n.csv", rows);
  std::ifstream in(dir / "n.csv");
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "round,model,norm");
  std::size_t n = 0;
  while (std::getline(in, line)) ++n;
  EXPECT_EQ(n, rows.size());
}

}  // namespace
}  // namespace fedbias
