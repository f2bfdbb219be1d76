#include "fedbias/attribution.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "fedbias/errors.hpp"
#include "test_util.hpp"

namespace fedbias {
namespace {

// Exact path integral for a one-hidden-layer ReLU network: the gradient is
// constant between the points where a hidden pre-activation changes sign, so
// integrate segment by segment.
std::vector<double> exact_ig(const MlpModel& m, std::span<const double> x,
                             std::span<const double> b) {
  const std::size_t d = m.input_dim();
  const std::size_t h = m.dims()[1];
  std::vector<double> cuts{0.0, 1.0};
  for (std::size_t j = 0; j < h; ++j) {
    double z0 = m.bias(0, j), dz = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      z0 += m.weight(0, j, i) * b[i];
      dz += m.weight(0, j, i) * (x[i] - b[i]);
    }
    if (dz != 0.0) {
      const double t = -z0 / dz;
      if (t > 0.0 && t < 1.0) cuts.push_back(t);
    }
  }
  std::sort(cuts.begin(), cuts.end());
  std::vector<double> out(d, 0.0);
  std::vector<double> p(d);
  for (std::size_t s = 0; s + 1 < cuts.size(); ++s) {
    const double len = cuts[s + 1] - cuts[s];
    const double mid = 0.5 * (cuts[s] + cuts[s + 1]);
    for (std::size_t i = 0; i < d; ++i) p[i] = b[i] + mid * (x[i] - b[i]);
    const auto g = input_gradient(m, p);
    for (std::size_t i = 0; i < d; ++i) out[i] += len * g[i] * (x[i] - b[i]);
  }
  return out;
}

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::vector<double> v(n);
  for (double& e : v) e = normal(rng);
  return v;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

TEST(Baseline, FlipsBinaryGroupAndUsesMeansElsewhere) {
  const auto schema = testing::binary_schema(2);
  Matrix ref(2, 4);
  ref.values = {1.0, 4.0, 1.0, 0.0,
                3.0, 8.0, 0.0, 1.0};
  const auto spec = make_baseline_spec(*schema, ref);
  const std::vector<double> x{10.0, -1.0, 0.0, 1.0};
  EXPECT_EQ(build_baseline(spec, x), (std::vector<double>{2.0, 6.0, 1.0, 0.0}));
  const std::vector<double> bad{10.0, -1.0, 1.0, 1.0};
  EXPECT_THROW(build_baseline(spec, bad), InvalidArgument);
  EXPECT_THROW(make_baseline_spec(*schema, Matrix(0, 4)), InvalidArgument);
  EXPECT_THROW(make_baseline_spec(*schema, Matrix(1, 3)), InvalidArgument);
}

TEST(Baseline, MultiValuedGroupUsesMeans) {
  FeatureSchema s;
  s.feature_names = {"x", "race"};
  s.column_names = {"x", "race=a", "race=b", "race=c"};
  s.categorical_levels["race"] = {"a", "b", "c"};
  s.sensitive_name = "race";
  s.sensitive_columns = {1, 2, 3};
  Matrix ref(2, 4);
  ref.values = {0.0, 1.0, 0.0, 0.0,
                2.0, 0.0, 0.0, 1.0};
  const auto spec = make_baseline_spec(s, ref);
  // Not a valid one-hot row, but means do not care.
  const std::vector<double> x{5.0, 0.0, 0.0, 0.0};
  EXPECT_EQ(build_baseline(spec, x), (std::vector<double>{1.0, 0.5, 0.0, 0.5}));
}

TEST(IntegratedGradients, ExactForAffineModelAtAnyStepCount) {
  auto m = testing::random_model({5, 1}, 3);
  const auto x = random_vec(5, 1), b = random_vec(5, 2);
  for (std::size_t steps : {1u, 2u, 7u, 64u}) {
    const auto a = integrated_gradients(m, x, b, steps);
    for (std::size_t i = 0; i < 5; ++i) {
      EXPECT_NEAR(a[i], m.weight(0, 0, i) * (x[i] - b[i]), 1e-12);
    }
    const double total = std::accumulate(a.begin(), a.end(), 0.0);
    EXPECT_NEAR(total, output_difference(m, x, b, OutputTarget::kLogit), 1e-12);
  }
}

TEST(IntegratedGradients, ZeroWhenInputEqualsBaseline) {
  const auto m = testing::random_model({4, 6, 1}, 4);
  const auto x = random_vec(4, 5);
  for (double v : integrated_gradients(m, x, x, 16, OutputTarget::kProbability)) {
    EXPECT_EQ(v, 0.0);
  }
}

TEST(IntegratedGradients, RejectsBadArguments) {
  const auto m = testing::random_model({3, 2, 1}, 4);
  const std::vector<double> x(3, 0.0), short_b(2, 0.0);
  EXPECT_THROW(integrated_gradients(m, x, x, 0), InvalidArgument);
  EXPECT_THROW(integrated_gradients(m, x, short_b, 4), InvalidArgument);
}

TEST(IntegratedGradients, ConvergesToTheExactPathIntegral) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto m = testing::random_model({6, 10, 1}, seed);
    const auto x = random_vec(6, 100 + seed), b = random_vec(6, 200 + seed);
    const auto exact = exact_ig(m, x, b);
    // The oracle itself satisfies completeness.
    EXPECT_NEAR(std::accumulate(exact.begin(), exact.end(), 0.0),
                output_difference(m, x, b, OutputTarget::kLogit), 1e-10);
    // Only segments containing a kink are misestimated, each by at most
    // 1/m times the jump of the integrand: error <= kinks * 2 max|a_i| / m.
    double scale = 0.0;
    for (std::size_t j = 0; j < 10; ++j) {
      for (std::size_t i = 0; i < 6; ++i) {
        scale = std::max(scale, std::abs(m.weight(0, j, i) * m.weight(1, 0, j) * (x[i] - b[i])));
      }
    }
    for (std::size_t steps : {16u, 256u, 4096u}) {
      const auto a = integrated_gradients(m, x, b, steps);
      EXPECT_LE(max_abs_diff(a, exact), 10.0 * 2.0 * 10.0 * scale / double(steps))
          << "seed " << seed << " steps " << steps;
    }
    const double coarse = max_abs_diff(integrated_gradients(m, x, b, 64), exact);
    const double fine = max_abs_diff(integrated_gradients(m, x, b, 4096), exact);
    EXPECT_LE(fine, coarse + 1e-15);
  }
}

TEST(IntegratedGradients, ProbabilityTargetSatisfiesCompletenessInTheLimit) {
  const auto m = testing::random_model({4, 5, 1}, 9, 0.5);
  const auto x = random_vec(4, 1), b = random_vec(4, 2);
  const auto a = integrated_gradients(m, x, b, 20000, OutputTarget::kProbability);
  EXPECT_NEAR(std::accumulate(a.begin(), a.end(), 0.0),
              output_difference(m, x, b, OutputTarget::kProbability), 1e-3);
}

TEST(IntegratedGradients, ZeroSensitiveWeightsGiveZeroSensitiveAttribution) {
  const auto schema = testing::binary_schema(3);
  auto m = testing::random_model({5, 6, 1}, 11);
  for (std::size_t j = 0; j < 6; ++j) {
    for (std::size_t c : schema->sensitive_columns) m.weight(0, j, c) = 0.0;
  }
  const auto data = testing::random_split(30, 3, 12);
  const auto spec = make_baseline_spec(*schema, data.x);
  for (const auto& r : attribute_rows(m, data.x, spec, 32, OutputTarget::kLogit)) {
    for (std::size_t c : schema->sensitive_columns) EXPECT_EQ(r.attributions[c], 0.0);
  }
}

TEST(IntegratedGradients, SwappingInputAndBaselineNegates) {
  // Affine in the sensitive block: the flip of a group-1 row is the baseline
  // of the group-0 row it produced, so attributions are exact negatives.
  auto m = testing::random_model({4, 1}, 13);
  const auto schema = testing::binary_schema(2);
  Matrix ref(2, 4);
  ref.values = {1.0, 2.0, 1.0, 0.0,
                1.0, 2.0, 0.0, 1.0};
  const auto spec = make_baseline_spec(*schema, ref);
  const std::vector<double> x0{1.0, 2.0, 1.0, 0.0};
  const std::vector<double> x1{1.0, 2.0, 0.0, 1.0};
  const auto a0 = integrated_gradients(m, x0, build_baseline(spec, x0), 8);
  const auto a1 = integrated_gradients(m, x1, build_baseline(spec, x1), 8);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(a0[i], -a1[i], 1e-15);
}

TEST(AttributeRows, SerialAndParallelAgreeAndResidualsAreReported) {
  const auto schema = testing::binary_schema(3);
  const auto m = testing::random_model({5, 7, 1}, 17);
  const auto data = testing::random_split(40, 3, 18);
  const auto spec = make_baseline_spec(*schema, data.x);
  const auto par = attribute_rows(m, data.x, spec, 16, OutputTarget::kLogit, Execution::kParallel);
  const auto ser = attribute_rows(m, data.x, spec, 16, OutputTarget::kLogit, Execution::kSerial);
  ASSERT_EQ(par.size(), 40u);
  for (std::size_t r = 0; r < 40; ++r) {
    EXPECT_EQ(par[r].attributions, ser[r].attributions);
    const auto b = build_baseline(spec, data.x.row(r));
    const double sum = std::accumulate(par[r].attributions.begin(), par[r].attributions.end(), 0.0);
    EXPECT_DOUBLE_EQ(par[r].completeness_residual,
                     sum - output_difference(m, data.x.row(r), b, OutputTarget::kLogit));
  }
}

TEST(GroupSummary, HistogramAndGroupMeans) {
  PartyDataset party;
  party.schema = testing::binary_schema(2);
  party.test = testing::random_split(60, 2, 21);
  party.train = party.test;
  // Affine model: sensitive attribution is w_g - w_other for every row.
  auto m = testing::random_model({4, 1}, 22, 0.1);
  const auto s = group_attribution_summary(m, party, 8);
  ASSERT_EQ(s.groups.size(), 2u);
  std::size_t total = 0;
  for (const auto& g : s.groups) {
    total += g.count;
    EXPECT_EQ(g.histogram.size(), kHistogramBins + 2);
    EXPECT_EQ(std::accumulate(g.histogram.begin(), g.histogram.end(), std::size_t{0}), g.count);
    const double own = m.weight(0, 0, 2 + g.group), other = m.weight(0, 0, 3 - g.group);
    EXPECT_NEAR(g.mean_sensitive, own - other, 1e-12);
    EXPECT_NEAR(g.mean_abs_sensitive, std::abs(own - other), 1e-12);
  }
  EXPECT_EQ(total, 60u);
  EXPECT_LE(s.max_abs_residual, 1e-12);
  EXPECT_TRUE(s.notices.empty());
  const auto j = to_json(s);
  EXPECT_EQ(j["groups"].size(), 2u);
}

TEST(GroupSummary, MissingGroupProducesNotice) {
  PartyDataset party;
  party.schema = testing::binary_schema(2);
  party.test = testing::random_split(20, 2, 23);
  std::vector<std::size_t> keep;
  for (std::size_t r = 0; r < party.test.size(); ++r) {
    if (party.test.a[r] == 0) keep.push_back(r);
  }
  party.test = party.test.subset(keep);
  const auto s = group_attribution_summary(testing::random_model({4, 3, 1}, 1), party, 4);
  ASSERT_EQ(s.groups.size(), 1u);
  EXPECT_EQ(s.groups[0].group, 0);
  ASSERT_EQ(s.notices.size(), 1u);
  EXPECT_NE(s.notices[0].find("g1"), std::string::npos);
}

TEST(GroupSummary, ExtremeValuesLandInOverflowBins) {
  PartyDataset party;
  party.schema = testing::binary_schema(1);
  party.test = testing::random_split(10, 1, 24);
  MlpModel m({3, 1});
  m.weight(0, 0, 1) = 5.0;  // group-0 rows: +5, group-1 rows: -5
  const auto s = group_attribution_summary(m, party, 4);
  for (const auto& g : s.groups) {
    const std::size_t bin = g.group == 0 ? kHistogramBins + 1 : 0;
    EXPECT_EQ(g.histogram[bin], g.count);
  }
}

}  // namespace
}  // namespace fedbias
