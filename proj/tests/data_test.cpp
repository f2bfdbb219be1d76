#include "fedbias/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "fedbias/errors.hpp"
#include "fedbias/metrics.hpp"
#include "fedbias/nn.hpp"
#include "fedbias/training.hpp"
#include "test_util.hpp"

namespace fedbias {
namespace {

CsvSpec adult_like_spec() {
  CsvSpec spec;
  spec.label_column = "income";
  spec.positive_label = ">50K";
  spec.sensitive_column = "sex";
  spec.sensitive_levels = {"Male", "Female"};
  spec.features = {"age", "workclass"};
  spec.categorical["workclass"] = {"private", "gov", "self"};
  return spec;
}

std::filesystem::path write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream(path) << text;
  return path;
}

TEST(LoadCsv, EncodesAndStandardizes) {
  const auto dir = testing::scratch_dir();
  const auto path = write_file(dir / "a.csv",
                               "age,workclass,sex,income\n"
                               "30,private,Male,>50K\n"
                               "50,gov,Female,<=50K\n"
                               "40,\"self\",Female,>50K\n");
  const auto table = load_csv(path, adult_like_spec());
  const auto& schema = table.schema;
  EXPECT_EQ(schema.column_names,
            (std::vector<std::string>{"age", "workclass=private", "workclass=gov",
                                      "workclass=self", "sex=Male", "sex=Female"}));
  EXPECT_EQ(schema.sensitive_columns, (std::vector<std::size_t>{4, 5}));
  EXPECT_TRUE(schema.sensitive_is_binary);
  EXPECT_EQ(table.data.y, (std::vector<int>{1, 0, 1}));
  EXPECT_EQ(table.data.a, (std::vector<int>{0, 1, 1}));
  // age: mean 40, population sd sqrt(200/3).
  const double sd = std::sqrt(200.0 / 3.0);
  EXPECT_NEAR(table.data.x.at(0, 0), -10.0 / sd, 1e-12);
  EXPECT_NEAR(table.data.x.at(2, 0), 0.0, 1e-12);
  EXPECT_EQ(table.data.x.at(2, 3), 1.0);
  EXPECT_EQ(table.data.x.at(1, 5), 1.0);
  for (std::size_t r = 0; r < 3; ++r) {
    EXPECT_EQ(group_from_onehot(schema, table.data.x.row(r)), table.data.a[r]);
  }
}

TEST(LoadCsv, ConstantColumnBecomesZero) {
  const auto dir = testing::scratch_dir();
  const auto path = write_file(dir / "c.csv",
                               "age,workclass,sex,income\n"
                               "7,private,Male,>50K\n"
                               "7,gov,Female,<=50K\n");
  const auto table = load_csv(path, adult_like_spec());
  EXPECT_EQ(table.data.x.at(0, 0), 0.0);
  EXPECT_EQ(table.data.x.at(1, 0), 0.0);
}

TEST(LoadCsv, Errors) {
  const auto dir = testing::scratch_dir();
  EXPECT_THROW(load_csv(dir / "absent.csv", adult_like_spec()), NotFound);
  const auto empty = write_file(dir / "e.csv", "");
  EXPECT_THROW(load_csv(empty, adult_like_spec()), InvalidArgument);
  const auto missing = write_file(dir / "m.csv", "age,sex,income\n30,Male,>50K\n");
  EXPECT_THROW(load_csv(missing, adult_like_spec()), SchemaError);
  const auto level = write_file(dir / "l.csv",
                                "age,workclass,sex,income\n"
                                "30,private,Male,>50K\n"
                                "31,army,Male,>50K\n");
  try {
    load_csv(level, adult_like_spec());
    FAIL() << "expected ValueError";
  } catch (const ValueError& e) {
    EXPECT_NE(std::string(e.what()).find("row 1"), std::string::npos);
  }
  const auto sex = write_file(dir / "s.csv", "age,workclass,sex,income\n30,private,Other,>50K\n");
  EXPECT_THROW(load_csv(sex, adult_like_spec()), ValueError);
}

TEST(LoadCsv, MultiValuedSensitiveAttribute) {
  const auto dir = testing::scratch_dir();
  const auto path = write_file(dir / "r.csv",
                               "age,race,y\n1,a,1\n2,b,0\n3,c,1\n");
  CsvSpec spec;
  spec.label_column = "y";
  spec.sensitive_column = "race";
  spec.sensitive_levels = {"a", "b", "c"};
  spec.features = {"age"};
  const auto table = load_csv(path, spec);
  EXPECT_FALSE(table.schema.sensitive_is_binary);
  EXPECT_EQ(table.schema.num_groups(), 3u);
  EXPECT_EQ(table.data.a, (std::vector<int>{0, 1, 2}));
}

TEST(GroupFromOnehot, InvalidRowsAreMinusOne) {
  const auto schema = testing::binary_schema(1);
  EXPECT_EQ(group_from_onehot(*schema, std::vector<double>{0.3, 0.0, 1.0}), 1);
  EXPECT_EQ(group_from_onehot(*schema, std::vector<double>{0.3, 0.0, 0.0}), -1);
  EXPECT_EQ(group_from_onehot(*schema, std::vector<double>{0.3, 1.0, 1.0}), -1);
  EXPECT_EQ(group_from_onehot(*schema, std::vector<double>{0.3, 0.5, 0.5}), -1);
}

SyntheticConfig small_config(std::vector<double> bias, std::uint64_t seed = 3) {
  SyntheticConfig c;
  c.num_numeric = 5;
  c.num_parties = bias.size();
  c.n_train = 400;
  c.n_test = 2000;
  c.bias_levels = std::move(bias);
  c.seed = seed;
  return c;
}

TEST(Synthetic, DeterministicInSeed) {
  const auto a = generate_synthetic(small_config({0.0, 0.5}));
  const auto b = generate_synthetic(small_config({0.0, 0.5}));
  const auto c = generate_synthetic(small_config({0.0, 0.5}, 4));
  for (std::size_t k = 0; k < 2; ++k) {
    EXPECT_EQ(a.parties[k].train, b.parties[k].train);
    EXPECT_EQ(a.parties[k].test, b.parties[k].test);
  }
  EXPECT_FALSE(a.parties[0].train == c.parties[0].train);
}

TEST(Synthetic, Validates) {
  EXPECT_THROW(generate_synthetic(small_config({0.0})), InvalidArgument);
  EXPECT_THROW(generate_synthetic(small_config({0.0, 1.5})), InvalidArgument);
  auto c = small_config({0.0, 0.1});
  c.bias_levels.pop_back();
  EXPECT_THROW(generate_synthetic(c), InvalidArgument);
}

TEST(Synthetic, UnbiasedBayesPredictorHasSmallGap) {
  // The Bayes-optimal predictor on clean labels ignores the group.
  const auto bench = generate_synthetic(small_config({0.0, 0.0, 0.0}));
  for (const auto& party : bench.parties) {
    std::vector<int> pred;
    for (std::size_t r = 0; r < party.test.size(); ++r) {
      double z = bench.truth_intercept;
      for (std::size_t i = 0; i < bench.truth_weights.size(); ++i) {
        z += bench.truth_weights[i] * party.test.x.at(r, i);
      }
      pred.push_back(z >= 0.0 ? 1 : 0);
    }
    const auto report = evaluate_predictions(pred, party.test.y, party.test.a, 2);
    ASSERT_TRUE(report.dp_gap);
    EXPECT_LE(*report.dp_gap, 0.05);
  }
}

TEST(Synthetic, FullBiasOverwritesEveryTrainLabel) {
  const auto bench = generate_synthetic(small_config({0.0, 1.0}));
  const auto& train = bench.parties[1].train;
  for (std::size_t r = 0; r < train.size(); ++r) {
    EXPECT_EQ(train.y[r], train.a[r] == 0 ? 1 : 0);
  }
  const auto report = evaluate_predictions(train.y, train.y, train.a, 2);
  EXPECT_GE(*report.dp_gap, 0.9);
  // Test labels stay clean.
  const auto test = evaluate_predictions(bench.parties[1].test.y, bench.parties[1].test.y,
                                         bench.parties[1].test.a, 2);
  EXPECT_LE(*test.dp_gap, 0.1);
}

TEST(Synthetic, TrainLabelGapGrowsWithBias) {
  const auto bench = generate_synthetic(small_config({0.0, 0.3, 0.6, 0.9}));
  double previous = -1.0;
  for (const auto& p : bench.parties) {
    const double gap = *evaluate_predictions(p.train.y, p.train.y, p.train.a, 2).dp_gap;
    EXPECT_GT(gap, previous);
    previous = gap;
  }
}

TEST(Synthetic, StandaloneGapOrdersByBias) {
  // Across seeds, the 0.9 party's standalone model is more biased than the
  // clean party's.
  int wins = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto c = small_config({0.0, 0.9}, seed);
    const auto bench = generate_synthetic(c);
    TrainingConfig tc;
    tc.rounds = 20;
    tc.seed = seed;
    const double clean = *evaluate(train_standalone(bench.parties[0], tc), bench.parties[0].test, 2).dp_gap;
    const double biased = *evaluate(train_standalone(bench.parties[1], tc), bench.parties[1].test, 2).dp_gap;
    wins += biased > clean;
  }
  EXPECT_GE(wins, 4);
}

TEST(LinearBiasLevels, Endpoints) {
  const auto b = linear_bias_levels(20, 0.0, 0.9);
  ASSERT_EQ(b.size(), 20u);
  EXPECT_EQ(b.front(), 0.0);
  EXPECT_DOUBLE_EQ(b.back(), 0.9);
  EXPECT_NEAR(b[1], 0.9 / 19.0, 1e-15);
}

Split labelled_pool(std::size_t n, std::uint64_t seed) { return testing::random_split(n, 2, seed); }

void expect_exact_cover(const Split& pool, const std::vector<PartyDataset>& parties) {
  // Compare rows as multisets of (features, y, a).
  auto key = [](const Split& s, std::size_t r) {
    std::ostringstream ss;
    ss.precision(17);
    for (double v : s.x.row(r)) ss << v << ',';
    ss << s.y[r] << ',' << s.a[r];
    return ss.str();
  };
  std::multiset<std::string> want, got;
  for (std::size_t r = 0; r < pool.size(); ++r) want.insert(key(pool, r));
  for (const auto& p : parties) {
    for (std::size_t r = 0; r < p.train.size(); ++r) got.insert(key(p.train, r));
  }
  EXPECT_EQ(want, got);
}

TEST(Partition, IidIsExhaustiveDisjointAndBalanced) {
  const auto pool = labelled_pool(103, 1);
  PartitionSpec spec{PartitionMode::kIid, 4, 0.8, 5};
  const auto parties = partition(pool, spec, testing::binary_schema(2));
  ASSERT_EQ(parties.size(), 4u);
  expect_exact_cover(pool, parties);
  for (const auto& p : parties) {
    EXPECT_GE(p.n_train(), 25u);
    EXPECT_LE(p.n_train(), 26u);
  }
  const auto again = partition(pool, spec, testing::binary_schema(2));
  for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(parties[k].train, again[k].train);
}

TEST(Partition, MinorityRatioSplitConcentratesMinorityCell) {
  const auto pool = labelled_pool(400, 2);
  const auto cell = minority_cell(pool, 2);
  std::size_t m = 0;
  for (std::size_t r = 0; r < pool.size(); ++r) {
    m += pool.a[r] == cell.first && pool.y[r] == cell.second;
  }
  PartitionSpec spec{PartitionMode::kMinorityRatioSplit, 4, 0.8, 7};
  const auto parties = partition(pool, spec, testing::binary_schema(2));
  expect_exact_cover(pool, parties);
  std::size_t heavy = 0;
  for (std::size_t k = 0; k < 2; ++k) heavy += cell_counts(parties[k].train, 2)[cell.first][cell.second];
  EXPECT_EQ(heavy, static_cast<std::size_t>(std::llround(0.8 * static_cast<double>(m))));
}

TEST(Partition, SingleHolderGetsHalfTheMinorityCell) {
  const auto pool = labelled_pool(400, 3);
  const auto cell = minority_cell(pool, 2);
  const auto total = cell_counts(pool, 2)[cell.first][cell.second];
  PartitionSpec spec{PartitionMode::kSingleHolder, 5, 0.8, 7};
  const auto parties = partition(pool, spec, testing::binary_schema(2));
  expect_exact_cover(pool, parties);
  EXPECT_GE(cell_counts(parties[0].train, 2)[cell.first][cell.second], total / 2);
}

TEST(Partition, TooFewRowsThrows) {
  const auto pool = labelled_pool(3, 3);
  PartitionSpec spec{PartitionMode::kIid, 4, 0.8, 1};
  EXPECT_THROW(partition(pool, spec, testing::binary_schema(2)), InvalidArgument);
  EXPECT_THROW(parse_partition_mode("random"), InvalidArgument);
  EXPECT_EQ(parse_partition_mode(to_string(PartitionMode::kSingleHolder)),
            PartitionMode::kSingleHolder);
}

TEST(TrainTestSplit, DisjointAndExhaustive) {
  const auto pool = labelled_pool(50, 4);
  const auto [train, test] = train_test_split(pool, 0.3, 9);
  EXPECT_EQ(test.size(), 15u);
  EXPECT_EQ(train.size(), 35u);
  PartyDataset a{0, train, {}, nullptr};
  PartyDataset b{1, test, {}, nullptr};
  expect_exact_cover(pool, {a, b});
  EXPECT_THROW(train_test_split(pool, 0.0, 1), InvalidArgument);
  EXPECT_THROW(train_test_split(labelled_pool(1, 1), 0.5, 1), InvalidArgument);
}

TEST(Manifest, CountsMatchData) {
  const auto bench = generate_synthetic(small_config({0.2, 0.7}));
  const auto doc = dataset_manifest(bench.parties);
  EXPECT_EQ(doc["num_parties"], 2);
  for (std::size_t k = 0; k < 2; ++k) {
    const auto counts = cell_counts(bench.parties[k].train, 2);
    for (const auto& cell : doc["parties"][k]["train_cells"]) {
      EXPECT_EQ(cell["count"].get<std::size_t>(),
                counts[cell["group"].get<int>()][cell["label"].get<int>()]);
    }
  }
}

TEST(PartyCsv, RoundTripsThroughLoader) {
  const auto dir = testing::scratch_dir();
  const auto bench = generate_synthetic(small_config({0.2, 0.7}));
  write_party_csv(dir / "p.csv", bench.parties[1]);
  std::ifstream in(dir / "p.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_TRUE(header.ends_with("group,label,split"));
  std::size_t rows = 0, train_rows = 0;
  for (std::string line; std::getline(in, line);) {
    ++rows;
    train_rows += line.ends_with(",train");
  }
  EXPECT_EQ(rows, 2400u);
  EXPECT_EQ(train_rows, 400u);
}

}  // namespace
}  // namespace fedbias
