#include "fedbias/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "fedbias/errors.hpp"
#include "fedbias/nn.hpp"

namespace fedbias {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (char ch : line) {
    if (ch == '"') {
      quoted = !quoted;
    } else if (ch == ',' && !quoted) {
      cells.push_back(cell);
      cell.clear();
    } else if (ch != '\r') {
      cell.push_back(ch);
    }
  }
  cells.push_back(cell);
  for (auto& c : cells) {
    const auto first = c.find_first_not_of(" \t");
    const auto last = c.find_last_not_of(" \t");
    c = first == std::string::npos ? std::string() : c.substr(first, last - first + 1);
  }
  return cells;
}

std::vector<std::size_t> shuffled_indices(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

// Deals `rows` out to `parties` in contiguous, nearly equal blocks (the first
// rows.size() % parties.size() parties get one extra).
void deal_evenly(const std::vector<std::size_t>& rows, const std::vector<std::size_t>& parties,
                 std::vector<std::vector<std::size_t>>& assignment) {
  if (parties.empty()) return;
  const std::size_t base = rows.size() / parties.size();
  const std::size_t extra = rows.size() % parties.size();
  std::size_t cursor = 0;
  for (std::size_t p = 0; p < parties.size(); ++p) {
    const std::size_t take = base + (p < extra ? 1 : 0);
    auto& dst = assignment[parties[p]];
    dst.insert(dst.end(), rows.begin() + cursor, rows.begin() + cursor + take);
    cursor += take;
  }
}

}  // namespace

void FeatureSchema::validate() const {
  if (sensitive_columns.empty()) throw SchemaError("sensitive attribute has no encoded columns");
  for (std::size_t c : sensitive_columns) {
    if (c >= width()) throw SchemaError("sensitive column index outside encoded width");
  }
  if (std::find(feature_names.begin(), feature_names.end(), sensitive_name) ==
      feature_names.end()) {
    throw SchemaError("sensitive attribute '" + sensitive_name + "' is not an input feature");
  }
  std::size_t expected = 0;
  for (const auto& name : feature_names) {
    auto it = categorical_levels.find(name);
    expected += it == categorical_levels.end() ? 1 : it->second.size();
  }
  if (expected != width()) throw SchemaError("encoded width does not match feature list");
  if (sensitive_is_binary != (sensitive_columns.size() == 2)) {
    throw SchemaError("sensitive_is_binary disagrees with the number of sensitive levels");
  }
}

Split Split::subset(const std::vector<std::size_t>& rows) const {
  Split out;
  out.x = Matrix(rows.size(), x.cols);
  out.y.reserve(rows.size());
  out.a.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto src = x.row(rows[i]);
    std::copy(src.begin(), src.end(), out.x.row(i).begin());
    out.y.push_back(y[rows[i]]);
    out.a.push_back(a[rows[i]]);
  }
  return out;
}

Split concat(const std::vector<const Split*>& parts) {
  Split out;
  std::size_t rows = 0;
  std::size_t cols = parts.empty() ? 0 : parts.front()->x.cols;
  for (const Split* p : parts) {
    if (p->x.cols != cols) throw InvalidArgument("cannot concatenate splits of different widths");
    rows += p->size();
  }
  out.x = Matrix(rows, cols);
  out.x.values.clear();
  for (const Split* p : parts) {
    out.x.values.insert(out.x.values.end(), p->x.values.begin(), p->x.values.end());
    out.y.insert(out.y.end(), p->y.begin(), p->y.end());
    out.a.insert(out.a.end(), p->a.begin(), p->a.end());
  }
  return out;
}

LoadedTable load_csv(const std::filesystem::path& path, const CsvSpec& spec) {
  std::ifstream in(path);
  if (!in) throw NotFound("cannot open CSV: " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.empty()) {
    throw InvalidArgument("CSV file is empty: " + path.string());
  }
  const auto header = split_csv_line(line);
  std::map<std::string, std::size_t> column_of;
  for (std::size_t i = 0; i < header.size(); ++i) column_of[header[i]] = i;
  auto require = [&](const std::string& name) {
    auto it = column_of.find(name);
    if (it == column_of.end()) throw SchemaError("missing column '" + name + "'");
    return it->second;
  };

  std::vector<std::string> features = spec.features;
  if (std::find(features.begin(), features.end(), spec.sensitive_column) == features.end()) {
    features.push_back(spec.sensitive_column);
  }
  if (spec.sensitive_levels.empty()) throw SchemaError("sensitive levels are not declared");

  FeatureSchema schema;
  schema.feature_names = features;
  schema.sensitive_name = spec.sensitive_column;
  schema.categorical_levels = spec.categorical;
  schema.categorical_levels[spec.sensitive_column] = spec.sensitive_levels;
  schema.sensitive_is_binary = spec.sensitive_levels.size() == 2;

  const std::size_t label_col = require(spec.label_column);
  const std::size_t sensitive_col = require(spec.sensitive_column);
  struct Column {
    std::size_t source;
    std::size_t first_encoded;
    const std::vector<std::string>* levels;  // null for numeric
  };
  std::vector<Column> columns;
  for (const auto& name : features) {
    if (name == spec.label_column) throw SchemaError("label column cannot be a feature");
    Column col{require(name), schema.column_names.size(), nullptr};
    auto it = schema.categorical_levels.find(name);
    if (it != schema.categorical_levels.end()) {
      col.levels = &it->second;
      if (name == spec.sensitive_column) {
        for (std::size_t l = 0; l < it->second.size(); ++l) {
          schema.sensitive_columns.push_back(col.first_encoded + l);
        }
      }
      for (const auto& level : it->second) schema.column_names.push_back(name + "=" + level);
    } else {
      schema.column_names.push_back(name);
    }
    columns.push_back(col);
  }
  schema.validate();

  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  std::vector<int> groups;
  std::size_t row_index = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw ValueError("row " + std::to_string(row_index) + " has " +
                       std::to_string(cells.size()) + " cells, header has " +
                       std::to_string(header.size()));
    }
    std::vector<double> encoded(schema.width(), 0.0);
    for (const auto& col : columns) {
      const std::string& value = cells[col.source];
      if (col.levels != nullptr) {
        auto pos = std::find(col.levels->begin(), col.levels->end(), value);
        if (pos == col.levels->end()) {
          throw ValueError("unknown level '" + value + "' for column '" + header[col.source] +
                           "' at row " + std::to_string(row_index));
        }
        encoded[col.first_encoded + (pos - col.levels->begin())] = 1.0;
      } else {
        try {
          std::size_t used = 0;
          encoded[col.first_encoded] = std::stod(value, &used);
          if (used != value.size()) throw std::invalid_argument(value);
        } catch (const std::exception&) {
          throw ValueError("non-numeric value '" + value + "' in column '" +
                           header[col.source] + "' at row " + std::to_string(row_index));
        }
      }
    }
    const std::string& label = cells[label_col];
    int y = 0;
    if (spec.positive_label) {
      y = label == *spec.positive_label ? 1 : 0;
    } else if (label == "1") {
      y = 1;
    } else if (label == "0") {
      y = 0;
    } else {
      throw ValueError("label '" + label + "' at row " + std::to_string(row_index) +
                       " is not 0/1 and no positive label is declared");
    }
    const auto& levels = spec.sensitive_levels;
    auto g = std::find(levels.begin(), levels.end(), cells[sensitive_col]);
    groups.push_back(static_cast<int>(g - levels.begin()));
    labels.push_back(y);
    rows.push_back(std::move(encoded));
    ++row_index;
  }
  if (rows.empty()) throw InvalidArgument("CSV has a header but no rows: " + path.string());

  LoadedTable table;
  table.data.x = Matrix(rows.size(), schema.width());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::copy(rows[r].begin(), rows[r].end(), table.data.x.row(r).begin());
  }
  table.data.y = std::move(labels);
  table.data.a = std::move(groups);

  // Standardize numeric columns with this file's statistics.
  constexpr double kVarianceFloor = 1e-12;
  for (const auto& col : columns) {
    if (col.levels != nullptr) continue;
    const std::size_t c = col.first_encoded;
    const double n = static_cast<double>(rows.size());
    double mean = 0.0;
    for (std::size_t r = 0; r < rows.size(); ++r) mean += table.data.x.at(r, c);
    mean /= n;
    double var = 0.0;
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const double d = table.data.x.at(r, c) - mean;
      var += d * d;
    }
    var /= n;
    const double sd = var > kVarianceFloor ? std::sqrt(var) : 0.0;
    for (std::size_t r = 0; r < rows.size(); ++r) {
      double& v = table.data.x.at(r, c);
      v = sd > 0.0 ? (v - mean) / sd : 0.0;
    }
  }
  table.schema = std::move(schema);
  return table;
}

int group_from_onehot(const FeatureSchema& schema, std::span<const double> row) {
  int group = -1;
  for (std::size_t g = 0; g < schema.sensitive_columns.size(); ++g) {
    const double v = row[schema.sensitive_columns[g]];
    if (v == 1.0) {
      if (group >= 0) return -1;
      group = static_cast<int>(g);
    } else if (v != 0.0) {
      return -1;
    }
  }
  return group;
}

void SyntheticConfig::validate() const {
  if (num_parties < 2) throw InvalidArgument("synthetic benchmark needs at least 2 parties");
  if (n_train < 1 || n_test < 1) throw InvalidArgument("n_train and n_test must be >= 1");
  if (num_numeric < 1) throw InvalidArgument("need at least one numeric feature");
  if (bias_levels.size() != num_parties) {
    throw InvalidArgument("bias_levels needs one entry per party");
  }
  for (double b : bias_levels) {
    if (!(b >= 0.0 && b <= 1.0)) throw InvalidArgument("bias levels must lie in [0,1]");
  }
  if (!(group1_fraction > 0.0 && group1_fraction < 1.0)) {
    throw InvalidArgument("group1_fraction must lie in (0,1)");
  }
  if (!(signal_scale >= 0.0) || !std::isfinite(intercept)) {
    throw InvalidArgument("invalid logit parameters");
  }
}

std::vector<double> linear_bias_levels(std::size_t num_parties, double low, double high) {
  std::vector<double> out(num_parties, low);
  if (num_parties < 2) return out;
  for (std::size_t k = 0; k < num_parties; ++k) {
    out[k] = low + (high - low) * static_cast<double>(k) / static_cast<double>(num_parties - 1);
  }
  return out;
}

SyntheticBenchmark generate_synthetic(const SyntheticConfig& config) {
  config.validate();
  const std::size_t d = config.num_numeric;

  auto schema = std::make_shared<FeatureSchema>();
  for (std::size_t i = 0; i < d; ++i) {
    schema->feature_names.push_back("x" + std::to_string(i));
    schema->column_names.push_back("x" + std::to_string(i));
  }
  schema->feature_names.push_back("group");
  schema->categorical_levels["group"] = {"g0", "g1"};
  schema->column_names.push_back("group=g0");
  schema->column_names.push_back("group=g1");
  schema->sensitive_name = "group";
  schema->sensitive_columns = {d, d + 1};
  schema->sensitive_is_binary = true;
  schema->validate();

  SyntheticBenchmark bench;
  bench.schema = schema;
  bench.truth_intercept = config.intercept;
  {
    std::seed_seq seq{config.seed, std::uint64_t{0x7a11}};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> normal(0.0, 1.0);
    bench.truth_weights.resize(d);
    const double scale = config.signal_scale / std::sqrt(static_cast<double>(d));
    for (double& w : bench.truth_weights) w = scale * normal(rng);
  }

  for (std::size_t k = 0; k < config.num_parties; ++k) {
    std::seed_seq seq{config.seed, static_cast<std::uint64_t>(k), std::uint64_t{0xda7a}};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    auto draw = [&](std::size_t n, bool corrupt) {
      Split s;
      s.x = Matrix(n, d + 2);
      s.y.resize(n);
      s.a.resize(n);
      for (std::size_t r = 0; r < n; ++r) {
        auto row = s.x.row(r);
        double logit = config.intercept;
        for (std::size_t i = 0; i < d; ++i) {
          row[i] = normal(rng);
          logit += bench.truth_weights[i] * row[i];
        }
        const int group = unit(rng) < config.group1_fraction ? 1 : 0;
        row[d + group] = 1.0;
        s.a[r] = group;
        int y = unit(rng) < sigmoid(logit) ? 1 : 0;
        // Always draw, so clean and corrupted parties consume the stream alike.
        const bool overwrite = unit(rng) < config.bias_levels[k];
        if (corrupt && overwrite) y = group == 0 ? 1 : 0;
        s.y[r] = y;
      }
      return s;
    };

    PartyDataset party;
    party.party_id = static_cast<int>(k);
    party.train = draw(config.n_train, true);
    party.test = draw(config.n_test, false);
    party.schema = schema;
    bench.parties.push_back(std::move(party));
  }
  return bench;
}

void PartitionSpec::validate() const {
  if (num_parties < 1) throw InvalidArgument("num_parties must be >= 1");
  if (mode == PartitionMode::kMinorityRatioSplit &&
      !(minority_ratio > 0.0 && minority_ratio <= 1.0)) {
    throw InvalidArgument("minority_ratio must lie in (0,1]");
  }
}

PartitionMode parse_partition_mode(const std::string& name) {
  if (name == "iid") return PartitionMode::kIid;
  if (name == "minority_ratio_split") return PartitionMode::kMinorityRatioSplit;
  if (name == "single_holder") return PartitionMode::kSingleHolder;
  throw InvalidArgument("unknown partition mode '" + name + "'");
}

std::string to_string(PartitionMode mode) {
  switch (mode) {
    case PartitionMode::kIid: return "iid";
    case PartitionMode::kMinorityRatioSplit: return "minority_ratio_split";
    case PartitionMode::kSingleHolder: return "single_holder";
  }
  return "iid";
}

std::vector<std::array<std::size_t, 2>> cell_counts(const Split& data, std::size_t num_groups) {
  std::vector<std::array<std::size_t, 2>> counts(num_groups, {0, 0});
  for (std::size_t r = 0; r < data.size(); ++r) {
    const int g = data.a[r];
    if (g < 0 || static_cast<std::size_t>(g) >= num_groups) {
      throw InvalidArgument("group id out of range at row " + std::to_string(r));
    }
    ++counts[g][data.y[r] != 0 ? 1 : 0];
  }
  return counts;
}

std::pair<int, int> minority_cell(const Split& data, std::size_t num_groups) {
  const auto counts = cell_counts(data, num_groups);
  std::pair<int, int> best{-1, -1};
  std::size_t best_count = 0;
  for (std::size_t g = 0; g < num_groups; ++g) {
    for (int y = 0; y < 2; ++y) {
      const std::size_t c = counts[g][y];
      if (c == 0) continue;
      if (best.first < 0 || c < best_count) {
        best = {static_cast<int>(g), y};
        best_count = c;
      }
    }
  }
  return best;
}

std::vector<PartyDataset> partition(const Split& data, const PartitionSpec& spec,
                                    std::shared_ptr<const FeatureSchema> schema) {
  spec.validate();
  const std::size_t k = spec.num_parties;
  if (data.size() < k) {
    throw InvalidArgument("cannot partition " + std::to_string(data.size()) + " rows among " +
                          std::to_string(k) + " parties");
  }
  std::mt19937_64 rng(spec.seed);
  std::vector<std::vector<std::size_t>> assignment(k);
  std::vector<std::size_t> all_parties(k);
  std::iota(all_parties.begin(), all_parties.end(), 0);

  if (spec.mode == PartitionMode::kIid || k == 1) {
    deal_evenly(shuffled_indices(data.size(), rng), all_parties, assignment);
  } else {
    const std::size_t groups = schema ? schema->num_groups()
                                      : static_cast<std::size_t>(
                                            *std::max_element(data.a.begin(), data.a.end()) + 1);
    const auto cell = minority_cell(data, groups);
    std::vector<std::size_t> minority;
    std::vector<std::size_t> rest;
    for (std::size_t idx : shuffled_indices(data.size(), rng)) {
      const bool in_cell = data.a[idx] == cell.first && (data.y[idx] != 0 ? 1 : 0) == cell.second;
      (in_cell ? minority : rest).push_back(idx);
    }
    if (spec.mode == PartitionMode::kMinorityRatioSplit) {
      const std::size_t heavy = (k + 1) / 2;
      const auto to_heavy = static_cast<std::size_t>(
          std::llround(spec.minority_ratio * static_cast<double>(minority.size())));
      std::vector<std::size_t> heavy_rows(minority.begin(), minority.begin() + to_heavy);
      std::vector<std::size_t> light_rows(minority.begin() + to_heavy, minority.end());
      std::vector<std::size_t> heavy_parties(all_parties.begin(), all_parties.begin() + heavy);
      std::vector<std::size_t> light_parties(all_parties.begin() + heavy, all_parties.end());
      deal_evenly(heavy_rows, heavy_parties, assignment);
      deal_evenly(light_rows, light_parties, assignment);
      deal_evenly(rest, all_parties, assignment);
    } else {
      const std::size_t to_holder = minority.size() / 2;
      assignment[0].insert(assignment[0].end(), minority.begin(), minority.begin() + to_holder);
      rest.insert(rest.end(), minority.begin() + to_holder, minority.end());
      std::shuffle(rest.begin(), rest.end(), rng);
      deal_evenly(rest, all_parties, assignment);
    }
  }

  std::vector<PartyDataset> parties;
  for (std::size_t p = 0; p < k; ++p) {
    if (assignment[p].empty()) {
      throw InvalidArgument("party " + std::to_string(p) + " received no rows");
    }
    std::sort(assignment[p].begin(), assignment[p].end());
    PartyDataset party;
    party.party_id = static_cast<int>(p);
    party.train = data.subset(assignment[p]);
    party.schema = schema;
    parties.push_back(std::move(party));
  }
  return parties;
}

std::pair<Split, Split> train_test_split(const Split& data, double test_fraction,
                                         std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw InvalidArgument("test fraction must lie in (0,1)");
  }
  const auto n_test = static_cast<std::size_t>(
      std::llround(test_fraction * static_cast<double>(data.size())));
  if (n_test < 1 || n_test >= data.size()) {
    throw InvalidArgument("split of " + std::to_string(data.size()) +
                          " rows leaves an empty side");
  }
  std::mt19937_64 rng(seed);
  auto idx = shuffled_indices(data.size(), rng);
  std::vector<std::size_t> test(idx.begin(), idx.begin() + n_test);
  std::vector<std::size_t> train(idx.begin() + n_test, idx.end());
  std::sort(test.begin(), test.end());
  std::sort(train.begin(), train.end());
  return {data.subset(train), data.subset(test)};
}

nlohmann::json dataset_manifest(const std::vector<PartyDataset>& parties) {
  nlohmann::json out;
  out["num_parties"] = parties.size();
  nlohmann::json list = nlohmann::json::array();
  for (const auto& p : parties) {
    const std::size_t groups = p.schema ? p.schema->num_groups() : 2;
    auto cells = [&](const Split& s) {
      nlohmann::json arr = nlohmann::json::array();
      const auto counts = cell_counts(s, groups);
      for (std::size_t g = 0; g < groups; ++g) {
        for (int y = 0; y < 2; ++y) {
          arr.push_back({{"group", g}, {"label", y}, {"count", counts[g][y]}});
        }
      }
      return arr;
    };
    list.push_back({{"party_id", p.party_id},
                    {"n_train", p.train.size()},
                    {"n_test", p.test.size()},
                    {"train_cells", cells(p.train)},
                    {"test_cells", cells(p.test)}});
  }
  out["parties"] = std::move(list);
  return out;
}

void write_party_csv(const std::filesystem::path& path, const PartyDataset& party) {
  if (!party.schema) throw InvalidArgument("party has no schema");
  const FeatureSchema& schema = *party.schema;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.precision(17);
  for (const auto& name : schema.feature_names) out << name << ',';
  out << "label,split\n";
  auto write = [&](const Split& s, const char* tag) {
    for (std::size_t r = 0; r < s.size(); ++r) {
      std::size_t col = 0;
      for (const auto& name : schema.feature_names) {
        auto it = schema.categorical_levels.find(name);
        if (it == schema.categorical_levels.end()) {
          out << s.x.at(r, col) << ',';
          ++col;
        } else {
          std::size_t level = 0;
          for (std::size_t l = 0; l < it->second.size(); ++l) {
            if (s.x.at(r, col + l) == 1.0) level = l;
          }
          out << it->second[level] << ',';
          col += it->second.size();
        }
      }
      out << s.y[r] << ',' << tag << '\n';
    }
  };
  write(party.train, "train");
  write(party.test, "test");
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace fedbias
