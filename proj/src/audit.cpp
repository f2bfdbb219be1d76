#include "fedbias/audit.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <tuple>

#include "fedbias/errors.hpp"
#include "fedbias/training.hpp"

namespace fedbias {

namespace {

std::optional<double> difference(const std::optional<double>& a, const std::optional<double>& b) {
  if (!a || !b) return std::nullopt;
  return *a - *b;
}

class OptionalMean {
 public:
  void add(const std::optional<double>& v) {
    if (v) {
      sum_ += *v;
      ++n_;
    }
  }
  std::optional<double> get() const {
    if (n_ == 0) return std::nullopt;
    return sum_ / static_cast<double>(n_);
  }

 private:
  double sum_ = 0.0;
  std::size_t n_ = 0;
};

std::size_t groups_of(const std::vector<PartyDataset>& parties) {
  if (parties.empty() || !parties.front().schema) {
    throw InvalidArgument("parties need a feature schema");
  }
  return parties.front().schema->num_groups();
}

std::string fmt_optional(const std::optional<double>& v) {
  if (!v) return "";
  std::ostringstream ss;
  ss.precision(17);
  ss << *v;
  return ss.str();
}

}  // namespace

std::string standalone_model_name(std::size_t party_index) {
  return "standalone_" + std::to_string(party_index);
}

BenefitReport compute_benefits(std::span<const MlpModel> standalone, const MlpModel& centralized,
                               const MlpModel& federated,
                               const std::vector<PartyDataset>& parties, GapMetric metric,
                               std::size_t min_cell, Execution exec) {
  if (standalone.size() != parties.size()) {
    throw InvalidArgument("one standalone model per party required");
  }
  const std::size_t groups = groups_of(parties);
  BenefitReport report;
  report.metric = metric;
  report.parties.resize(parties.size());
  parallel_for(parties.size(), exec, [&](std::size_t k) {
    const Split& test = parties[k].test;
    const auto own = evaluate(standalone[k], test, groups, min_cell);
    const auto fl = evaluate(federated, test, groups, min_cell);
    const auto central = evaluate(centralized, test, groups, min_cell);
    PartyBenefit& b = report.parties[k];
    b.party_id = parties[k].party_id;
    b.standalone_gap = own.gap(metric);
    b.fl_gap = fl.gap(metric);
    b.centralized_gap = central.gap(metric);
    b.standalone_accuracy = own.accuracy;
    b.fl_accuracy = fl.accuracy;
    b.centralized_accuracy = central.accuracy;
    b.acc_benefit_fl = fl.accuracy - own.accuracy;
    b.acc_benefit_collab = central.accuracy - own.accuracy;
    b.fairness_benefit_fl = difference(b.standalone_gap, b.fl_gap);
    b.fairness_benefit_collab = difference(b.standalone_gap, b.centralized_gap);
  });

  OptionalMean sg, fg, cg, fb, cb;
  double sa = 0.0, fa = 0.0, ca = 0.0, abf = 0.0, abc = 0.0;
  for (const auto& b : report.parties) {
    sg.add(b.standalone_gap);
    fg.add(b.fl_gap);
    cg.add(b.centralized_gap);
    fb.add(b.fairness_benefit_fl);
    cb.add(b.fairness_benefit_collab);
    sa += b.standalone_accuracy;
    fa += b.fl_accuracy;
    ca += b.centralized_accuracy;
    abf += b.acc_benefit_fl;
    abc += b.acc_benefit_collab;
  }
  const double n = static_cast<double>(parties.size());
  report.average = {sg.get(), fg.get(), cg.get(), sa / n,     fa / n,
                    ca / n,   abf / n,  abc / n,  fb.get(), cb.get()};
  return report;
}

BenefitReport compute_benefits(const std::filesystem::path& run_dir,
                               const std::vector<PartyDataset>& parties, GapMetric metric,
                               std::size_t min_cell) {
  RunDirectory run(run_dir);
  std::vector<std::string> missing;
  std::vector<std::string> names;
  for (std::size_t k = 0; k < parties.size(); ++k) names.push_back(standalone_model_name(k));
  names.emplace_back(kCentralizedModel);
  names.emplace_back(kFederatedModel);
  for (const auto& name : names) {
    if (!run.has_model(name)) missing.push_back(run.model_path(name).string());
  }
  if (!missing.empty()) {
    std::string msg = "run is missing artifacts:";
    for (const auto& m : missing) msg += " " + m;
    throw NotFound(msg);
  }
  std::vector<MlpModel> standalone;
  for (std::size_t k = 0; k < parties.size(); ++k) {
    standalone.push_back(run.read_model(standalone_model_name(k)));
  }
  return compute_benefits(standalone, run.read_model(kCentralizedModel),
                          run.read_model(kFederatedModel), parties, metric, min_cell);
}

MlpModel leave_one_out_aggregate(std::span<const MlpModel> locals,
                                 std::span<const std::size_t> sizes, std::size_t excluded) {
  if (locals.size() < 2) throw InvalidArgument("leave-one-out needs at least two parties");
  if (sizes.size() != locals.size()) throw InvalidArgument("one size per local model required");
  if (excluded >= locals.size()) throw InvalidArgument("excluded party out of range");
  std::vector<MlpModel> kept;
  std::vector<std::size_t> kept_sizes;
  kept.reserve(locals.size() - 1);
  for (std::size_t k = 0; k < locals.size(); ++k) {
    if (k == excluded) continue;
    kept.push_back(locals[k]);
    kept_sizes.push_back(sizes[k]);
  }
  // aggregate() normalizes by the remaining total, N - n_excluded.
  return aggregate(kept, kept_sizes);
}

InfluenceMatrix compute_influence(const TraceSource& traces,
                                  const std::vector<PartyDataset>& parties, GapMetric metric,
                                  std::size_t stride, std::size_t min_cell, Execution exec) {
  const std::size_t k = parties.size();
  if (k < 2) throw InvalidArgument("influence needs at least two parties");
  if (stride == 0) throw InvalidArgument("stride must be >= 1");
  const std::size_t total_rounds = traces.num_rounds();
  if (total_rounds == 0) throw NotFound("no round traces to audit");
  if (traces.num_parties() != k) {
    throw InvalidArgument("trace party count does not match the dataset list");
  }
  const std::size_t groups = groups_of(parties);
  const auto sizes = train_sizes(parties);
  std::vector<const Split*> tests;
  for (const auto& p : parties) tests.push_back(&p.test);

  InfluenceMatrix m;
  m.metric = metric;
  m.num_parties = k;
  m.stride = stride;
  m.total.assign(k * k, 0.0);
  for (std::size_t t = 1; t <= total_rounds; t += stride) {
    const RoundTrace trace = traces.load(t);
    // models[0] = theta_t, models[1 + i] = theta_{t,-i}.
    std::vector<MlpModel> models(k + 1);
    models[0] = trace.global_after;
    parallel_for(k, exec, [&](std::size_t i) {
      models[1 + i] = leave_one_out_aggregate(trace.locals, sizes, i);
    });
    const auto grid = evaluate_grid(models, tests, groups, min_cell, exec);
    std::vector<double> addend(k * k, 0.0);
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t j = 0; j < k; ++j) {
        const auto without = grid[1 + i][j].gap(metric);
        const auto with = grid[0][j].gap(metric);
        if (without && with) {
          addend[i * k + j] = *without - *with;
        } else {
          ++m.undefined_evaluations;
        }
      }
    }
    for (std::size_t idx = 0; idx < k * k; ++idx) m.total[idx] += addend[idx];
    m.rounds.push_back(t);
    m.per_round.push_back(std::move(addend));
  }

  m.mean_influence.assign(k, 0.0);
  m.cumulative.assign(k, std::vector<double>(m.rounds.size(), 0.0));
  m.cumulative_mean.assign(k, std::vector<double>(m.rounds.size(), 0.0));
  for (std::size_t i = 0; i < k; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < k; ++j) row += m.total[i * k + j];
    m.mean_influence[i] = row / static_cast<double>(k);
    double running = 0.0;
    for (std::size_t r = 0; r < m.rounds.size(); ++r) {
      for (std::size_t j = 0; j < k; ++j) running += m.per_round[r][i * k + j];
      m.cumulative[i][r] = running;
      m.cumulative_mean[i][r] = running / static_cast<double>(k);
    }
  }
  return m;
}

TopPairs influence_top_pairs(const InfluenceMatrix& matrix, std::size_t n_positive,
                             std::size_t n_negative) {
  const std::size_t k = matrix.num_parties;
  std::vector<InfluencePair> pairs;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      if (i != j) pairs.push_back({i, j, matrix.at(i, j)});
    }
  }
  auto by_key = [](const InfluencePair& a, const InfluencePair& b) {
    return std::tie(a.influencer, a.influenced) < std::tie(b.influencer, b.influenced);
  };
  TopPairs out;
  auto desc = pairs;
  std::stable_sort(desc.begin(), desc.end(), [&](const auto& a, const auto& b) {
    if (a.value != b.value) return a.value > b.value;
    return by_key(a, b);
  });
  desc.resize(std::min(n_positive, desc.size()));
  out.positive = std::move(desc);
  auto asc = pairs;
  std::stable_sort(asc.begin(), asc.end(), [&](const auto& a, const auto& b) {
    if (a.value != b.value) return a.value < b.value;
    return by_key(a, b);
  });
  asc.resize(std::min(n_negative, asc.size()));
  out.negative = std::move(asc);
  return out;
}

DynamicsSeries fairness_dynamics(const TraceSource& traces, const PartyDataset& party,
                                 std::size_t party_index, GapMetric metric,
                                 std::size_t min_cell) {
  if (!party.schema) throw InvalidArgument("party needs a feature schema");
  if (party_index >= traces.num_parties()) throw InvalidArgument("party index out of range");
  const std::size_t groups = party.schema->num_groups();
  const std::size_t rounds = traces.num_rounds();
  DynamicsSeries series;
  series.party_index = party_index;
  series.rounds.resize(rounds);
  series.global_gap.resize(rounds);
  series.local_gap.resize(rounds);
  parallel_for(rounds, Execution::kParallel, [&](std::size_t r) {
    const RoundTrace trace = traces.load(r + 1);
    series.rounds[r] = trace.round;
    series.global_gap[r] = evaluate(trace.global_after, party.test, groups, min_cell).gap(metric);
    series.local_gap[r] =
        evaluate(trace.locals[party_index], party.test, groups, min_cell).gap(metric);
  });
  return series;
}

nlohmann::json to_json(const BenefitReport& report) {
  nlohmann::json parties = nlohmann::json::array();
  for (const auto& b : report.parties) {
    parties.push_back({{"party_id", b.party_id},
                       {"standalone_gap", optional_json(b.standalone_gap)},
                       {"fl_gap", optional_json(b.fl_gap)},
                       {"centralized_gap", optional_json(b.centralized_gap)},
                       {"standalone_accuracy", b.standalone_accuracy},
                       {"fl_accuracy", b.fl_accuracy},
                       {"centralized_accuracy", b.centralized_accuracy},
                       {"acc_benefit_fl", b.acc_benefit_fl},
                       {"acc_benefit_collab", b.acc_benefit_collab},
                       {"fairness_benefit_fl", optional_json(b.fairness_benefit_fl)},
                       {"fairness_benefit_collab", optional_json(b.fairness_benefit_collab)}});
  }
  const auto& a = report.average;
  return {{"metric", to_string(report.metric)},
          {"parties", std::move(parties)},
          {"average",
           {{"standalone_gap", optional_json(a.standalone_gap)},
            {"fl_gap", optional_json(a.fl_gap)},
            {"centralized_gap", optional_json(a.centralized_gap)},
            {"standalone_accuracy", a.standalone_accuracy},
            {"fl_accuracy", a.fl_accuracy},
            {"centralized_accuracy", a.centralized_accuracy},
            {"acc_benefit_fl", a.acc_benefit_fl},
            {"acc_benefit_collab", a.acc_benefit_collab},
            {"fairness_benefit_fl", optional_json(a.fairness_benefit_fl)},
            {"fairness_benefit_collab", optional_json(a.fairness_benefit_collab)}}}};
}

nlohmann::json to_json(const InfluenceMatrix& matrix) {
  const std::size_t k = matrix.num_parties;
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < k; ++i) {
    rows.push_back(std::vector<double>(matrix.total.begin() + i * k,
                                       matrix.total.begin() + (i + 1) * k));
  }
  return {{"metric", to_string(matrix.metric)},
          {"num_parties", k},
          {"stride", matrix.stride},
          {"rounds", matrix.rounds},
          {"matrix", std::move(rows)},
          {"mean_influence", matrix.mean_influence},
          {"cumulative", matrix.cumulative},
          {"cumulative_mean", matrix.cumulative_mean},
          {"undefined_evaluations", matrix.undefined_evaluations}};
}

nlohmann::json to_json(const TopPairs& pairs) {
  auto list = [](const std::vector<InfluencePair>& v) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& p : v) {
      arr.push_back({{"influencer", p.influencer},
                     {"influenced", p.influenced},
                     {"value", p.value}});
    }
    return arr;
  };
  return {{"positive", list(pairs.positive)}, {"negative", list(pairs.negative)}};
}

void write_influence_rounds_csv(const std::filesystem::path& path,
                                const InfluenceMatrix& matrix) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.precision(17);
  out << "round,influencer,influenced,value\n";
  const std::size_t k = matrix.num_parties;
  for (std::size_t r = 0; r < matrix.rounds.size(); ++r) {
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t j = 0; j < k; ++j) {
        out << matrix.rounds[r] << ',' << i << ',' << j << ',' << matrix.per_round[r][i * k + j]
            << '\n';
      }
    }
  }
}

void write_dynamics_csv(const std::filesystem::path& path, const DynamicsSeries& series) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "round,global_gap,local_gap\n";
  for (std::size_t r = 0; r < series.rounds.size(); ++r) {
    out << series.rounds[r] << ',' << fmt_optional(series.global_gap[r]) << ','
        << fmt_optional(series.local_gap[r]) << '\n';
  }
}

}  // namespace fedbias
