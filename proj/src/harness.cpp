#include "fedbias/harness.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <random>
#include <set>
#include <sstream>

#include "fedbias/attribution.hpp"
#include "fedbias/audit.hpp"
#include "fedbias/errors.hpp"
#include "fedbias/run_store.hpp"

namespace fedbias {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::mutex log_mutex;

void log(const std::string& msg) {
  std::lock_guard<std::mutex> lock(log_mutex);
  std::cerr << "[fedbias] " << msg << '\n';
}

// Reads one JSON object, remembering which keys were consumed so that
// leftovers can be reported as unknown.
class ObjectReader {
 public:
  ObjectReader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) fail(path_.empty() ? "<root>" : path_, "expected an object");
  }

  bool has(const std::string& key) const { return obj_.contains(key); }

  const json* get(const std::string& key) {
    seen_.insert(key);
    auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  double number(const std::string& key, double fallback) {
    const json* v = get(key);
    if (!v) return fallback;
    if (!v->is_number()) fail(field(key), "expected a number");
    const double d = v->get<double>();
    if (!std::isfinite(d)) fail(field(key), "must be finite");
    return d;
  }

  std::size_t count(const std::string& key, std::size_t fallback) {
    const json* v = get(key);
    if (!v) return fallback;
    return as_count(*v, field(key));
  }

  bool flag(const std::string& key, bool fallback) {
    const json* v = get(key);
    if (!v) return fallback;
    if (!v->is_boolean()) fail(field(key), "expected true or false");
    return v->get<bool>();
  }

  std::string text(const std::string& key, const std::string& fallback) {
    const json* v = get(key);
    if (!v) return fallback;
    if (!v->is_string()) fail(field(key), "expected a string");
    return v->get<std::string>();
  }

  std::string required_text(const std::string& key) {
    if (!has(key)) fail(field(key), "is required");
    return text(key, "");
  }

  std::vector<std::string> strings(const std::string& key) {
    std::vector<std::string> out;
    const json* v = get(key);
    if (!v) return out;
    if (!v->is_array()) fail(field(key), "expected an array of strings");
    for (std::size_t i = 0; i < v->size(); ++i) {
      if (!(*v)[i].is_string()) fail(field(key) + "[" + std::to_string(i) + "]", "expected a string");
      out.push_back((*v)[i].get<std::string>());
    }
    return out;
  }

  void finish() const {
    for (const auto& [key, value] : obj_.items()) {
      if (!seen_.count(key)) fail(field(key), "unknown key");
    }
  }

  [[noreturn]] static void fail(const std::string& path, const std::string& msg) {
    throw ConfigError(path + ": " + msg);
  }

  static std::size_t as_count(const json& v, const std::string& path) {
    if (!v.is_number_integer()) fail(path, "expected a non-negative integer");
    if (v.is_number_unsigned()) return v.get<std::size_t>();
    const auto i = v.get<std::int64_t>();
    if (i < 0) fail(path, "expected a non-negative integer");
    return static_cast<std::size_t>(i);
  }

 private:
  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

// Runs `check` and rethrows library validation errors as ConfigError at path.
template <typename F>
void validate_at(const std::string& path, F&& check) {
  try {
    check();
  } catch (const Error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

SyntheticConfig parse_synthetic(const json& doc, const std::string& path) {
  ObjectReader r(doc, path);
  SyntheticConfig c;
  c.num_numeric = r.count("num_numeric", c.num_numeric);
  c.num_parties = r.count("num_parties", c.num_parties);
  c.n_train = r.count("n_train", c.n_train);
  c.n_test = r.count("n_test", c.n_test);
  c.group1_fraction = r.number("group1_fraction", c.group1_fraction);
  c.signal_scale = r.number("signal_scale", c.signal_scale);
  c.intercept = r.number("intercept", c.intercept);
  const json* levels = r.get("bias_levels");
  const std::string lpath = r.field("bias_levels");
  if (!levels) {
    c.bias_levels = linear_bias_levels(c.num_parties, 0.0, 0.9);
  } else if (levels->is_array()) {
    for (std::size_t i = 0; i < levels->size(); ++i) {
      if (!(*levels)[i].is_number()) {
        ObjectReader::fail(lpath + "[" + std::to_string(i) + "]", "expected a number");
      }
      c.bias_levels.push_back((*levels)[i].get<double>());
    }
  } else if (levels->is_object()) {
    ObjectReader lr(*levels, lpath);
    const double low = lr.number("low", 0.0);
    const double high = lr.number("high", 0.9);
    lr.finish();
    c.bias_levels = linear_bias_levels(c.num_parties, low, high);
  } else {
    ObjectReader::fail(lpath, "expected an array or {low, high}");
  }
  r.finish();
  validate_at(path, [&] { c.validate(); });
  return c;
}

CsvSource parse_csv_source(const json& doc, const std::string& path) {
  ObjectReader r(doc, path);
  CsvSource s;
  s.path = r.required_text("path");
  s.spec.label_column = r.required_text("label_column");
  if (r.has("positive_label")) s.spec.positive_label = r.text("positive_label", "");
  s.spec.sensitive_column = r.required_text("sensitive_column");
  s.spec.sensitive_levels = r.strings("sensitive_levels");
  if (s.spec.sensitive_levels.size() < 2) {
    ObjectReader::fail(r.field("sensitive_levels"), "needs at least two levels");
  }
  s.spec.features = r.strings("features");
  if (const json* cat = r.get("categorical")) {
    ObjectReader cr(*cat, r.field("categorical"));
    for (const auto& [name, value] : cat->items()) {
      s.spec.categorical[name] = cr.strings(name);
    }
    cr.finish();
  }
  s.test_fraction = r.number("test_fraction", s.test_fraction);
  if (!(s.test_fraction > 0.0 && s.test_fraction < 1.0)) {
    ObjectReader::fail(r.field("test_fraction"), "must lie in (0,1)");
  }
  r.finish();
  return s;
}

TrainingConfig parse_training(const json& doc, const std::string& path) {
  ObjectReader r(doc, path);
  TrainingConfig c;
  c.rounds = r.count("rounds", c.rounds);
  c.local_epochs = r.count("local_epochs", c.local_epochs);
  c.batch_size = r.count("batch_size", c.batch_size);
  c.lr = r.number("lr", c.lr);
  c.centralized_lr = r.number("centralized_lr", c.lr);
  c.fedprox_mu = r.number("fedprox_mu", c.fedprox_mu);
  c.hidden_width = r.count("hidden_width", c.hidden_width);
  r.finish();
  if (!(c.lr > 0.0)) ObjectReader::fail(r.field("lr"), "must be > 0");
  if (!(c.centralized_lr > 0.0)) ObjectReader::fail(r.field("centralized_lr"), "must be > 0");
  validate_at(path, [&] { c.validate(); });
  return c;
}

AuditOptions parse_audit(const json& doc, const std::string& path) {
  ObjectReader r(doc, path);
  AuditOptions a;
  const std::string metric = r.text("metric", to_string(a.metric));
  validate_at(r.field("metric"), [&] { a.metric = parse_gap_metric(metric); });
  a.min_cell = r.count("min_cell", a.min_cell);
  a.stride = r.count("stride", a.stride);
  if (a.stride == 0) ObjectReader::fail(r.field("stride"), "must be >= 1");
  a.benefits = r.flag("benefits", a.benefits);
  a.influence = r.flag("influence", a.influence);
  a.dynamics = r.flag("dynamics", a.dynamics);
  a.attribution = r.flag("attribution", a.attribution);
  a.attribution_steps = r.count("attribution_steps", a.attribution_steps);
  if (a.attribution_steps == 0) ObjectReader::fail(r.field("attribution_steps"), "must be >= 1");
  a.norms = r.flag("norms", a.norms);
  a.sweeps = r.flag("sweeps", a.sweeps);
  if (const json* f = r.get("sweep_factors")) {
    const std::string fpath = r.field("sweep_factors");
    if (!f->is_array() || f->empty()) ObjectReader::fail(fpath, "expected a non-empty array");
    a.sweep_factors.clear();
    for (std::size_t i = 0; i < f->size(); ++i) {
      const json& v = (*f)[i];
      if (!v.is_number() || !(v.get<double>() > 0.0) || !std::isfinite(v.get<double>())) {
        ObjectReader::fail(fpath + "[" + std::to_string(i) + "]", "expected a number > 0");
      }
      a.sweep_factors.push_back(v.get<double>());
    }
  }
  a.reweigh = r.flag("reweigh", a.reweigh);
  r.finish();
  return a;
}

std::string hex(const unsigned char* data, std::size_t n) {
  static const char* digits = "0123456789abcdef";
  std::string out;
  for (std::size_t i = 0; i < n; ++i) {
    out += digits[data[i] >> 4];
    out += digits[data[i] & 0xf];
  }
  return out;
}

std::string sha256(const std::string& text) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(text.data(), text.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw IoError("SHA-256 digest failed");
  }
  return hex(digest, len);
}

void write_json(const fs::path& path, const json& doc) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << doc.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFound("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

void make_dirs(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

// Shortest round-trip spelling, used in keys and file names.
std::string short_number(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

Execution seed_execution(const CommandOptions& options) {
  return options.parallel_seeds ? Execution::kParallel : Execution::kSerial;
}

TrainingConfig seeded(const TrainingConfig& base, std::uint64_t seed) {
  TrainingConfig c = base;
  c.seed = seed;
  return c;
}

std::size_t groups_of(const std::vector<PartyDataset>& parties) {
  return parties.front().schema->num_groups();
}

std::vector<std::string> required_models(const ExperimentConfig& config, std::size_t parties) {
  std::vector<std::string> names;
  for (std::size_t k = 0; k < parties; ++k) names.push_back(standalone_model_name(k));
  names.emplace_back(kCentralizedModel);
  names.emplace_back(kFederatedModel);
  for (ReweighScope s : config.reweigh_scopes) names.push_back(reweighed_model_name(s));
  if (config.fedprox_mu) names.emplace_back(kFedProxModel);
  return names;
}

std::size_t party_count(const ExperimentConfig& config) {
  return config.data.synthetic ? config.data.synthetic->num_parties
                               : config.partition.num_parties;
}

// Throws NotFound listing everything an audit needs but the run lacks.
void check_complete(const ExperimentConfig& config, const RunDirectory& run) {
  std::vector<std::string> missing;
  if (!fs::exists(run.root() / kCompleteMarker)) missing.push_back(kCompleteMarker);
  for (const auto& name : required_models(config, party_count(config))) {
    if (!run.has_model(name)) missing.push_back(name + ".ckpt");
  }
  const std::size_t rounds = fs::exists(run.root()) ? run.num_rounds() : 0;
  if (rounds < config.training.rounds) {
    missing.push_back("round_" + std::to_string(rounds + 1) + ".." +
                      std::to_string(config.training.rounds));
  }
  if (!missing.empty()) {
    std::string msg = "incomplete run " + run.root().string() + "; missing:";
    for (const auto& m : missing) msg += " " + m;
    throw NotFound(msg);
  }
}

void train_seed(const ExperimentConfig& config, std::uint64_t seed) {
  const fs::path dir = run_directory(config, seed);
  if (fs::exists(dir / kCompleteMarker)) {
    log("seed " + std::to_string(seed) + ": complete run found at " + dir.string() + ", skipping");
    return;
  }
  std::error_code ec;
  fs::remove_all(dir, ec);
  make_dirs(dir);
  log("seed " + std::to_string(seed) + ": training into " + dir.string());

  const auto parties = build_parties(config, seed);
  json cfg = canonical_run_json(config);
  cfg["seed"] = seed;
  cfg["config_hash"] = config_hash(config);
  write_json(dir / "config.json", cfg);
  write_json(dir / "manifest.json", dataset_manifest(parties));

  const TrainingConfig tc = seeded(config.training, seed);
  RunDirectory run(dir);
  const auto standalone = train_standalone_all(parties, tc);
  for (std::size_t k = 0; k < standalone.size(); ++k) {
    run.write_model(standalone_model_name(k), standalone[k]);
  }
  run.write_model(kCentralizedModel, train_centralized(parties, tc));

  const auto sizes = train_sizes(parties);
  FederatedOptions fed;
  fed.keep_traces = false;
  fed.on_round = [&](const RoundTrace& trace) { run.write_round(trace, sizes); };
  run.write_model(kFederatedModel, run_federated(parties, tc, fed).final_model);

  FederatedOptions plain;
  plain.keep_traces = false;
  for (ReweighScope scope : config.reweigh_scopes) {
    run.write_model(reweighed_model_name(scope),
                    run_federated_reweighed(parties, tc, scope, plain).final_model);
  }
  if (config.fedprox_mu) {
    TrainingConfig prox = tc;
    prox.fedprox_mu = *config.fedprox_mu;
    run.write_model(kFedProxModel, run_federated(parties, prox, plain).final_model);
  }
  std::ofstream(dir / kCompleteMarker) << config_hash(config) << '\n';
  log("seed " + std::to_string(seed) + ": done");
}

using Scalars = std::map<std::string, std::optional<double>>;

std::optional<double> mean_local_minus_global(const DynamicsSeries& s) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t r = 0; r < s.rounds.size(); ++r) {
    if (s.local_gap[r] && s.global_gap[r]) {
      sum += *s.local_gap[r] - *s.global_gap[r];
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

// Index of the largest / smallest defined gap; parties without a defined gap
// are never picked.
std::optional<std::size_t> extreme_party(const std::vector<std::optional<double>>& gaps,
                                         bool largest) {
  std::optional<std::size_t> best;
  for (std::size_t k = 0; k < gaps.size(); ++k) {
    if (!gaps[k]) continue;
    if (!best || (largest ? *gaps[k] > *gaps[*best] : *gaps[k] < *gaps[*best])) best = k;
  }
  return best;
}

void add_benefit_scalars(Scalars& out, const std::string& prefix, const BenefitReport& b) {
  out[prefix + ".standalone_gap"] = b.average.standalone_gap;
  out[prefix + ".fl_gap"] = b.average.fl_gap;
  out[prefix + ".centralized_gap"] = b.average.centralized_gap;
  out[prefix + ".fairness_benefit_fl"] = b.average.fairness_benefit_fl;
  out[prefix + ".fairness_benefit_collab"] = b.average.fairness_benefit_collab;
}

// Network mean of a model's gap and accuracy over every party's test split.
std::pair<std::optional<double>, double> network_mean(const MlpModel& model,
                                                      const std::vector<PartyDataset>& parties,
                                                      GapMetric metric, std::size_t min_cell) {
  std::vector<const Split*> tests;
  for (const auto& p : parties) tests.push_back(&p.test);
  const auto grid = evaluate_grid(std::span<const MlpModel>(&model, 1), tests,
                                  groups_of(parties), min_cell);
  double gap = 0.0;
  double acc = 0.0;
  std::size_t n = 0;
  for (const auto& r : grid[0]) {
    acc += r.accuracy;
    if (const auto g = r.gap(metric)) {
      gap += *g;
      ++n;
    }
  }
  const double k = static_cast<double>(parties.size());
  return {n ? std::optional<double>(gap / static_cast<double>(n)) : std::nullopt, acc / k};
}

Scalars audit_seed(const ExperimentConfig& config, std::uint64_t seed) {
  const AuditOptions& a = config.audit;
  RunDirectory run(run_directory(config, seed));
  check_complete(config, run);
  const auto parties = build_parties(config, seed);
  if (read_json(run.root() / "manifest.json") != dataset_manifest(parties)) {
    throw ValueError("dataset rebuilt from the config does not match " +
                     (run.root() / "manifest.json").string());
  }
  const FeatureSchema& schema = *parties.front().schema;
  const std::string mname = to_string(a.metric);
  const fs::path out = report_directory(config) / ("seed_" + std::to_string(seed));
  bool any = a.benefits || a.influence || a.dynamics || a.attribution || a.norms || a.sweeps ||
             (a.reweigh && !config.reweigh_scopes.empty());
  if (any) make_dirs(out);
  log("seed " + std::to_string(seed) + ": auditing " + run.root().string());

  Scalars s;
  const MlpModel federated = run.read_model(kFederatedModel);
  const MlpModel centralized = run.read_model(kCentralizedModel);
  std::vector<MlpModel> standalone;
  for (std::size_t k = 0; k < parties.size(); ++k) {
    standalone.push_back(run.read_model(standalone_model_name(k)));
  }

  // Standalone gaps define each party's bias; several analyses rank by them.
  const BenefitReport primary = compute_benefits(standalone, centralized, federated, parties,
                                                 a.metric, a.min_cell);
  std::vector<std::optional<double>> standalone_gap;
  for (const auto& b : primary.parties) standalone_gap.push_back(b.standalone_gap);
  const auto most_biased = extreme_party(standalone_gap, true);
  const auto least_biased = extreme_party(standalone_gap, false);

  // Pearson over parties where both values are defined.
  auto correlate = [&](const std::vector<std::optional<double>>& ys) -> std::optional<double> {
    std::vector<double> xv, yv;
    for (std::size_t k = 0; k < ys.size(); ++k) {
      if (standalone_gap[k] && ys[k]) {
        xv.push_back(*standalone_gap[k]);
        yv.push_back(*ys[k]);
      }
    }
    if (xv.size() < 3) return std::nullopt;
    return pearson(xv, yv);
  };

  if (a.benefits) {
    json doc = json::object();
    for (GapMetric m : {GapMetric::kDemographicParity, GapMetric::kEqualizedOdds,
                        GapMetric::kAccuracyGap}) {
      const BenefitReport b = m == a.metric ? primary
                                            : compute_benefits(standalone, centralized, federated,
                                                               parties, m, a.min_cell);
      doc[to_string(m)] = to_json(b);
      add_benefit_scalars(s, "benefits." + to_string(m), b);
    }
    s["benefits.accuracy.standalone"] = primary.average.standalone_accuracy;
    s["benefits.accuracy.fl"] = primary.average.fl_accuracy;
    s["benefits.accuracy.centralized"] = primary.average.centralized_accuracy;
    s["benefits.accuracy.benefit_fl"] = primary.average.acc_benefit_fl;
    s["benefits.accuracy.benefit_collab"] = primary.average.acc_benefit_collab;
    std::vector<std::optional<double>> fb;
    for (const auto& b : primary.parties) fb.push_back(b.fairness_benefit_fl);
    s["bias_propagation.pearson_standalone_gap_vs_fl_benefit"] = correlate(fb);
    if (config.fedprox_mu) {
      const auto [gap, acc] = network_mean(run.read_model(kFedProxModel), parties, a.metric,
                                           a.min_cell);
      s["fedprox.mean_" + mname] = gap;
      s["fedprox.mean_accuracy"] = acc;
      doc["fedprox"] = {{"mu", *config.fedprox_mu},
                        {"mean_gap", optional_json(gap)},
                        {"mean_accuracy", acc}};
    }
    write_json(out / "benefits.json", doc);
  }

  std::vector<RoundTrace> traces;
  if (a.influence || a.dynamics || a.norms) {
    for (std::size_t t = 1; t <= config.training.rounds; ++t) traces.push_back(run.load(t));
  }
  const InMemoryTraces memory(traces);

  if (a.influence) {
    const InfluenceMatrix m = compute_influence(memory, parties, a.metric, a.stride, a.min_cell);
    write_json(out / "influence.json", to_json(m));
    write_influence_rounds_csv(out / "influence_rounds.csv", m);
    write_json(out / "top_pairs.json", to_json(influence_top_pairs(m, 5, 5)));
    std::vector<std::optional<double>> mean_influence(m.mean_influence.begin(),
                                                      m.mean_influence.end());
    s["influence.pearson_standalone_gap_vs_mean_influence"] = correlate(mean_influence);
    if (most_biased) {
      std::size_t rank = 0;
      for (double v : m.mean_influence) rank += v < m.mean_influence[*most_biased];
      s["influence.most_biased_party"] = static_cast<double>(*most_biased);
      s["influence.most_biased_rank"] = static_cast<double>(rank);
      s["influence.most_biased_mean_influence"] = m.mean_influence[*most_biased];
    }
    s["influence.undefined_evaluations"] = static_cast<double>(m.undefined_evaluations);
  }

  if (a.dynamics) {
    std::vector<DynamicsSeries> series(parties.size());
    parallel_for(parties.size(), Execution::kParallel, [&](std::size_t k) {
      series[k] = fairness_dynamics(memory, parties[k], k, a.metric, a.min_cell);
    });
    for (std::size_t k = 0; k < parties.size(); ++k) {
      write_dynamics_csv(out / ("dynamics_" + std::to_string(k) + ".csv"), series[k]);
    }
    if (most_biased) {
      s["dynamics.most_biased.mean_local_minus_global"] =
          mean_local_minus_global(series[*most_biased]);
    }
    if (least_biased) {
      s["dynamics.least_biased.mean_local_minus_global"] =
          mean_local_minus_global(series[*least_biased]);
    }
  }

  if (a.attribution) {
    for (const auto& [name, model] :
         {std::pair<std::string, const MlpModel*>{kFederatedModel, &federated},
          std::pair<std::string, const MlpModel*>{kCentralizedModel, &centralized}}) {
      double abs_sum = 0.0;
      double residual = 0.0;
      for (std::size_t k = 0; k < parties.size(); ++k) {
        const auto summary = group_attribution_summary(*model, parties[k], a.attribution_steps);
        write_json(out / ("attribution_" + name + "_" + std::to_string(k) + ".json"),
                   to_json(summary));
        abs_sum += summary.mean_abs_sensitive;
        residual = std::max(residual, summary.max_abs_residual);
      }
      s["attribution." + name + ".mean_abs_sensitive"] =
          abs_sum / static_cast<double>(parties.size());
      s["attribution." + name + ".max_abs_residual"] = residual;
    }
  }

  if (a.norms) {
    auto rows = norms_over_traces(memory, schema, 1);
    write_norms_csv(out / "norms.csv", rows);
    s["norms.federated"] = sensitive_param_norm(federated, schema);
    s["norms.centralized"] = sensitive_param_norm(centralized, schema);
    double mean = 0.0;
    for (const auto& m : standalone) mean += sensitive_param_norm(m, schema);
    s["norms.standalone_mean"] = mean / static_cast<double>(standalone.size());
  }

  if (a.sweeps) {
    for (ScaleTarget target : {ScaleTarget::kSensitive, ScaleTarget::kOther}) {
      const auto sweep = scaling_sweep(federated, parties, a.sweep_factors, target, a.min_cell);
      write_sweep_csv(out / ("sweep_" + to_string(target) + ".csv"), sweep);
      for (const auto& pt : sweep.points) {
        const std::string key = "sweep." + to_string(target) + ".x" + short_number(pt.factor);
        s[key + ".mean_accuracy"] = pt.mean_accuracy;
        s[key + ".mean_dp"] = pt.mean_dp;
        s[key + ".mean_eo"] = pt.mean_eo;
      }
    }
  }

  if (a.reweigh && !config.reweigh_scopes.empty()) {
    json doc = json::object();
    const auto [plain_gap, plain_acc] = network_mean(federated, parties, a.metric, a.min_cell);
    doc["plain"] = {{"mean_gap", optional_json(plain_gap)}, {"mean_accuracy", plain_acc}};
    s["reweigh.plain.mean_" + mname] = plain_gap;
    s["reweigh.plain.mean_accuracy"] = plain_acc;
    for (ReweighScope scope : config.reweigh_scopes) {
      std::vector<std::string> notices;
      reweigh_sample_weights(parties, scope, &notices);
      const auto [gap, acc] = network_mean(run.read_model(reweighed_model_name(scope)), parties,
                                           a.metric, a.min_cell);
      doc[to_string(scope)] = {
          {"mean_gap", optional_json(gap)}, {"mean_accuracy", acc}, {"notices", notices}};
      s["reweigh." + to_string(scope) + ".mean_" + mname] = gap;
      s["reweigh." + to_string(scope) + ".mean_accuracy"] = acc;
    }
    doc["metric"] = mname;
    write_json(out / "reweigh.json", doc);
  }
  return s;
}

}  // namespace

ExperimentConfig parse_config(const json& doc) {
  ObjectReader r(doc, "");
  ExperimentConfig c;

  const json* data = r.get("data");
  if (!data) ObjectReader::fail("data", "is required");
  {
    ObjectReader dr(*data, "data");
    if (dr.has("synthetic") == dr.has("csv")) {
      ObjectReader::fail("data", "exactly one of 'synthetic' or 'csv' is required");
    }
    if (const json* syn = dr.get("synthetic")) c.data.synthetic = parse_synthetic(*syn, "data.synthetic");
    if (const json* csv = dr.get("csv")) c.data.csv = parse_csv_source(*csv, "data.csv");
    dr.finish();
  }

  if (const json* part = r.get("partition")) {
    if (c.data.synthetic) {
      ObjectReader::fail("partition", "only applies to csv data; synthetic data is per party");
    }
    ObjectReader pr(*part, "partition");
    const std::string mode = pr.text("mode", to_string(c.partition.mode));
    validate_at("partition.mode", [&] { c.partition.mode = parse_partition_mode(mode); });
    c.partition.num_parties = pr.count("num_parties", c.partition.num_parties);
    c.partition.minority_ratio = pr.number("minority_ratio", c.partition.minority_ratio);
    pr.finish();
    validate_at("partition", [&] { c.partition.validate(); });
  } else if (c.data.csv) {
    ObjectReader::fail("partition", "is required for csv data");
  }

  if (const json* tr = r.get("training")) c.training = parse_training(*tr, "training");

  if (const json* var = r.get("variants")) {
    ObjectReader vr(*var, "variants");
    for (const auto& name : vr.strings("reweigh")) {
      ReweighScope scope{};
      validate_at("variants.reweigh", [&] { scope = parse_reweigh_scope(name); });
      if (std::find(c.reweigh_scopes.begin(), c.reweigh_scopes.end(), scope) ==
          c.reweigh_scopes.end()) {
        c.reweigh_scopes.push_back(scope);
      }
    }
    if (vr.has("fedprox_mu")) {
      const double mu = vr.number("fedprox_mu", 0.0);
      if (!(mu > 0.0)) ObjectReader::fail("variants.fedprox_mu", "must be > 0");
      c.fedprox_mu = mu;
    }
    vr.finish();
  }

  if (const json* seeds = r.get("seeds")) {
    if (!seeds->is_array() || seeds->empty()) {
      ObjectReader::fail("seeds", "expected a non-empty array of integers");
    }
    c.seeds.clear();
    for (std::size_t i = 0; i < seeds->size(); ++i) {
      c.seeds.push_back(ObjectReader::as_count((*seeds)[i], "seeds[" + std::to_string(i) + "]"));
    }
  }
  std::set<std::uint64_t> unique(c.seeds.begin(), c.seeds.end());
  if (unique.size() != c.seeds.size()) ObjectReader::fail("seeds", "contains duplicates");

  if (const json* audit = r.get("audit")) c.audit = parse_audit(*audit, "audit");
  c.output = r.text("output", c.output.string());
  r.finish();
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFound("cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  ExperimentConfig c = parse_config(doc);
  // Relative CSV paths are read relative to the config file.
  if (c.data.csv && c.data.csv->path.is_relative()) {
    c.data.csv->path = path.parent_path() / c.data.csv->path;
  }
  return c;
}

json canonical_run_json(const ExperimentConfig& c) {
  json data;
  if (c.data.synthetic) {
    const auto& s = *c.data.synthetic;
    data["synthetic"] = {{"num_numeric", s.num_numeric},
                         {"num_parties", s.num_parties},
                         {"n_train", s.n_train},
                         {"n_test", s.n_test},
                         {"bias_levels", s.bias_levels},
                         {"group1_fraction", s.group1_fraction},
                         {"signal_scale", s.signal_scale},
                         {"intercept", s.intercept}};
  } else {
    const auto& s = *c.data.csv;
    json spec = {{"path", s.path.generic_string()},
                 {"label_column", s.spec.label_column},
                 {"sensitive_column", s.spec.sensitive_column},
                 {"sensitive_levels", s.spec.sensitive_levels},
                 {"features", s.spec.features},
                 {"categorical", s.spec.categorical},
                 {"test_fraction", s.test_fraction}};
    spec["positive_label"] = s.spec.positive_label ? json(*s.spec.positive_label) : json(nullptr);
    data["csv"] = spec;
  }
  json doc = {{"data", data},
              {"training",
               {{"rounds", c.training.rounds},
                {"local_epochs", c.training.local_epochs},
                {"batch_size", c.training.batch_size},
                {"lr", c.training.lr},
                {"centralized_lr", c.training.centralized_lr},
                {"fedprox_mu", c.training.fedprox_mu},
                {"hidden_width", c.training.hidden_width}}}};
  if (c.data.csv) {
    doc["partition"] = {{"mode", to_string(c.partition.mode)},
                        {"num_parties", c.partition.num_parties},
                        {"minority_ratio", c.partition.minority_ratio}};
  }
  json scopes = json::array();
  for (ReweighScope s : c.reweigh_scopes) scopes.push_back(to_string(s));
  doc["variants"] = {{"reweigh", scopes},
                     {"fedprox_mu", c.fedprox_mu ? json(*c.fedprox_mu) : json(nullptr)}};
  return doc;
}

std::string config_hash(const ExperimentConfig& config) {
  // nlohmann::json keeps object keys sorted, so dump() is canonical.
  return sha256(canonical_run_json(config).dump());
}

fs::path run_directory(const ExperimentConfig& config, std::uint64_t seed) {
  return config.output / "runs" / (config_hash(config).substr(0, 16) + "_seed" +
                                   std::to_string(seed));
}

fs::path report_directory(const ExperimentConfig& config) {
  return config.output / "report" / config_hash(config).substr(0, 16);
}

std::vector<PartyDataset> build_parties(const ExperimentConfig& config, std::uint64_t seed) {
  if (config.data.synthetic) {
    SyntheticConfig s = *config.data.synthetic;
    s.seed = seed;
    return generate_synthetic(s).parties;
  }
  if (!config.data.csv) throw ConfigError("data: no source configured");
  const CsvSource& src = *config.data.csv;
  LoadedTable table = load_csv(src.path, src.spec);
  auto schema = std::make_shared<const FeatureSchema>(std::move(table.schema));
  PartitionSpec spec = config.partition;
  spec.seed = seed;
  auto parties = partition(table.data, spec, schema);
  for (std::size_t k = 0; k < parties.size(); ++k) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(k), 0x7e57u};
    std::array<std::uint32_t, 2> words{};
    seq.generate(words.begin(), words.end());
    const std::uint64_t split_seed = (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
    auto [train, test] = train_test_split(parties[k].train, src.test_fraction, split_seed);
    parties[k].train = std::move(train);
    parties[k].test = std::move(test);
  }
  return parties;
}

std::string reweighed_model_name(ReweighScope scope) { return "reweighed_" + to_string(scope); }

std::vector<fs::path> cmd_run(const ExperimentConfig& config, const CommandOptions& options) {
  log("config " + config_hash(config).substr(0, 16) + ": " + std::to_string(config.seeds.size()) +
      " seed(s)");
  parallel_for(config.seeds.size(), seed_execution(options),
               [&](std::size_t i) { train_seed(config, config.seeds[i]); });
  std::vector<fs::path> dirs;
  for (auto seed : config.seeds) dirs.push_back(run_directory(config, seed));
  return dirs;
}

json seed_statistics(const std::vector<std::optional<double>>& values) {
  json per_seed = json::array();
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& v : values) {
    per_seed.push_back(optional_json(v));
    if (v) {
      sum += *v;
      ++n;
    }
  }
  json out = {{"per_seed", per_seed}, {"n", n}};
  if (n == 0) {
    out["mean"] = nullptr;
    out["stdev"] = nullptr;
    return out;
  }
  const double mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (const auto& v : values) {
    if (v) ss += (*v - mean) * (*v - mean);
  }
  out["mean"] = mean;
  out["stdev"] = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
  return out;
}

fs::path cmd_audit(const ExperimentConfig& config, const CommandOptions& options) {
  std::vector<Scalars> per_seed(config.seeds.size());
  parallel_for(config.seeds.size(), seed_execution(options),
               [&](std::size_t i) { per_seed[i] = audit_seed(config, config.seeds[i]); });

  std::set<std::string> keys;
  for (const auto& s : per_seed) {
    for (const auto& [k, v] : s) keys.insert(k);
  }
  json entries = json::object();
  for (const auto& key : keys) {
    std::vector<std::optional<double>> values;
    for (const auto& s : per_seed) {
      auto it = s.find(key);
      values.push_back(it == s.end() ? std::nullopt : it->second);
    }
    entries[key] = seed_statistics(values);
  }
  json summary = {{"config_hash", config_hash(config)},
                  {"seeds", config.seeds},
                  {"metric", to_string(config.audit.metric)},
                  {"min_cell", config.audit.min_cell},
                  {"stride", config.audit.stride},
                  {"entries", entries}};
  const fs::path dir = report_directory(config);
  make_dirs(dir);
  const fs::path path = dir / "summary.json";
  write_json(path, summary);
  log("summary written to " + path.string());
  return path;
}

std::vector<fs::path> cmd_generate(const ExperimentConfig& config) {
  std::vector<fs::path> dirs;
  for (auto seed : config.seeds) {
    const fs::path dir = config.output / "data" / ("seed_" + std::to_string(seed));
    make_dirs(dir);
    const auto parties = build_parties(config, seed);
    for (const auto& p : parties) {
      write_party_csv(dir / ("party_" + std::to_string(p.party_id) + ".csv"), p);
    }
    write_json(dir / "manifest.json", dataset_manifest(parties));
    log("seed " + std::to_string(seed) + ": wrote " + std::to_string(parties.size()) +
        " party files to " + dir.string());
    dirs.push_back(dir);
  }
  return dirs;
}

std::vector<fs::path> cmd_sweep(const ExperimentConfig& config, const CommandOptions& options) {
  std::vector<std::vector<fs::path>> written(config.seeds.size());
  parallel_for(config.seeds.size(), seed_execution(options), [&](std::size_t i) {
    const auto seed = config.seeds[i];
    RunDirectory run(run_directory(config, seed));
    if (!run.has_model(kFederatedModel)) {
      throw NotFound("missing " + run.model_path(kFederatedModel).string());
    }
    const MlpModel model = run.read_model(kFederatedModel);
    const auto parties = build_parties(config, seed);
    const fs::path out = report_directory(config) / ("seed_" + std::to_string(seed));
    make_dirs(out);
    for (ScaleTarget target : {ScaleTarget::kSensitive, ScaleTarget::kOther}) {
      const auto sweep = scaling_sweep(model, parties, config.audit.sweep_factors, target,
                                       config.audit.min_cell);
      const fs::path path = out / ("sweep_" + to_string(target) + ".csv");
      write_sweep_csv(path, sweep);
      written[i].push_back(path);
    }
    log("seed " + std::to_string(seed) + ": sweeps written to " + out.string());
  });
  std::vector<fs::path> all;
  for (auto& w : written) all.insert(all.end(), w.begin(), w.end());
  return all;
}

}  // namespace fedbias
