#include "dbm/experiment.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "dbm/checkpoint.hpp"
#include "dbm/error.hpp"

namespace dbm {

using nlohmann::json;

namespace {

[[noreturn]] void invalid(const std::string& what) { throw Error(ErrorKind::InvalidConfig, what); }

void reject_unknown(const json& j, const std::string& section, std::initializer_list<const char*> known) {
  if (!j.is_object()) invalid("'" + section + "' must be an object");
  const std::set<std::string> allowed(known.begin(), known.end());
  for (const auto& [key, _] : j.items()) {
    if (!allowed.contains(key)) invalid("unknown key '" + section + "." + key + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& section) {
  if (!j.contains(key) || j.at(key).is_null()) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    invalid("bad value for '" + section + "." + key + "'");
  }
}

template <typename T>
void read_optional(const json& j, const char* key, std::optional<T>& out, const std::string& section) {
  if (!j.contains(key) || j.at(key).is_null()) return;
  T value{};
  read(j, key, value, section);
  out = value;
}

template <typename T>
json optional_json(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  ExperimentConfig cfg;
  reject_unknown(j, "config", {"label", "data", "model", "loss", "train", "groups", "output", "sweep"});
  read(j, "label", cfg.label, "config");

  if (j.contains("data")) {
    const json& d = j.at("data");
    reject_unknown(d, "data", {"classes", "input_dim", "n_max", "imbalance", "intra_std", "center_norm",
                               "test_per_class", "seed", "train_path", "test_path"});
    GenConfig& g = cfg.data.gen;
    read(d, "classes", g.classes, "data");
    read(d, "input_dim", g.input_dim, "data");
    read(d, "n_max", g.n_max, "data");
    read(d, "imbalance", g.imbalance, "data");
    read(d, "intra_std", g.intra_std, "data");
    read(d, "center_norm", g.center_norm, "data");
    read(d, "test_per_class", g.test_per_class, "data");
    read(d, "seed", g.seed, "data");
    read_optional(d, "train_path", cfg.data.train_path, "data");
    read_optional(d, "test_path", cfg.data.test_path, "data");
  }

  if (j.contains("model")) {
    const json& m = j.at("model");
    reject_unknown(m, "model", {"hidden", "head"});
    read(m, "hidden", cfg.hidden, "model");
    std::string head = to_string(cfg.head);
    read(m, "head", head, "model");
    cfg.head = parse_head_kind(head);
  }

  std::string kind = "ce";
  json loss = json::object();
  if (j.contains("loss")) loss = j.at("loss");
  reject_unknown(loss, "loss", {"kind", "K", "tau", "scale", "application", "gradient", "beta", "m"});
  read(loss, "kind", kind, "loss");
  LossSpec& spec = cfg.train.loss;
  spec = LossSpec::from_name(kind);
  read(loss, "K", spec.margin.K, "loss");
  read(loss, "tau", spec.margin.tau, "loss");
  read(loss, "scale", spec.margin.scale, "loss");
  read(loss, "beta", spec.beta, "loss");
  read(loss, "m", spec.baseline.m, "loss");
  std::string application = to_string(spec.margin.application);
  std::string gradient = to_string(spec.margin.gradient);
  read(loss, "application", application, "loss");
  read(loss, "gradient", gradient, "loss");
  spec.margin.application = parse_margin_application(application);
  spec.margin.gradient = parse_margin_gradient(gradient);

  if (j.contains("train")) {
    const json& t = j.at("train");
    reject_unknown(t, "train", {"epochs", "batch_size", "lr", "momentum", "weight_decay", "warmup_epochs",
                                "drw_epoch", "seed"});
    TrainConfig& tc = cfg.train;
    read(t, "epochs", tc.epochs, "train");
    read(t, "batch_size", tc.batch_size, "train");
    read(t, "lr", tc.lr0, "train");
    read(t, "momentum", tc.momentum, "train");
    read(t, "weight_decay", tc.weight_decay, "train");
    read(t, "warmup_epochs", tc.warmup_epochs, "train");
    read_optional(t, "drw_epoch", tc.drw_epoch, "train");
    read(t, "seed", tc.seed, "train");
  }

  if (j.contains("groups")) {
    const json& g = j.at("groups");
    reject_unknown(g, "groups", {"mode", "many_min", "few_max"});
    std::string mode = "absolute";
    read(g, "mode", mode, "groups");
    if (mode == "absolute") {
      cfg.group_mode = GroupMode::Absolute;
    } else if (mode == "tercile") {
      cfg.group_mode = GroupMode::Tercile;
    } else {
      invalid("groups.mode must be 'absolute' or 'tercile'");
    }
    read(g, "many_min", cfg.groups.many_min, "groups");
    read(g, "few_max", cfg.groups.few_max, "groups");
  }

  if (j.contains("output")) {
    const json& o = j.at("output");
    reject_unknown(o, "output", {"dir"});
    read(o, "dir", cfg.output_dir, "output");
  }
  cfg.validate();
  return cfg;
}

json ExperimentConfig::to_json() const {
  const GenConfig& g = data.gen;
  const LossSpec& spec = train.loss;
  json loss = {
      {"kind", spec.name()},
      {"K", spec.margin.K},
      {"tau", spec.margin.tau},
      {"scale", spec.margin.scale},
      {"application", to_string(spec.margin.application)},
      {"gradient", to_string(spec.margin.gradient)},
      {"beta", spec.beta},
      {"m", spec.baseline.m},
  };
  return {
      {"label", label},
      {"data",
       {{"classes", g.classes},
        {"input_dim", g.input_dim},
        {"n_max", g.n_max},
        {"imbalance", g.imbalance},
        {"intra_std", g.intra_std},
        {"center_norm", g.center_norm},
        {"test_per_class", g.test_per_class},
        {"seed", g.seed},
        {"train_path", optional_json(data.train_path)},
        {"test_path", optional_json(data.test_path)}}},
      {"model", {{"hidden", hidden}, {"head", dbm::to_string(head)}}},
      {"loss", std::move(loss)},
      {"train",
       {{"epochs", train.epochs},
        {"batch_size", train.batch_size},
        {"lr", train.lr0},
        {"momentum", train.momentum},
        {"weight_decay", train.weight_decay},
        {"warmup_epochs", train.warmup_epochs},
        {"drw_epoch", optional_json(train.drw_epoch)},
        {"seed", train.seed}}},
      {"groups",
       {{"mode", group_mode == GroupMode::Absolute ? "absolute" : "tercile"},
        {"many_min", groups.many_min},
        {"few_max", groups.few_max}}},
      {"output", {{"dir", output_dir}}},
  };
}

std::string ExperimentConfig::hash() const {
  json canonical = to_json();
  canonical.erase("label");
  canonical.erase("output");
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a(canonical.dump())));
  return buf;
}

void ExperimentConfig::validate() const {
  data.gen.validate();
  ModelDims{data.gen.input_dim, hidden, data.gen.classes, head}.validate();
  train.validate();
  groups.validate();
  if (head == HeadKind::Linear && train.loss.positive != PositiveMargin::None) {
    invalid("loss '" + train.loss.name() + "' needs a cosine head");
  }
}

void ExperimentConfig::set_seed(std::uint64_t seed) {
  data.gen.seed = seed;
  train.seed = seed;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::InvalidConfig, path.string() + ": " + e.what());
  }
  return ExperimentConfig::from_json(j);
}

DatasetSplit load_or_generate(const DataSource& source) {
  if (!source.train_path) return generate(source.gen);
  DatasetSplit split;
  split.train = load_dataset(*source.train_path);
  if (source.test_path) split.test = load_dataset(*source.test_path);
  return split;
}

GroupThresholds resolve_thresholds(const ExperimentConfig& cfg, const std::vector<long>& train_counts) {
  return cfg.group_mode == GroupMode::Tercile ? GroupThresholds::terciles(train_counts) : cfg.groups;
}

EvalMetrics evaluate(const ModelParams& model, const LabeledDataset& data, const std::vector<long>& train_counts,
                     const GroupThresholds& thresholds) {
  data.validate();
  if (data.input_dim() != model.dims.input || data.num_classes() != model.dims.classes ||
      static_cast<int>(train_counts.size()) != model.dims.classes) {
    throw Error(ErrorKind::ShapeMismatch, "dataset dimensions do not match the model");
  }
  const std::vector<int> pred = predict(forward(model, data.features).scores);
  EvalMetrics m;
  m.thresholds = thresholds;
  m.accuracy = group_accuracy(pred, data.labels, train_counts, thresholds);
  const auto C = static_cast<std::size_t>(model.dims.classes);
  m.confusion.assign(C, std::vector<long>(C, 0));
  for (std::size_t i = 0; i < pred.size(); ++i) {
    ++m.confusion[static_cast<std::size_t>(data.labels[i])][static_cast<std::size_t>(pred[i])];
  }
  return m;
}

AnalysisReport analyze(const ModelParams& model, const LabeledDataset& data, const std::vector<long>& train_counts,
                       const GroupThresholds& thresholds, std::string split) {
  const EvalMetrics metrics = evaluate(model, data, train_counts, thresholds);
  const ForwardResult fwd = forward(model, data.features);
  AnalysisReport r;
  r.split = std::move(split);
  r.thresholds = thresholds;
  r.accuracy = metrics.accuracy;
  r.train_counts = train_counts;
  const bool cosine = model.dims.head == HeadKind::Cosine;
  if (cosine) {
    r.angular = angular_stats(fwd.features, data.labels, model.head_weights, train_counts, thresholds);
  }
  const Matrix features = cosine ? normalize_rows(fwd.features) : fwd.features;
  r.separability = class_separability(features, data.labels, model.dims.classes, train_counts, thresholds);
  return r;
}

RunResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  RunResult run;
  run.config = cfg;
  run.data = load_or_generate(cfg.data);
  const LabeledDataset& train_set = run.data.train;
  const ModelDims dims{static_cast<int>(train_set.input_dim()), cfg.hidden, train_set.num_classes(), cfg.head};
  const bool has_test = run.data.test.size() > 0;
  run.trained = train(init_model(dims, cfg.train.seed), train_set, cfg.train, has_test ? &run.data.test : nullptr);
  run.thresholds = resolve_thresholds(cfg, train_set.class_counts);
  if (has_test) run.test_metrics = evaluate(run.trained.model, run.data.test, train_set.class_counts, run.thresholds);
  return run;
}

// ---------------------------------------------------------------------------
// Serialization

std::string format_fixed(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

namespace {

json thresholds_json(const GroupThresholds& t) { return {{"many_min", t.many_min}, {"few_max", t.few_max}}; }

json summary_json(const std::optional<DistributionSummary>& s) {
  if (!s) return nullptr;
  return {{"mean", s->mean}, {"q1", s->q1}, {"median", s->median}, {"q3", s->q3}, {"count", s->count}};
}

std::string csv_optional(const std::optional<double>& v) { return v ? format_fixed(*v) : ""; }

}  // namespace

json to_json(const GroupAccuracy& acc) {
  json per_class = json::array();
  for (const auto& v : acc.per_class) per_class.push_back(optional_json(v));
  return {
      {"all", optional_json(acc.all)},
      {"many", optional_json(acc.many)},
      {"medium", optional_json(acc.medium)},
      {"few", optional_json(acc.few)},
      {"group_samples", {{"many", acc.group_samples[0]}, {"medium", acc.group_samples[1]}, {"few", acc.group_samples[2]}}},
      {"per_class", std::move(per_class)},
  };
}

json to_json(const EvalMetrics& m) {
  return {{"thresholds", thresholds_json(m.thresholds)}, {"accuracy", to_json(m.accuracy)}, {"confusion", m.confusion}};
}

json to_json(const AnalysisReport& r) {
  json angular = nullptr;
  if (r.angular) {
    json per_class = json::array();
    for (const auto& v : r.angular->per_class_mean) per_class.push_back(optional_json(v));
    angular = {{"unit", "degrees"},
               {"many", summary_json(r.angular->many)},
               {"medium", summary_json(r.angular->medium)},
               {"few", summary_json(r.angular->few)},
               {"all", summary_json(r.angular->all)},
               {"per_class_mean", std::move(per_class)}};
  }
  return {
      {"split", r.split},
      {"thresholds", thresholds_json(r.thresholds)},
      {"train_counts", r.train_counts},
      {"accuracy", to_json(r.accuracy)},
      {"angular", std::move(angular)},
      {"separability",
       {{"features", r.angular ? "unit-normalized" : "raw"},
        {"per_class", r.separability.per_class},
        {"many", optional_json(r.separability.many)},
        {"medium", optional_json(r.separability.medium)},
        {"few", optional_json(r.separability.few)},
        {"all", optional_json(r.separability.all)}}},
  };
}

std::string analysis_csv(const AnalysisReport& r) {
  std::ostringstream out;
  out << "class,train_count,group,accuracy,mean_theta_deg,separability\n";
  for (std::size_t c = 0; c < r.train_counts.size(); ++c) {
    out << c << ',' << r.train_counts[c] << ',' << to_string(r.thresholds.group_of(r.train_counts[c])) << ','
        << csv_optional(r.accuracy.per_class[c]) << ','
        << (r.angular ? csv_optional(r.angular->per_class_mean[c]) : "") << ','
        << format_fixed(r.separability.per_class[c]) << '\n';
  }
  return out.str();
}

std::string epoch_log_csv(const std::vector<EpochLog>& log) {
  std::ostringstream out;
  out << "epoch,mean_loss,lr,hard_positive_fraction,heldout_accuracy\n";
  for (const auto& e : log) {
    out << e.epoch << ',' << format_fixed(e.mean_loss) << ',' << format_fixed(e.lr) << ','
        << format_fixed(e.hard_positive_fraction) << ',' << csv_optional(e.heldout_accuracy) << '\n';
  }
  return out.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

void write_run_outputs(const RunResult& run, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create " + dir.string() + ": " + ec.message());

  save_checkpoint({run.trained.model, run.data.train.class_counts, run.config.to_json()}, dir / "checkpoint.json");
  write_text(dir / "epochs.csv", epoch_log_csv(run.trained.log));

  json final_metrics = {{"epochs", run.trained.log.size()}};
  if (!run.trained.log.empty()) final_metrics["final_train_loss"] = run.trained.log.back().mean_loss;
  if (run.data.test.size() > 0) final_metrics["test"] = to_json(run.test_metrics);
  write_text(dir / "metrics.json", final_metrics.dump(2) + "\n");

  const json manifest = {
      {"label", run.config.label},
      {"config_hash", run.config.hash()},
      {"seed", run.config.train.seed},
      {"data_seed", run.config.data.gen.seed},
      {"software_version", kSoftwareVersion},
      {"config", run.config.to_json()},
      {"epoch_log", "epochs.csv"},
      {"checkpoint", "checkpoint.json"},
      {"metrics", "metrics.json"},
      {"final_metrics", final_metrics},
  };
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Sweeps

namespace {

struct VariantParts {
  std::string prefix;  // "", linear, cosine, mc, mi-p, mi-hp
  std::string base;    // ce, cb, bs
};

std::optional<VariantParts> split_variant(const std::string& name) {
  for (const char* prefix : {"linear-", "cosine-", "mc-", "mi-p-", "mi-hp-"}) {
    const std::string p(prefix);
    if (name.rfind(p, 0) == 0) {
      const std::string base = name.substr(p.size());
      if (base != "ce" && base != "cb" && base != "bs") invalid("unknown variant base in '" + name + "'");
      return VariantParts{p.substr(0, p.size() - 1), base};
    }
  }
  return std::nullopt;
}

}  // namespace

bool variant_uses_dbm(const std::string& variant) {
  for (const char* prefix : {"dbm-", "mc-", "mi-p-", "mi-hp-"}) {
    if (variant.rfind(prefix, 0) == 0) return true;
  }
  return false;
}

ExperimentConfig apply_variant(const ExperimentConfig& base, const std::string& variant) {
  ExperimentConfig cfg = base;
  const MarginConfig margin = base.train.loss.margin;
  const double beta = base.train.loss.beta;
  const double m = base.train.loss.baseline.m;
  const auto parts = split_variant(variant);
  if (!parts) {
    cfg.train.loss = LossSpec::from_name(variant);
    cfg.train.loss.margin = margin;
    cfg.train.loss.beta = beta;
    if (base.train.loss.positive == PositiveMargin::Baseline) cfg.train.loss.baseline.m = m;
    cfg.head = HeadKind::Cosine;
  } else if (parts->prefix == "linear" || parts->prefix == "cosine") {
    cfg.train.loss = LossSpec::from_name(parts->base);
    cfg.train.loss.margin = margin;
    cfg.train.loss.beta = beta;
    cfg.head = parts->prefix == "linear" ? HeadKind::Linear : HeadKind::Cosine;
  } else {
    cfg.train.loss = LossSpec::from_name("dbm-" + parts->base);
    cfg.train.loss.margin = margin;
    cfg.train.loss.beta = beta;
    cfg.train.loss.margin.application = parts->prefix == "mc"     ? MarginApplication::None
                                        : parts->prefix == "mi-p" ? MarginApplication::AllPositives
                                                                  : MarginApplication::HardPositivesOnly;
    cfg.head = HeadKind::Cosine;
  }
  cfg.label = variant;
  cfg.validate();
  return cfg;
}

SweepAxes SweepAxes::from_json(const json& j) {
  reject_unknown(j, "sweep", {"losses", "seeds", "K", "tau"});
  SweepAxes axes;
  read(j, "losses", axes.losses, "sweep");
  read(j, "seeds", axes.seeds, "sweep");
  read(j, "K", axes.K, "sweep");
  read(j, "tau", axes.tau, "sweep");
  if (axes.losses.empty()) invalid("sweep.losses must list at least one loss");
  for (double k : axes.K) if (!(k >= 0.0)) invalid("sweep.K values must be >= 0");
  for (double t : axes.tau) if (!(t >= 0.0)) invalid("sweep.tau values must be >= 0");
  return axes;
}

std::vector<SweepRow> run_sweep(const ExperimentConfig& base, const SweepAxes& axes, int threads, bool with_analysis) {
  struct Job {
    ExperimentConfig cfg;
    SweepRow row;
  };
  std::vector<Job> jobs;
  const std::vector<std::uint64_t> seeds = axes.seeds.empty() ? std::vector{base.train.seed} : axes.seeds;
  for (const auto& variant : axes.losses) {
    const bool dbm = variant_uses_dbm(variant);
    const std::vector<std::optional<double>> Ks =
        dbm && !axes.K.empty() ? std::vector<std::optional<double>>(axes.K.begin(), axes.K.end())
                               : std::vector<std::optional<double>>{std::nullopt};
    const std::vector<std::optional<double>> taus =
        dbm && !axes.tau.empty() ? std::vector<std::optional<double>>(axes.tau.begin(), axes.tau.end())
                                 : std::vector<std::optional<double>>{std::nullopt};
    for (const auto& K : Ks) {
      for (const auto& tau : taus) {
        for (std::uint64_t seed : seeds) {
          Job job;
          job.row.variant = variant;
          job.row.K = dbm ? std::optional(K.value_or(base.train.loss.margin.K)) : std::nullopt;
          job.row.tau = dbm ? std::optional(tau.value_or(base.train.loss.margin.tau)) : std::nullopt;
          job.row.seed = seed;
          try {
            job.cfg = apply_variant(base, variant);
            if (K) job.cfg.train.loss.margin.K = *K;
            if (tau) job.cfg.train.loss.margin.tau = *tau;
            job.cfg.set_seed(seed);
            job.cfg.validate();
          } catch (const std::exception& e) {
            job.row.status = std::string("error: ") + e.what();
          }
          jobs.push_back(std::move(job));
        }
      }
    }
  }

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      Job& job = jobs[i];
      if (job.row.status != "ok") continue;
      try {
        const RunResult run = run_experiment(job.cfg);
        job.row.accuracy = run.test_metrics.accuracy;
        for (const auto& e : run.trained.log) job.row.epoch_losses.push_back(e.mean_loss);
        if (with_analysis && run.data.test.size() > 0) {
          const AnalysisReport report =
              analyze(run.trained.model, run.data.test, run.data.train.class_counts, run.thresholds, "test");
          if (report.angular && report.angular->all) job.row.mean_angle_deg = report.angular->all->mean;
          job.row.mean_separability = report.separability.all;
        }
      } catch (const std::exception& e) {
        job.row.status = std::string("error: ") + e.what();
      }
    }
  };
  const int workers = std::max(1, std::min<int>(threads, static_cast<int>(jobs.size())));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
  }

  std::vector<SweepRow> rows;
  rows.reserve(jobs.size());
  for (auto& job : jobs) rows.push_back(std::move(job.row));
  return rows;
}

namespace {

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string sweep_rows_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out << "variant,K,tau,seed,status,all,many,medium,few,final_loss,mean_theta_deg,separability\n";
  for (const auto& r : rows) {
    out << r.variant << ',' << csv_optional(r.K) << ',' << csv_optional(r.tau) << ',' << r.seed << ','
        << csv_escape(r.status) << ',' << csv_optional(r.accuracy.all) << ',' << csv_optional(r.accuracy.many) << ','
        << csv_optional(r.accuracy.medium) << ',' << csv_optional(r.accuracy.few) << ','
        << (r.epoch_losses.empty() ? "" : format_fixed(r.epoch_losses.back())) << ','
        << csv_optional(r.mean_angle_deg) << ',' << csv_optional(r.mean_separability) << '\n';
  }
  return out.str();
}

std::string sweep_aggregate_csv(const std::vector<SweepRow>& rows) {
  struct Acc {
    std::vector<double> all, many, medium, few;
    int failures = 0;
  };
  std::vector<std::string> order;
  std::map<std::string, Acc> groups;
  for (const auto& r : rows) {
    const std::string key = r.variant + "," + csv_optional(r.K) + "," + csv_optional(r.tau);
    if (!groups.contains(key)) order.push_back(key);
    Acc& acc = groups[key];
    if (r.status != "ok") {
      ++acc.failures;
      continue;
    }
    if (r.accuracy.all) acc.all.push_back(*r.accuracy.all);
    if (r.accuracy.many) acc.many.push_back(*r.accuracy.many);
    if (r.accuracy.medium) acc.medium.push_back(*r.accuracy.medium);
    if (r.accuracy.few) acc.few.push_back(*r.accuracy.few);
  }
  auto stats = [](const std::vector<double>& v) -> std::string {
    if (v.empty()) return ",";
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    const double sd = v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1)) : 0.0;
    return format_fixed(mean) + "," + format_fixed(sd);
  };
  std::ostringstream out;
  out << "variant,K,tau,runs,failures,all_mean,all_std,many_mean,many_std,medium_mean,medium_std,few_mean,few_std\n";
  for (const auto& key : order) {
    const Acc& acc = groups[key];
    out << key << ',' << acc.all.size() << ',' << acc.failures << ',' << stats(acc.all) << ',' << stats(acc.many)
        << ',' << stats(acc.medium) << ',' << stats(acc.few) << '\n';
  }
  return out.str();
}

}  // namespace dbm
