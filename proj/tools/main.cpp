// dbm: command-line front end for data generation, training, evaluation,
// analysis, gradient checking and sweeps.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dbm/checkpoint.hpp"
#include "dbm/error.hpp"
#include "dbm/experiment.hpp"
#include "dbm/gradcheck.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitGradcheck = 1;
constexpr int kExitValidation = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumeric = 4;

constexpr const char* kOutRootEnv = "DBM_OUT_ROOT";

int exit_code_for(dbm::ErrorKind kind) {
  using dbm::ErrorKind;
  switch (kind) {
    case ErrorKind::Io:
    case ErrorKind::ParseError:
    case ErrorKind::CountMismatch:
    case ErrorKind::LengthMismatch:
      return kExitIo;
    case ErrorKind::NonFiniteLoss:
    case ErrorKind::ZeroVector:
    case ErrorKind::SingularScatter:
    case ErrorKind::DegenerateVariance:
    case ErrorKind::CenterSamplingFailed:
      return kExitNumeric;
    default:
      return kExitValidation;
  }
}

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  int threads = 1;
};

dbm::ExperimentConfig load_base(const Common& c) {
  dbm::ExperimentConfig cfg = c.config.empty() ? dbm::ExperimentConfig{} : dbm::load_config(c.config);
  if (c.seed) cfg.set_seed(*c.seed);
  cfg.validate();
  return cfg;
}

// --out, then the config's output dir, then $DBM_OUT_ROOT/<label>, then runs/<label>.
fs::path resolve_out(const Common& c, const dbm::ExperimentConfig& cfg) {
  if (!c.out.empty()) return c.out;
  if (!cfg.output_dir.empty()) return cfg.output_dir;
  const char* root = std::getenv(kOutRootEnv);
  return fs::path(root && *root ? root : "runs") / cfg.label;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw dbm::Error(dbm::ErrorKind::Io, "cannot create " + dir.string() + ": " + ec.message());
}

dbm::GroupThresholds thresholds_from(const Common& c, std::optional<long> many_min, std::optional<long> few_max,
                                     const std::vector<long>& train_counts) {
  dbm::GroupThresholds t;
  if (!c.config.empty()) t = dbm::resolve_thresholds(dbm::load_config(c.config), train_counts);
  if (many_min) t.many_min = *many_min;
  if (few_max) t.few_max = *few_max;
  t.validate();
  return t;
}

void add_common(CLI::App* app, Common& c, bool with_threads) {
  app->add_option("--config", c.config, "JSON experiment config (comments allowed)")->check(CLI::ExistingFile);
  app->add_option("--out", c.out, std::string("Output directory (default: config output.dir, else $") + kOutRootEnv +
                                      "/<label>, else runs/<label>)");
  app->add_option("--seed", c.seed, "Overrides data.seed and train.seed");
  if (with_threads) app->add_option("--threads", c.threads, "Worker threads")->check(CLI::PositiveNumber);
}

// gen-data ------------------------------------------------------------------

int cmd_gen_data(const Common& c, const std::string& format) {
  const dbm::ExperimentConfig cfg = load_base(c);
  const fs::path dir = resolve_out(c, cfg);
  ensure_dir(dir);

  const auto fmt = format == "csv" ? dbm::DatasetFormat::Csv : dbm::DatasetFormat::Binary;
  const std::string ext = format == "csv" ? ".csv" : ".bin";
  const dbm::DatasetSplit split = dbm::generate(cfg.data.gen);
  dbm::save_dataset(split.train, dir / ("train" + ext), fmt);
  dbm::save_dataset(split.test, dir / ("test" + ext), fmt);

  const auto& g = cfg.data.gen;
  const json provenance = {
      {"software_version", dbm::kSoftwareVersion},
      {"generator", "gaussian-blobs/exponential-profile"},
      {"gen",
       {{"classes", g.classes},
        {"input_dim", g.input_dim},
        {"n_max", g.n_max},
        {"imbalance", g.imbalance},
        {"intra_std", g.intra_std},
        {"center_norm", g.center_norm},
        {"test_per_class", g.test_per_class},
        {"seed", g.seed}}},
      {"format", format},
      {"train", {{"path", "train" + ext}, {"samples", split.train.size()}, {"class_counts", split.train.class_counts}}},
      {"test", {{"path", "test" + ext}, {"samples", split.test.size()}, {"class_counts", split.test.class_counts}}},
  };
  dbm::write_text(dir / "provenance.json", provenance.dump(2) + "\n");

  std::printf("%-6s %8s %8s\n", "class", "train", "test");
  for (int k = 0; k < split.train.num_classes(); ++k) {
    std::printf("%-6d %8ld %8ld\n", k, split.train.class_counts[k], split.test.class_counts[k]);
  }
  std::printf("%-6s %8ld %8ld\n", "total", static_cast<long>(split.train.size()), static_cast<long>(split.test.size()));
  std::printf("wrote %s\n", dir.string().c_str());
  return kExitOk;
}

// train ---------------------------------------------------------------------

int cmd_train(const Common& c, const std::string& train_path, const std::string& test_path) {
  dbm::ExperimentConfig cfg = load_base(c);
  if (!train_path.empty()) cfg.data.train_path = train_path;
  if (!test_path.empty()) cfg.data.test_path = test_path;
  if (cfg.data.test_path && !cfg.data.train_path) {
    throw dbm::Error(dbm::ErrorKind::InvalidConfig, "a test dataset requires a train dataset");
  }
  const fs::path dir = resolve_out(c, cfg);
  const dbm::RunResult run = dbm::run_experiment(cfg);
  dbm::write_run_outputs(run, dir);

  if (!run.trained.log.empty()) {
    std::printf("final train loss %s\n", dbm::format_fixed(run.trained.log.back().mean_loss).c_str());
  }
  if (const auto& all = run.test_metrics.accuracy.all) {
    const auto& a = run.test_metrics.accuracy;
    auto fmt = [](const std::optional<double>& v) { return v ? dbm::format_fixed(*v) : std::string("n/a"); };
    std::printf("test accuracy all %s many %s medium %s few %s\n", fmt(all).c_str(), fmt(a.many).c_str(),
                fmt(a.medium).c_str(), fmt(a.few).c_str());
  }
  std::printf("config hash %s\nwrote %s\n", cfg.hash().c_str(), dir.string().c_str());
  return kExitOk;
}

// eval ----------------------------------------------------------------------

int cmd_eval(const Common& c, const std::string& ckpt_path, const std::string& data_path,
             std::optional<long> many_min, std::optional<long> few_max) {
  const dbm::Checkpoint ckpt = dbm::load_checkpoint(ckpt_path);
  const dbm::LabeledDataset data = dbm::load_dataset(data_path);
  const dbm::GroupThresholds t = thresholds_from(c, many_min, few_max, ckpt.train_counts);
  const dbm::EvalMetrics m = dbm::evaluate(ckpt.model, data, ckpt.train_counts, t);

  json out = dbm::to_json(m);
  out["dataset"] = data_path;
  const std::string text = out.dump(2) + "\n";
  if (c.out.empty()) {
    std::fputs(text.c_str(), stdout);
  } else {
    const fs::path dir = c.out;
    ensure_dir(dir);
    dbm::write_text(dir / "eval.json", text);
    std::printf("wrote %s\n", (dir / "eval.json").string().c_str());
  }
  return kExitOk;
}

// analyze -------------------------------------------------------------------

int cmd_analyze(const Common& c, const std::string& ckpt_path, const std::string& train_path,
                const std::string& test_path, std::optional<long> many_min, std::optional<long> few_max) {
  if (train_path.empty() && test_path.empty()) {
    throw dbm::Error(dbm::ErrorKind::InvalidConfig, "analyze needs --train and/or --test");
  }
  const dbm::Checkpoint ckpt = dbm::load_checkpoint(ckpt_path);
  const dbm::GroupThresholds t = thresholds_from(c, many_min, few_max, ckpt.train_counts);

  fs::path dir = c.out;
  if (dir.empty()) dir = fs::path(ckpt_path).parent_path() / "analysis";
  ensure_dir(dir);

  for (const auto& [split, path] : {std::pair{std::string("train"), train_path}, std::pair{std::string("test"), test_path}}) {
    if (path.empty()) continue;
    const dbm::LabeledDataset data = dbm::load_dataset(path);
    const dbm::AnalysisReport r = dbm::analyze(ckpt.model, data, ckpt.train_counts, t, split);
    json j = dbm::to_json(r);
    j["dataset"] = path;
    dbm::write_text(dir / ("analysis_" + split + ".json"), j.dump(2) + "\n");
    dbm::write_text(dir / ("analysis_" + split + ".csv"), dbm::analysis_csv(r));

    const std::string angle = r.angular && r.angular->all ? dbm::format_fixed(r.angular->all->mean) : "absent";
    const std::string sep = r.separability.all ? dbm::format_fixed(*r.separability.all) : "n/a";
    std::printf("[%s] mean angle (deg) %s, mean separability %s\n", split.c_str(), angle.c_str(), sep.c_str());
  }
  std::printf("wrote %s\n", dir.string().c_str());
  return kExitOk;
}

// gradcheck -----------------------------------------------------------------

int cmd_gradcheck(const dbm::GradcheckOptions& opt) {
  const dbm::GradcheckReport report = dbm::run_gradcheck(opt);
  std::printf("%-34s %6s %14s %10s %s\n", "suite", "cases", "worst_rel_err", "tol", "result");
  for (const auto& e : report.entries) {
    std::printf("%-34s %6d %14.6e %10.1e %s\n", e.suite.c_str(), e.cases, e.worst_error, e.tolerance,
                e.passed ? "PASS" : "FAIL");
  }
  std::printf("worst loss-level %.6e, worst model-level %.6e\n", report.worst("loss/"), report.worst("model/"));
  std::printf("%s\n", report.passed() ? "gradcheck PASSED" : "gradcheck FAILED");
  return report.passed() ? kExitOk : kExitGradcheck;
}

// sweep ---------------------------------------------------------------------

int cmd_sweep(const Common& c, std::vector<std::string> losses, std::vector<std::uint64_t> seeds,
              std::vector<double> K, std::vector<double> tau, bool with_analysis) {
  const dbm::ExperimentConfig base = load_base(c);
  dbm::SweepAxes axes;
  if (!c.config.empty()) {
    std::ifstream in(c.config);
    const json j = json::parse(in, nullptr, true, true);
    if (j.contains("sweep")) axes = dbm::SweepAxes::from_json(j.at("sweep"));
  }
  if (!losses.empty()) axes.losses = std::move(losses);
  if (!seeds.empty()) axes.seeds = std::move(seeds);
  if (!K.empty()) axes.K = std::move(K);
  if (!tau.empty()) axes.tau = std::move(tau);
  if (axes.losses.empty()) throw dbm::Error(dbm::ErrorKind::InvalidConfig, "sweep needs at least one loss");
  if (axes.seeds.empty()) axes.seeds = {base.train.seed};

  const fs::path dir = resolve_out(c, base);
  ensure_dir(dir);
  const auto rows = dbm::run_sweep(base, axes, c.threads, with_analysis);
  dbm::write_text(dir / "sweep_rows.csv", dbm::sweep_rows_csv(rows));
  const std::string agg = dbm::sweep_aggregate_csv(rows);
  dbm::write_text(dir / "sweep_aggregate.csv", agg);
  std::fputs(agg.c_str(), stdout);

  long failed = 0;
  for (const auto& r : rows) failed += r.status != "ok";
  std::printf("%zu runs, %ld failed\nwrote %s\n", rows.size(), failed, dir.string().c_str());
  return kExitOk;
}

const char* kDefaultsHelp = R"(Config defaults (JSON, every key optional):
  label "run"
  data:   classes 10, input_dim 32, n_max 500, imbalance 100, intra_std 0.3,
          center_norm 1, test_per_class 100, seed 0, train_path/test_path unset
  model:  hidden [64, 32], head "cosine" | "linear"
  loss:   kind "ce" (ce cb bs sphereface cosface arcface ldam dbm-ce dbm-cb dbm-bs),
          K 0.1, tau 1, scale 32, application "hard-positives" | "all-positives" | "none",
          gradient "detached" | "through", beta 0.9999, m (baseline margin)
  train:  epochs 30, batch_size 64, lr 0.1, momentum 0.9, weight_decay 2e-4,
          warmup_epochs 5, drw_epoch unset, seed 0
  groups: mode "absolute" | "tercile", many_min 100, few_max 20
  output: dir unset
  sweep:  losses [...], seeds [...], K [...], tau [...]
Exit codes: 0 ok, 1 gradcheck failure, 2 invalid input, 3 I/O or data file error,
            4 numeric failure (non-finite loss, singular scatter, ...).
)";

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Difficulty- and balance-aware margin losses for long-tailed classification"};
  app.footer(kDefaultsHelp);
  app.require_subcommand(1);
  app.set_version_flag("--version", dbm::kSoftwareVersion);

  Common common;

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic long-tailed train/test split");
  add_common(gen, common, false);
  std::string format = "binary";
  gen->add_option("--format", format, "Dataset file format")->check(CLI::IsMember({"binary", "csv"}));

  auto* train = app.add_subcommand("train", "Train a model; writes checkpoint, epoch log, metrics and manifest");
  add_common(train, common, false);
  std::string train_path, test_path;
  train->add_option("--train", train_path, "Train dataset file (default: generate from config)");
  train->add_option("--test", test_path, "Held-out dataset file");

  auto* eval = app.add_subcommand("eval", "Group-wise accuracy and confusion matrix of a checkpoint");
  add_common(eval, common, false);
  std::string ckpt_path, data_path;
  std::optional<long> many_min, few_max;
  eval->add_option("--checkpoint", ckpt_path, "Checkpoint file")->required();
  eval->add_option("--data", data_path, "Dataset file")->required();
  eval->add_option("--many-min", many_min, "Many group: train count > this");
  eval->add_option("--few-max", few_max, "Few group: train count < this");

  auto* analyze = app.add_subcommand("analyze", "Angular compactness and Fisher separability of a checkpoint");
  add_common(analyze, common, false);
  analyze->add_option("--checkpoint", ckpt_path, "Checkpoint file")->required();
  analyze->add_option("--train", train_path, "Train dataset file");
  analyze->add_option("--test", test_path, "Test dataset file");
  analyze->add_option("--many-min", many_min, "Many group: train count > this");
  analyze->add_option("--few-max", few_max, "Few group: train count < this");

  auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of every analytic gradient");
  dbm::GradcheckOptions gopt;
  grad->add_option("--cases", gopt.cases, "Cases per loss-level suite")->capture_default_str();
  grad->add_option("--model-cases", gopt.model_cases, "Cases per model-level suite")->capture_default_str();
  grad->add_option("--seed", gopt.seed, "RNG seed")->capture_default_str();
  grad->add_option("--perturb", gopt.perturb, "Scale analytic gradients by (1 + p); detector test only");

  auto* sweep = app.add_subcommand("sweep", "Run losses x seeds x K x tau; writes per-run and aggregate CSV");
  add_common(sweep, common, true);
  std::vector<std::string> losses;
  std::vector<std::uint64_t> seeds;
  std::vector<double> Ks, taus;
  bool with_analysis = false;
  sweep->add_option("--losses", losses, "Loss or ablation variants (overrides config)")->delimiter(',');
  sweep->add_option("--seeds", seeds, "Seeds (overrides config)")->delimiter(',');
  sweep->add_option("--K", Ks, "K values (DBM variants only)")->delimiter(',');
  sweep->add_option("--tau", taus, "tau values (DBM variants only)")->delimiter(',');
  sweep->add_flag("--analysis", with_analysis, "Also record mean angle and separability on the test split");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(common, format);
    if (train->parsed()) return cmd_train(common, train_path, test_path);
    if (eval->parsed()) return cmd_eval(common, ckpt_path, data_path, many_min, few_max);
    if (analyze->parsed()) return cmd_analyze(common, ckpt_path, train_path, test_path, many_min, few_max);
    if (grad->parsed()) return cmd_gradcheck(gopt);
    if (sweep->parsed()) return cmd_sweep(common, losses, seeds, Ks, taus, with_analysis);
  } catch (const dbm::NonFiniteLossError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitNumeric;
  } catch (const dbm::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code_for(e.kind());
  } catch (const nlohmann::json::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitValidation;
  }
  return kExitValidation;
}
