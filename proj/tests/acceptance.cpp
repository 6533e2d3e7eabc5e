// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "dbm/analysis.hpp"
#include "dbm/checkpoint.hpp"
#include "dbm/data.hpp"
#include "dbm/experiment.hpp"
#include "dbm/gradcheck.hpp"
#include "dbm/losses.hpp"

namespace fs = std::filesystem;
using namespace dbm;

namespace {

using Clock = std::chrono::steady_clock;

int failures = 0;

void report(int id, const char* title, bool pass, const std::string& detail) {
  std::printf("%s criterion %d (%s): %s\n", pass ? "PASS" : "FAIL", id, title, detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

bool bit_equal(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (std::bit_cast<std::uint64_t>(a.data()[i]) != std::bit_cast<std::uint64_t>(b.data()[i])) return false;
  }
  return true;
}

// 1 ------------------------------------------------------------------------

void gradient_oracle() {
  const auto t0 = Clock::now();
  const GradcheckReport r = run_gradcheck(GradcheckOptions{});
  const double elapsed = seconds_since(t0);

  const std::vector<std::string> required = {
      "loss/ce",          "loss/cb",           "loss/bs",           "loss/cosface",        "loss/arcface",
      "loss/ldam",        "loss/dbm-ce/detached", "loss/dbm-ce/through", "loss/dbm-cb/detached",
      "loss/dbm-cb/through", "loss/dbm-bs/detached", "loss/dbm-bs/through",
      "model/cosine/dbm-bs/detached", "model/cosine/dbm-bs/through", "model/linear/ce"};
  bool covered = true;
  int min_cases = 1 << 30;
  for (const auto& name : required) {
    bool found = false;
    for (const auto& e : r.entries) {
      if (e.suite == name) {
        found = true;
        min_cases = std::min(min_cases, e.cases);
      }
    }
    if (!found) std::printf("  missing suite %s\n", name.c_str());
    covered &= found;
  }
  for (const auto& e : r.entries) {
    std::printf("  %-34s cases %5d worst %.3e tol %.0e %s\n", e.suite.c_str(), e.cases, e.worst_error, e.tolerance,
                e.passed ? "ok" : "FAILED");
    min_cases = std::min(min_cases, e.cases);
  }
  const double loss_worst = r.worst("loss/"), model_worst = r.worst("model/");
  const bool pass = covered && r.passed() && loss_worst < 1e-6 && model_worst < 1e-5 && min_cases >= 1000 &&
                    elapsed < 60.0;
  report(1, "gradient oracle", pass,
         std::to_string(r.entries.size()) + " suites, >= " + std::to_string(min_cases) + " cases each, worst loss " +
             fmt("%.2e", loss_worst) + " (< 1e-6), worst model " + fmt("%.2e", model_worst) + " (< 1e-5), " +
             fmt("%.1f s", elapsed));
}

// 2 ------------------------------------------------------------------------

void reduction_identities() {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(-0.95, 0.95);
  const ClassPrior prior({500, 300, 180, 108, 65, 39, 23, 14, 8, 5});
  MarginConfig off;
  off.K = 0.0;
  off.application = MarginApplication::None;
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    Vector c(10);
    for (int i = 0; i < 10; ++i) c(i) = u(rng);
    const int y = t % 10;
    off.gradient = t % 2 ? MarginGradient::Through : MarginGradient::Detached;
    const double ce = softmax_cross_entropy(off.scale * c, y);
    const double cb = cb_weight(0.9999, prior.count(y)) * ce;
    const double bs = softmax_cross_entropy(off.scale * c + prior.log_proportions(), y);
    worst = std::max(worst, std::abs(dbm_ce_loss(c, y, prior, off).loss - ce));
    worst = std::max(worst, std::abs(dbm_cb_loss(c, y, prior, off, 0.9999).loss - cb));
    worst = std::max(worst, std::abs(dbm_bs_loss(c, y, prior, off).loss - bs));
  }

  double curve = 0.0;
  for (const auto& [plain, dbm_name] : {std::pair{"ce", "dbm-ce"}, {"cb", "dbm-cb"}, {"bs", "dbm-bs"}}) {
    ExperimentConfig a;
    a.train.epochs = 10;
    a.set_seed(7);
    ExperimentConfig b = a;
    a.train.loss = LossSpec::from_name(plain);
    b.train.loss = LossSpec::from_name(dbm_name);
    b.train.loss.margin.K = 0.0;
    const RunResult ra = run_experiment(a), rb = run_experiment(b);
    if (ra.trained.log.size() != rb.trained.log.size()) curve = INFINITY;
    for (std::size_t e = 0; e < std::min(ra.trained.log.size(), rb.trained.log.size()); ++e) {
      curve = std::max(curve, std::abs(ra.trained.log[e].mean_loss - rb.trained.log[e].mean_loss));
    }
  }
  report(2, "reduction identities", worst <= 1e-12 && curve <= 1e-10,
         "per-sample max |diff| " + fmt("%.1e", worst) + " (<= 1e-12), training-curve max |diff| " +
             fmt("%.1e", curve) + " (<= 1e-10)");
}

// 3 ------------------------------------------------------------------------

void spot_values() {
  struct Spot {
    const char* name;
    double got, want;
  };
  const Vector m = class_margin(ClassPrior({100, 1}), 0.1, 1.0);
  MarginConfig off;
  off.K = 0.0;
  const std::vector<Spot> spots = {
      {"class_margin[0]", m(0), 0.001},
      {"class_margin[1]", m(1), 0.1},
      {"LDAM logit", baseline_positive_logit({BaselineMargin::LDAM, 0.5}, 0.6, 16).psi, 0.35},
      {"BS loss", dbm_bs_loss(Vector{{0.3, 0.3}}, 1, ClassPrior({9, 1}), off).loss, -std::log(0.1)},
      {"Fisher J", fisher_J({0.0, 2.0}, {4.0, 6.0}), 8.0},
  };
  bool pass = true;
  std::string detail;
  for (const auto& s : spots) {
    const double err = std::abs(s.got - s.want);
    pass &= err <= 1e-9;
    detail += std::string(detail.empty() ? "" : ", ") + s.name + " " + fmt("%.9g", s.got);
  }
  report(3, "closed-form spot values", pass, detail + " (tol 1e-9)");
}

// 4-8 ----------------------------------------------------------------------

struct Outcome {
  double all = 0.0, few = 0.0;
  double angle_test = 0.0, angle_train = 0.0;
  double sep_test = 0.0, sep_train = 0.0;
  double seconds = 0.0;
};

ExperimentConfig protocol() {
  ExperimentConfig c;  // defaults are the protocol
  c.data.gen = GenConfig{};
  c.data.gen.classes = 10;
  c.data.gen.input_dim = 32;
  c.data.gen.n_max = 500;
  c.data.gen.imbalance = 100.0;
  c.data.gen.intra_std = 0.3;
  c.hidden = {64, 32};
  c.head = HeadKind::Cosine;
  c.train.epochs = 30;
  c.train.loss.margin.scale = 32.0;
  c.train.loss.margin.K = 0.1;
  c.train.loss.margin.tau = 1.0;
  return c;
}

Outcome run_variant(const std::string& variant, std::uint64_t seed, double K = 0.1, double tau = 1.0) {
  ExperimentConfig cfg = apply_variant(protocol(), variant);
  cfg.train.loss.margin.K = K;
  cfg.train.loss.margin.tau = tau;
  cfg.set_seed(seed);
  const auto t0 = Clock::now();
  const RunResult run = run_experiment(cfg);
  Outcome o;
  o.seconds = seconds_since(t0);
  o.all = *run.test_metrics.accuracy.all;
  o.few = *run.test_metrics.accuracy.few;
  const auto& counts = run.data.train.class_counts;
  const AnalysisReport te = analyze(run.trained.model, run.data.test, counts, run.thresholds, "test");
  const AnalysisReport tr = analyze(run.trained.model, run.data.train, counts, run.thresholds, "train");
  o.angle_test = te.angular->all->mean;
  o.angle_train = tr.angular->all->mean;
  o.sep_test = *te.separability.all;
  o.sep_train = *tr.separability.all;
  return o;
}

double mean_of(const std::vector<Outcome>& v, double Outcome::*field) {
  double s = 0.0;
  for (const auto& o : v) s += o.*field;
  return s / static_cast<double>(v.size());
}

void synthetic_protocol() {
  const std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  constexpr double kSlack = 0.005;  // 0.5 accuracy points

  std::map<std::string, std::vector<Outcome>> runs;
  double slowest = 0.0;
  auto collect = [&](const std::string& key, const std::string& variant, double K, double tau) {
    for (auto s : seeds) {
      runs[key].push_back(run_variant(variant, s, K, tau));
      slowest = std::max(slowest, runs[key].back().seconds);
    }
  };
  collect("bs", "cosine-bs", 0.1, 1.0);
  collect("mc-bs", "mc-bs", 0.1, 1.0);
  collect("dbm-bs", "dbm-bs", 0.1, 1.0);
  for (double K : {0.05, 0.1, 0.2}) {
    for (double tau : {0.5, 1.0, 2.0}) {
      if (K == 0.1 && tau == 1.0) continue;
      collect("dbm-bs K=" + fmt("%g", K) + " tau=" + fmt("%g", tau), "dbm-bs", K, tau);
    }
  }
  runs["dbm-bs K=0.1 tau=1"] = runs["dbm-bs"];

  const auto& bs = runs["bs"];
  const auto& dbm = runs["dbm-bs"];
  std::printf("  protocol: C=10 D_in=32 n_max=500 rho=100 intra_std=0.3 hidden=[64,32] s=32 30 epochs, seeds 1-5\n");
  std::printf("  %-6s %-8s %8s %8s %10s %10s %12s %12s\n", "seed", "variant", "all", "few", "theta_te", "theta_tr",
              "S_te", "S_tr");
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    for (const auto& [name, o] : {std::pair{"bs", bs[i]}, std::pair{"dbm-bs", dbm[i]}}) {
      std::printf("  %-6llu %-8s %8.4f %8.4f %10.4f %10.4f %12.4f %12.4g\n",
                  static_cast<unsigned long long>(seeds[i]), name, o.all, o.few, o.angle_test, o.angle_train,
                  o.sep_test, o.sep_train);
    }
  }

  // 4
  const double bs_all = mean_of(bs, &Outcome::all), dbm_all = mean_of(dbm, &Outcome::all);
  const double bs_few = mean_of(bs, &Outcome::few), dbm_few = mean_of(dbm, &Outcome::few);
  report(4, "few-shot and overall accuracy", dbm_few >= bs_few && dbm_all >= bs_all - kSlack && slowest < 120.0,
         "Few " + fmt("%.4f", bs_few) + " -> " + fmt("%.4f", dbm_few) + ", All " + fmt("%.4f", bs_all) + " -> " +
             fmt("%.4f", dbm_all) + " (slack 0.005), slowest run " + fmt("%.2f s", slowest));

  // 5
  int angle_wins = 0, angle_wins_train = 0;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    angle_wins += dbm[i].angle_test < bs[i].angle_test;
    angle_wins_train += dbm[i].angle_train < bs[i].angle_train;
  }
  report(5, "intra-class compactness", angle_wins >= 4,
         "test-split mean theta_y lower under DBM-BS in " + std::to_string(angle_wins) +
             "/5 seeds (need 4); mean " + fmt("%.3f", mean_of(bs, &Outcome::angle_test)) + " -> " +
             fmt("%.3f deg", mean_of(dbm, &Outcome::angle_test)) + "; train split " +
             std::to_string(angle_wins_train) + "/5 (diagnostic)");

  // 6
  int sep_wins = 0, sep_wins_train = 0;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    sep_wins += dbm[i].sep_test >= bs[i].sep_test;
    sep_wins_train += dbm[i].sep_train >= bs[i].sep_train;
  }
  report(6, "separability", sep_wins >= 4,
         "test-split mean S_i at least BS under DBM-BS in " + std::to_string(sep_wins) + "/5 seeds (need 4); mean " +
             fmt("%.3f", mean_of(bs, &Outcome::sep_test)) + " -> " + fmt("%.3f", mean_of(dbm, &Outcome::sep_test)) +
             "; train split " + std::to_string(sep_wins_train) + "/5 (diagnostic)");

  // 7
  const double mc_all = mean_of(runs["mc-bs"], &Outcome::all);
  report(7, "ablation ordering", dbm_all >= mc_all - kSlack && mc_all >= bs_all - kSlack,
         "cosine " + fmt("%.4f", bs_all) + ", +m_C " + fmt("%.4f", mc_all) + ", +m_C+m_I(HP) " + fmt("%.4f", dbm_all) +
             " (slack 0.005 per step)");

  // 8
  bool robust = true;
  double lowest = 1.0;
  std::string worst_cfg;
  for (const auto& [key, v] : runs) {
    if (key.rfind("dbm-bs K=", 0) != 0) continue;
    const double m = mean_of(v, &Outcome::all);
    std::printf("  %-22s all %.4f\n", key.c_str(), m);
    if (m < lowest) {
      lowest = m;
      worst_cfg = key;
    }
    robust &= m >= bs_all - kSlack;
  }
  report(8, "hyperparameter robustness", robust,
         "lowest DBM-BS grid mean " + fmt("%.4f", lowest) + " (" + worst_cfg + ") vs BS " + fmt("%.4f", bs_all) +
             " - 0.005 over K x tau = 3 x 3");
}

// 9 ------------------------------------------------------------------------

void determinism_and_round_trips() {
  const fs::path dir = fs::temp_directory_path() / "dbm_acceptance";
  fs::remove_all(dir);
  fs::create_directories(dir);

  ExperimentConfig cfg = protocol();
  cfg.train.loss = LossSpec::from_name("dbm-bs");
  cfg.set_seed(3);
  const RunResult first = run_experiment(cfg);
  write_run_outputs(first, dir / "a");
  write_run_outputs(run_experiment(cfg), dir / "b");
  bool reruns = true;
  for (const char* f : {"metrics.json", "epochs.csv", "checkpoint.json", "manifest.json"}) {
    reruns &= slurp(dir / "a" / f) == slurp(dir / "b" / f);
  }

  bool data_rt = true;
  for (auto fmt_kind : {DatasetFormat::Binary, DatasetFormat::Csv}) {
    const fs::path p = dir / (fmt_kind == DatasetFormat::Binary ? "train.bin" : "train.csv");
    save_dataset(first.data.train, p, fmt_kind);
    const LabeledDataset back = load_dataset(p);
    data_rt &= bit_equal(back.features, first.data.train.features) && back.labels == first.data.train.labels &&
               back.class_counts == first.data.train.class_counts;
  }

  const Checkpoint ck = load_checkpoint(dir / "a" / "checkpoint.json");
  const Vector flat = ck.model.flatten(), orig = first.trained.model.flatten();
  const bool ckpt_rt = bit_equal(flat, orig) && ck.model.dims == first.trained.model.dims;

  report(9, "determinism and round-trips", reruns && data_rt && ckpt_rt,
         std::string("rerun artifacts byte-identical: ") + (reruns ? "yes" : "no") +
             ", dataset binary+csv bit-exact: " + (data_rt ? "yes" : "no") +
             ", checkpoint bit-exact: " + (ckpt_rt ? "yes" : "no"));
  fs::remove_all(dir);
}

}  // namespace

int main() {
  const auto t0 = Clock::now();
  const std::vector<std::function<void()>> steps = {gradient_oracle, reduction_identities, spot_values,
                                                    synthetic_protocol, determinism_and_round_trips};
  for (const auto& step : steps) {
    try {
      step();
    } catch (const std::exception& e) {
      std::printf("FAIL (exception): %s\n", e.what());
      ++failures;
    }
  }
  std::printf("%d failing criteria, %.1f s total\n", failures, seconds_since(t0));
  return failures == 0 ? 0 : 1;
}
