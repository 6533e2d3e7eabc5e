#include "dbm/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "dbm/losses.hpp"
#include "dbm/model.hpp"
#include "dbm/trainer.hpp"

namespace dbm {

bool GradcheckReport::passed() const {
  return std::all_of(entries.begin(), entries.end(), [](const GradcheckEntry& e) { return e.passed; });
}

double GradcheckReport::worst(const std::string& prefix) const {
  double w = 0.0;
  for (const auto& e : entries) {
    if (e.suite.rfind(prefix, 0) == 0) w = std::max(w, e.worst_error);
  }
  return w;
}

double gradient_error(const std::vector<double>& analytic, const std::vector<double>& numeric) {
  double diff = 0.0, scale = 1.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff = std::max(diff, std::abs(analytic[i] - numeric[i]));
    scale = std::max({scale, std::abs(analytic[i]), std::abs(numeric[i])});
  }
  return diff / scale;
}

namespace {

// What the forward pass decided for one sample, held fixed while differencing.
struct Frozen {
  bool hard = false;
  double margin = 0.0;  // total angular margin at the forward point
};

double reference_positive(const LossSpec& spec, double c, long n_y, double rho_y, const Frozen& frozen) {
  switch (spec.positive) {
    case PositiveMargin::None:
      return c;
    case PositiveMargin::Baseline:
      switch (spec.baseline.kind) {
        case BaselineMargin::SphereFace: return std::cos(spec.baseline.m * std::acos(c));
        case BaselineMargin::CosFace: return c - spec.baseline.m;
        case BaselineMargin::LDAM: return c - spec.baseline.m / std::sqrt(std::sqrt(static_cast<double>(n_y)));
        case BaselineMargin::ArcFace: {
          const double a = std::acos(c) + spec.baseline.m;
          return a > std::numbers::pi ? -1.0 : std::cos(a);
        }
      }
      return c;
    case PositiveMargin::Dbm: {
      double margin = frozen.margin;
      if (spec.margin.gradient == MarginGradient::Through) {
        const double m_c = spec.margin.K / std::pow(rho_y, spec.margin.tau);
        const bool instance = spec.margin.application == MarginApplication::AllPositives ||
                              (spec.margin.application == MarginApplication::HardPositivesOnly && frozen.hard);
        margin = m_c + (instance ? m_c * (1.0 - c) / 2.0 : 0.0);
      }
      if (margin == 0.0) return c;
      const double a = std::acos(c) + margin;
      return a > std::numbers::pi ? -1.0 : std::cos(a);
    }
  }
  return c;
}

// Weighted loss of one sample and its weight.
std::pair<double, double> reference_loss(const LossSpec& spec, const std::vector<double>& scores, int y,
                                         const std::vector<long>& counts, const Frozen& frozen) {
  const double total = static_cast<double>(std::accumulate(counts.begin(), counts.end(), 0L));
  const double n_min = static_cast<double>(*std::min_element(counts.begin(), counts.end()));
  const auto yi = static_cast<std::size_t>(y);
  const double s = spec.margin.scale;

  std::vector<double> z(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double raw = i == yi ? reference_positive(spec, scores[i], counts[i], counts[i] / n_min, frozen) : scores[i];
    z[i] = s * raw + (spec.base == BaseLoss::BS ? std::log(counts[i] / total) : 0.0);
  }
  const double top = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double v : z) sum += std::exp(v - top);
  const double loss = top + std::log(sum) - z[yi];
  const double w = spec.base == BaseLoss::CB ? (1.0 - spec.beta) / (1.0 - std::pow(spec.beta, counts[yi])) : 1.0;
  return {w * loss, w};
}

struct Sampler {
  std::mt19937_64 rng;

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(rng); }

  std::vector<long> counts(int classes) {
    std::vector<long> out(static_cast<std::size_t>(classes));
    for (auto& n : out) n = std::lround(std::exp(uniform(0.0, std::log(1000.0))));
    return out;
  }

  LossSpec loss(const std::string& kind, MarginGradient gradient, double max_scale) {
    LossSpec spec = LossSpec::from_name(kind);
    spec.margin.scale = uniform(1.0, max_scale);
    spec.margin.K = uniform(0.0, 0.5);
    spec.margin.tau = uniform(0.0, 2.0);
    spec.margin.gradient = gradient;
    const MarginApplication modes[] = {MarginApplication::None, MarginApplication::AllPositives,
                                       MarginApplication::HardPositivesOnly};
    spec.margin.application = modes[integer(0, 2)];
    const double betas[] = {0.0, 0.9, 0.99, 0.999, 0.9999};
    spec.beta = betas[integer(0, 4)];
    switch (spec.baseline.kind) {
      case BaselineMargin::SphereFace: spec.baseline.m = integer(1, 4); break;
      case BaselineMargin::LDAM: spec.baseline.m = uniform(0.0, 1.0); break;
      default: spec.baseline.m = uniform(0.0, 0.5); break;
    }
    return spec;
  }
};

// Cases too close to a kink (hard-positive tie, the pi clamp, the acos clamp)
// are redrawn: the finite difference would straddle a discontinuity.
bool near_kink(const LossSpec& spec, const VectorRef& cos_all, int y, const ClassPrior& prior, double guard) {
  const double c = cos_all(y);
  if (std::abs(c) > 1.0 - guard) return true;
  double best_other = -2.0;
  for (Eigen::Index i = 0; i < cos_all.size(); ++i) {
    if (i != y) best_other = std::max(best_other, cos_all(i));
  }
  if (std::abs(best_other - c) < guard) return true;
  double margin = 0.0;
  if (spec.positive == PositiveMargin::Dbm) {
    margin = dbm_positive_logit(cos_all, y, prior, spec.margin).margin;
  } else if (spec.positive == PositiveMargin::Baseline && spec.baseline.kind == BaselineMargin::ArcFace) {
    margin = spec.baseline.m;
  }
  return margin > 0.0 && std::abs(std::acos(c) + margin - std::numbers::pi) < guard;
}

Frozen freeze(const LossSpec& spec, const VectorRef& cos_all, int y, const ClassPrior& prior) {
  if (spec.positive != PositiveMargin::Dbm) return {};
  const PositiveLogit p = dbm_positive_logit(cos_all, y, prior, spec.margin);
  return {p.hard_positive, p.margin};
}

GradcheckEntry loss_suite(const std::string& kind, MarginGradient gradient, const GradcheckOptions& opt,
                          std::uint64_t seed) {
  Sampler sample{std::mt19937_64(seed)};
  GradcheckEntry entry;
  entry.suite = "loss/" + kind + (kind.rfind("dbm-", 0) == 0 ? std::string("/") + to_string(gradient) : "");
  entry.tolerance = opt.loss_tolerance;
  const double h = opt.loss_step;

  while (entry.cases < opt.cases) {
    const int C = sample.integer(2, 12);
    const LossSpec spec = sample.loss(kind, gradient, 64.0);
    const std::vector<long> counts = sample.counts(C);
    const ClassPrior prior(counts);
    const int y = sample.integer(0, C - 1);
    Vector cos_all(C);
    for (int i = 0; i < C; ++i) cos_all(i) = sample.uniform(-0.95, 0.95);
    if (near_kink(spec, cos_all, y, prior, 1e-4)) continue;

    const LossResult analytic = evaluate_loss(spec, cos_all, y, prior);
    const Frozen frozen = freeze(spec, cos_all, y, prior);
    std::vector<double> a(static_cast<std::size_t>(C)), n(static_cast<std::size_t>(C));
    std::vector<double> point(cos_all.begin(), cos_all.end());
    for (int i = 0; i < C; ++i) {
      std::vector<double> up = point, down = point;
      up[static_cast<std::size_t>(i)] += h;
      down[static_cast<std::size_t>(i)] -= h;
      n[static_cast<std::size_t>(i)] =
          (reference_loss(spec, up, y, counts, frozen).first - reference_loss(spec, down, y, counts, frozen).first) /
          (2.0 * h);
      a[static_cast<std::size_t>(i)] = analytic.grad_cos(i) * (1.0 + opt.perturb);
    }
    entry.worst_error = std::max(entry.worst_error, gradient_error(a, n));
    ++entry.cases;
  }
  entry.passed = entry.worst_error < entry.tolerance;
  return entry;
}

GradcheckEntry model_suite(HeadKind head, const std::string& kind, MarginGradient gradient,
                           const GradcheckOptions& opt, std::uint64_t seed) {
  Sampler sample{std::mt19937_64(seed)};
  GradcheckEntry entry;
  entry.suite = std::string("model/") + to_string(head) + "/" + kind +
                (kind.rfind("dbm-", 0) == 0 ? std::string("/") + to_string(gradient) : "");
  entry.tolerance = opt.model_tolerance;
  const double h = opt.model_step;

  while (entry.cases < opt.model_cases) {
    ModelDims dims;
    dims.input = sample.integer(2, 5);
    dims.hidden.resize(static_cast<std::size_t>(sample.integer(0, 2)));
    for (auto& w : dims.hidden) w = sample.integer(2, 5);
    dims.classes = sample.integer(2, 5);
    dims.head = head;
    ModelParams model = init_model(dims, sample.rng());
    for (auto& l : model.layers) l.biases = Vector::NullaryExpr(l.biases.size(), [&] { return 0.3 * sample.normal(); });
    model.head_weights *= sample.uniform(0.5, 2.0);
    if (head == HeadKind::Linear) {
      model.head_biases = Vector::NullaryExpr(dims.classes, [&] { return 0.3 * sample.normal(); });
    }

    LossSpec spec = sample.loss(kind, gradient, 32.0);
    if (head == HeadKind::Linear) spec.margin.scale = 1.0;
    const std::vector<long> counts = sample.counts(dims.classes);
    const ClassPrior prior(counts);
    const int N = sample.integer(1, 4);
    const Matrix batch = Matrix::NullaryExpr(N, dims.input, [&] { return sample.normal(); });
    std::vector<int> labels(static_cast<std::size_t>(N));
    for (auto& y : labels) y = sample.integer(0, dims.classes - 1);

    const ForwardResult fwd = forward(model, batch);
    bool skip = false;
    std::vector<Frozen> frozen(static_cast<std::size_t>(N));
    if (head == HeadKind::Cosine) {
      for (int r = 0; r < N && !skip; ++r) {
        const Vector c = fwd.scores.row(r).transpose();
        skip = near_kink(spec, c, labels[static_cast<std::size_t>(r)], prior, 1e-3);
        frozen[static_cast<std::size_t>(r)] = freeze(spec, c, labels[static_cast<std::size_t>(r)], prior);
      }
    }
    if (skip) continue;

    const BatchLoss bl = batch_loss(spec, fwd.scores, labels, prior);
    const Vector analytic = backward(model, fwd.cache, bl.score_grads).flatten();

    auto total_loss = [&](const ModelParams& m) {
      const Matrix scores = forward(m, batch).scores;
      double num = 0.0, den = 0.0;
      for (int r = 0; r < N; ++r) {
        const Eigen::RowVectorXd row = scores.row(r);
        const auto [l, w] = reference_loss(spec, std::vector<double>(row.begin(), row.end()),
                                           labels[static_cast<std::size_t>(r)], counts, frozen[static_cast<std::size_t>(r)]);
        num += l;
        den += w;
      }
      return num / den;
    };

    const Vector params = model.flatten();
    ModelParams probe = model;
    std::vector<double> a(static_cast<std::size_t>(params.size())), n(a.size());
    for (Eigen::Index k = 0; k < params.size(); ++k) {
      Vector shifted = params;
      shifted(k) += h;
      probe.assign(shifted);
      const double up = total_loss(probe);
      shifted(k) -= 2.0 * h;
      probe.assign(shifted);
      const double down = total_loss(probe);
      n[static_cast<std::size_t>(k)] = (up - down) / (2.0 * h);
      a[static_cast<std::size_t>(k)] = analytic(k) * (1.0 + opt.perturb);
    }
    entry.worst_error = std::max(entry.worst_error, gradient_error(a, n));
    ++entry.cases;
  }
  entry.passed = entry.worst_error < entry.tolerance;
  return entry;
}

}  // namespace

GradcheckReport run_gradcheck(const GradcheckOptions& opt) {
  GradcheckReport report;
  std::uint64_t suite_seed = opt.seed * 1000003ULL;
  const std::vector<std::string> plain = {"ce", "cb", "bs", "sphereface", "cosface", "arcface", "ldam"};
  const std::vector<std::string> dbm = {"dbm-ce", "dbm-cb", "dbm-bs"};
  const MarginGradient modes[] = {MarginGradient::Detached, MarginGradient::Through};

  for (const auto& kind : plain) report.entries.push_back(loss_suite(kind, MarginGradient::Detached, opt, ++suite_seed));
  for (const auto& kind : dbm)
    for (auto mode : modes) report.entries.push_back(loss_suite(kind, mode, opt, ++suite_seed));

  for (const char* kind : {"ce", "cb", "bs"}) {
    report.entries.push_back(model_suite(HeadKind::Linear, kind, MarginGradient::Detached, opt, ++suite_seed));
  }
  for (const auto& kind : plain) {
    report.entries.push_back(model_suite(HeadKind::Cosine, kind, MarginGradient::Detached, opt, ++suite_seed));
  }
  for (const auto& kind : dbm)
    for (auto mode : modes) report.entries.push_back(model_suite(HeadKind::Cosine, kind, mode, opt, ++suite_seed));
  return report;
}

}  // namespace dbm
