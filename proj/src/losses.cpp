#include "dbm/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "dbm/error.hpp"

namespace dbm {

ClassPrior::ClassPrior(std::vector<long> counts) : counts_(std::move(counts)) {
  if (counts_.empty()) throw Error(ErrorKind::InvalidConfig, "class prior needs at least one class");
  for (std::size_t i = 0; i < counts_.size(); ++i) {
    if (counts_[i] < 1) {
      throw Error(ErrorKind::InvalidConfig, "class " + std::to_string(i) + " has count " +
                                                std::to_string(counts_[i]) + " (< 1)");
    }
  }
  min_count_ = *std::min_element(counts_.begin(), counts_.end());
  const double total = static_cast<double>(std::accumulate(counts_.begin(), counts_.end(), 0L));
  const auto C = static_cast<Eigen::Index>(counts_.size());
  proportions_.resize(C);
  log_proportions_.resize(C);
  ratios_.resize(C);
  for (Eigen::Index i = 0; i < C; ++i) {
    const double n = static_cast<double>(counts_[static_cast<std::size_t>(i)]);
    proportions_(i) = n / total;
    log_proportions_(i) = std::log(proportions_(i));
    ratios_(i) = n / static_cast<double>(min_count_);
  }
}

void MarginConfig::validate() const {
  if (!(K >= 0.0) || !std::isfinite(K)) throw Error(ErrorKind::InvalidConfig, "K must be >= 0");
  if (!(tau >= 0.0) || !std::isfinite(tau)) throw Error(ErrorKind::InvalidConfig, "tau must be >= 0");
  if (!(scale > 0.0) || !std::isfinite(scale)) throw Error(ErrorKind::InvalidConfig, "scale must be > 0");
}

void BaselineMarginSpec::validate() const {
  if (!(m >= 0.0) || !std::isfinite(m)) throw Error(ErrorKind::InvalidConfig, "margin m must be >= 0");
  if (kind == BaselineMargin::SphereFace && (m < 1.0 || std::floor(m) != m)) {
    throw Error(ErrorKind::InvalidConfig, "SphereFace needs a positive integer m");
  }
}

Vector class_margin(const ClassPrior& prior, double K, double tau) {
  Vector out(prior.num_classes());
  for (int i = 0; i < prior.num_classes(); ++i) out(i) = class_margin_for(prior, i, K, tau);
  return out;
}

double class_margin_for(const ClassPrior& prior, int y, double K, double tau) {
  check_class_index(y, prior.num_classes());
  return K * std::pow(prior.ratios()(y), -tau);
}

double instance_difficulty(double cos_y) noexcept {
  return (1.0 - std::clamp(cos_y, -1.0, 1.0)) / 2.0;
}

double instance_margin(double m_c, double d_i) noexcept { return m_c * d_i; }

bool is_hard_positive(const VectorRef& cos_all, int y) {
  check_class_index(y, cos_all.size());
  for (Eigen::Index i = 0; i < cos_all.size(); ++i) {
    if (i != y && cos_all(i) >= cos_all(y)) return true;
  }
  return false;
}

namespace {

// cos(theta + margin) with theta = safe_acos(c); dmargin_dcos is the margin's
// own dependence on c (zero when detached).
PositiveLogit additive_angular(double c, double margin, double dmargin_dcos) {
  PositiveLogit out;
  out.margin = margin;
  if (margin == 0.0 && dmargin_dcos == 0.0) {
    out.psi = c;
    out.dpsi_dcos = 1.0;
    return out;
  }
  const double angle = safe_acos(c) + margin;
  if (angle > std::numbers::pi) {
    out.psi = -1.0;
    out.dpsi_dcos = 0.0;
    out.angle_clamped = true;
    return out;
  }
  out.psi = std::cos(angle);
  out.dpsi_dcos = -std::sin(angle) * (safe_acos_derivative(c) + dmargin_dcos);
  return out;
}

}  // namespace

PositiveLogit dbm_positive_logit(const VectorRef& cos_all, int y, const ClassPrior& prior,
                                 const MarginConfig& cfg) {
  check_class_index(y, cos_all.size());
  if (cos_all.size() != prior.num_classes()) {
    throw Error(ErrorKind::ShapeMismatch, "cosine vector and class prior disagree on class count");
  }
  const double c = cos_all(y);
  const double m_c = class_margin_for(prior, y, cfg.K, cfg.tau);

  bool hard = false;
  bool with_instance = false;
  switch (cfg.application) {
    case MarginApplication::None:
      break;
    case MarginApplication::AllPositives:
      hard = is_hard_positive(cos_all, y);
      with_instance = true;
      break;
    case MarginApplication::HardPositivesOnly:
      hard = is_hard_positive(cos_all, y);
      with_instance = hard;
      break;
  }

  double margin = m_c;
  double dmargin = 0.0;
  if (with_instance) {
    margin += instance_margin(m_c, instance_difficulty(c));
    if (cfg.gradient == MarginGradient::Through && std::abs(c) <= 1.0) dmargin = -m_c / 2.0;
  }
  PositiveLogit out = additive_angular(c, margin, dmargin);
  out.hard_positive = hard;
  return out;
}

PositiveLogit baseline_positive_logit(const BaselineMarginSpec& spec, double cos_y, long n_y) {
  PositiveLogit out;
  switch (spec.kind) {
    case BaselineMargin::SphereFace: {
      const double theta = safe_acos(cos_y);
      out.psi = std::cos(spec.m * theta);
      out.dpsi_dcos = -spec.m * std::sin(spec.m * theta) * safe_acos_derivative(cos_y);
      out.margin = spec.m;
      return out;
    }
    case BaselineMargin::CosFace:
      out.psi = cos_y - spec.m;
      out.margin = spec.m;
      return out;
    case BaselineMargin::ArcFace:
      return additive_angular(cos_y, spec.m, 0.0);
    case BaselineMargin::LDAM: {
      if (n_y < 1) throw Error(ErrorKind::InvalidConfig, "LDAM needs n_y >= 1");
      const double margin = spec.m * std::pow(static_cast<double>(n_y), -0.25);
      out.psi = cos_y - margin;
      out.margin = margin;
      return out;
    }
  }
  return out;
}

LossResult margin_cross_entropy(const PositiveLogit& positive, const VectorRef& cos_all, int y, double s,
                                const VectorRef& offsets) {
  check_class_index(y, cos_all.size());
  const bool shifted = offsets.size() != 0;
  if (shifted && offsets.size() != cos_all.size()) {
    throw Error(ErrorKind::ShapeMismatch, "logit offsets and cosines disagree on class count");
  }
  Vector z = s * cos_all;
  z(y) = s * positive.psi;
  if (shifted) z += offsets;

  const double lse = log_sum_exp(z);
  LossResult out;
  out.loss = std::max(0.0, lse - z(y));
  out.grad_cos = s * (z.array() - lse).exp().matrix();
  out.grad_cos(y) = (out.grad_cos(y) - s) * positive.dpsi_dcos;
  out.hard_positive = positive.hard_positive;
  out.angle_clamped = positive.angle_clamped;
  return out;
}

double cb_weight(double beta, long n_y) {
  if (!(beta >= 0.0 && beta < 1.0)) throw Error(ErrorKind::InvalidConfig, "beta must lie in [0, 1)");
  if (n_y < 1) throw Error(ErrorKind::InvalidConfig, "n_y must be >= 1");
  if (beta == 0.0) return 1.0;
  return (1.0 - beta) / -std::expm1(static_cast<double>(n_y) * std::log(beta));
}

namespace {

void apply_weight(LossResult& r, double w) {
  r.weight = w;
  r.loss *= w;
  r.grad_cos *= w;
}

}  // namespace

LossResult dbm_ce_loss(const VectorRef& cos_all, int y, const ClassPrior& prior, const MarginConfig& cfg) {
  return margin_cross_entropy(dbm_positive_logit(cos_all, y, prior, cfg), cos_all, y, cfg.scale);
}

LossResult dbm_cb_loss(const VectorRef& cos_all, int y, const ClassPrior& prior, const MarginConfig& cfg,
                       double beta) {
  LossResult r = dbm_ce_loss(cos_all, y, prior, cfg);
  apply_weight(r, cb_weight(beta, prior.count(y)));
  return r;
}

LossResult dbm_bs_loss(const VectorRef& cos_all, int y, const ClassPrior& prior, const MarginConfig& cfg) {
  return margin_cross_entropy(dbm_positive_logit(cos_all, y, prior, cfg), cos_all, y, cfg.scale,
                              prior.log_proportions());
}

LossSpec LossSpec::from_name(std::string_view name) {
  LossSpec spec;
  auto with_baseline = [&](BaselineMargin kind, double default_m) {
    spec.positive = PositiveMargin::Baseline;
    spec.baseline.kind = kind;
    spec.baseline.m = default_m;
  };
  if (name == "ce") {
  } else if (name == "cb") {
    spec.base = BaseLoss::CB;
  } else if (name == "bs") {
    spec.base = BaseLoss::BS;
  } else if (name == "sphereface") {
    with_baseline(BaselineMargin::SphereFace, 2.0);
  } else if (name == "cosface") {
    with_baseline(BaselineMargin::CosFace, 0.35);
  } else if (name == "arcface") {
    with_baseline(BaselineMargin::ArcFace, 0.5);
  } else if (name == "ldam") {
    with_baseline(BaselineMargin::LDAM, 0.5);
  } else if (name == "dbm-ce") {
    spec.positive = PositiveMargin::Dbm;
  } else if (name == "dbm-cb") {
    spec.positive = PositiveMargin::Dbm;
    spec.base = BaseLoss::CB;
  } else if (name == "dbm-bs") {
    spec.positive = PositiveMargin::Dbm;
    spec.base = BaseLoss::BS;
  } else {
    throw Error(ErrorKind::InvalidConfig, "unknown loss kind '" + std::string(name) + "'");
  }
  return spec;
}

std::string LossSpec::name() const {
  const char* base_name = base == BaseLoss::CE ? "ce" : base == BaseLoss::CB ? "cb" : "bs";
  switch (positive) {
    case PositiveMargin::None:
      return base_name;
    case PositiveMargin::Dbm:
      return std::string("dbm-") + base_name;
    case PositiveMargin::Baseline: {
      std::string kind;
      switch (baseline.kind) {
        case BaselineMargin::SphereFace: kind = "sphereface"; break;
        case BaselineMargin::CosFace: kind = "cosface"; break;
        case BaselineMargin::ArcFace: kind = "arcface"; break;
        case BaselineMargin::LDAM: kind = "ldam"; break;
      }
      return base == BaseLoss::CE ? kind : kind + "-" + base_name;
    }
  }
  return base_name;
}

void LossSpec::validate() const {
  margin.validate();
  if (positive == PositiveMargin::Baseline) baseline.validate();
  if (!(beta >= 0.0 && beta < 1.0)) throw Error(ErrorKind::InvalidConfig, "beta must lie in [0, 1)");
}

LossResult evaluate_loss(const LossSpec& spec, const VectorRef& scores, int y, const ClassPrior& prior) {
  check_class_index(y, scores.size());
  if (scores.size() != prior.num_classes()) {
    throw Error(ErrorKind::ShapeMismatch, "scores and class prior disagree on class count");
  }
  PositiveLogit positive;
  switch (spec.positive) {
    case PositiveMargin::None:
      positive.psi = scores(y);
      break;
    case PositiveMargin::Baseline:
      positive = baseline_positive_logit(spec.baseline, scores(y), prior.count(y));
      break;
    case PositiveMargin::Dbm:
      positive = dbm_positive_logit(scores, y, prior, spec.margin);
      break;
  }
  const double s = spec.margin.scale;
  if (spec.base == BaseLoss::BS) return margin_cross_entropy(positive, scores, y, s, prior.log_proportions());
  LossResult r = margin_cross_entropy(positive, scores, y, s);
  if (spec.base == BaseLoss::CB) apply_weight(r, cb_weight(spec.beta, prior.count(y)));
  return r;
}

const char* to_string(MarginApplication mode) noexcept {
  switch (mode) {
    case MarginApplication::None: return "none";
    case MarginApplication::AllPositives: return "all-positives";
    case MarginApplication::HardPositivesOnly: return "hard-positives";
  }
  return "none";
}

const char* to_string(MarginGradient mode) noexcept {
  return mode == MarginGradient::Detached ? "detached" : "through";
}

MarginApplication parse_margin_application(std::string_view text) {
  if (text == "none") return MarginApplication::None;
  if (text == "all-positives") return MarginApplication::AllPositives;
  if (text == "hard-positives") return MarginApplication::HardPositivesOnly;
  throw Error(ErrorKind::InvalidConfig, "unknown margin application '" + std::string(text) + "'");
}

MarginGradient parse_margin_gradient(std::string_view text) {
  if (text == "detached") return MarginGradient::Detached;
  if (text == "through") return MarginGradient::Through;
  throw Error(ErrorKind::InvalidConfig, "unknown margin gradient mode '" + std::string(text) + "'");
}

}  // namespace dbm
