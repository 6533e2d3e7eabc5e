#pragma once

// Finite-difference verification of the analytic gradients. The reference
// losses here are written independently of losses.cpp (forward formulas only)
// so a shared mistake cannot cancel out.

#include <cstdint>
#include <string>
#include <vector>

namespace dbm {

struct GradcheckOptions {
  int cases = 1000;        // per loss-level suite
  int model_cases = 1000;  // per model-level suite
  std::uint64_t seed = 0;
  /// Multiplies every analytic gradient by (1 + perturb); detector sanity only.
  double perturb = 0.0;
  double loss_tolerance = 1e-6;
  double model_tolerance = 1e-5;
  double loss_step = 1e-6;
  double model_step = 1e-5;
};

struct GradcheckEntry {
  std::string suite;  // e.g. "loss/dbm-bs/detached", "model/cosine/arcface"
  int cases = 0;
  double worst_error = 0.0;
  double tolerance = 0.0;
  bool passed = true;
};

struct GradcheckReport {
  std::vector<GradcheckEntry> entries;

  bool passed() const;
  double worst(const std::string& prefix) const;
};

/// Relative error ||a - n||_inf / max(||a||_inf, ||n||_inf, 1).
double gradient_error(const std::vector<double>& analytic, const std::vector<double>& numeric);

GradcheckReport run_gradcheck(const GradcheckOptions& options);

}  // namespace dbm
