#pragma once

// Central finite-difference audits of the hand-written backward passes.
//
// Probe loss: L = Σ w_ij·y_ij² over the layer output y, with fixed weights
// w_ij ~ U(0.5, 1.5). Per-entry relative error is
// |a − n| / max(1e-8, |a| + |n|) with a analytic and n numeric.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wjmix/tensor.hpp"

namespace wjmix {

inline constexpr double kGradcheckStep = 1e-5;

struct GradTarget {
  std::string name;
  Matrix* value;           // perturbed in place
  const Matrix* analytic;  // filled by the backward callback
};

struct TargetError {
  std::string name;
  std::size_t entries = 0;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
};

struct GradcheckReport {
  std::string layer;
  std::uint64_t seed = 0;
  double threshold = 0.0;
  std::vector<TargetError> targets;

  double max_rel_error() const;
  bool passed() const { return max_rel_error() < threshold; }
};

nlohmann::json to_json(const GradcheckReport& r);

// `forward` recomputes the output from the current target values.
// `backward` receives dL/dy and must fill every target's analytic gradient.
GradcheckReport gradcheck(const std::string& layer, const std::function<Matrix()>& forward,
                          const std::function<void(const Matrix&)>& backward,
                          const std::vector<GradTarget>& targets, Rng& rng, double threshold,
                          double step = kGradcheckStep);

double relative_error(double analytic, double numeric);

// Individual layer audits on small shapes.
GradcheckReport audit_embedding(std::uint64_t seed);
GradcheckReport audit_gelu(std::uint64_t seed);
GradcheckReport audit_layernorm(std::uint64_t seed);
GradcheckReport audit_batchnorm(std::uint64_t seed);
GradcheckReport audit_dropout(std::uint64_t seed);
GradcheckReport audit_wj_layer(std::uint64_t seed);
GradcheckReport audit_joint_mixing(std::uint64_t seed);
GradcheckReport audit_graphwj_block(std::uint64_t seed);
GradcheckReport audit_head(std::uint64_t seed);
GradcheckReport audit_pose_loss(std::uint64_t seed);
// End to end: N=4, T=3, L=1, F=3, R=5, B=2, every parameter and the input.
GradcheckReport audit_model(std::uint64_t seed);

std::vector<GradcheckReport> run_audit_suite(std::uint64_t seed);

}  // namespace wjmix
