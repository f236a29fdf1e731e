#pragma once

// Pose evaluation metrics. All distances are in millimetres.
//
// Conventions: poses are made root-relative before any metric; the root
// joint stays in the per-joint average. PCK counts errors <= threshold.
// AUC is the mean PCK over thresholds 0, 5, ..., 150 mm (31 points).

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "wjmix/tensor.hpp"

namespace wjmix {

inline constexpr double kPckThresholdMm = 150.0;
inline constexpr double kAucStepMm = 5.0;
inline constexpr std::size_t kAucPoints = 31;

Matrix root_relative(const Matrix& pose, std::size_t root);

std::vector<double> per_joint_errors(const Matrix& pred, const Matrix& gt);
double mpjpe(const Matrix& pred, const Matrix& gt);

// Similarity transform s·R·p + t (s > 0, R ∈ SO(3)) of `pred` minimizing the
// squared distance to `gt`; returns the aligned prediction. Throws
// std::domain_error when gt has fewer than 3 joints or all gt joints coincide.
Matrix procrustes_align(const Matrix& pred, const Matrix& gt);
double pa_mpjpe(const Matrix& pred, const Matrix& gt);

double pck(std::span<const double> errors, double threshold_mm = kPckThresholdMm);
double auc(std::span<const double> errors);
std::vector<double> auc_thresholds();

// Mean of the ceil(5%·n) largest values. Needs at least 20 samples.
double hard_pose_mean(std::span<const double> per_sample_mpjpe);

struct MetricsReport {
  double mpjpe_mm = 0.0;
  double pa_mpjpe_mm = 0.0;
  double pck_150 = 0.0;
  double auc = 0.0;
  std::optional<double> hard5_mpjpe_mm;  // absent below 20 samples
  std::vector<double> per_sample_errors;
  std::vector<double> pck_curve;  // PCK at each AUC threshold
};

// Predictions and ground truth in millimetres, one N×3 matrix per sample.
MetricsReport evaluate_poses(const std::vector<Matrix>& preds, const std::vector<Matrix>& gts,
                             std::size_t root);

nlohmann::json to_json(const MetricsReport& r);

}  // namespace wjmix
