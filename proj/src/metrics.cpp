#include "wjmix/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

#include <Eigen/LU>
#include <Eigen/SVD>

namespace wjmix {

Matrix root_relative(const Matrix& pose, std::size_t root) {
  if (pose.cols() != 3 || root >= pose.rows())
    throw DimensionError("root_relative: pose " + to_string(pose.shape()) + " with root " +
                         std::to_string(root));
  Matrix out(pose.rows(), 3);
  for (std::size_t j = 0; j < pose.rows(); ++j)
    for (std::size_t k = 0; k < 3; ++k) out(j, k) = pose(j, k) - pose(root, k);
  return out;
}

std::vector<double> per_joint_errors(const Matrix& pred, const Matrix& gt) {
  if (pred.shape() != gt.shape() || pred.cols() != 3)
    throw DimensionError("per_joint_errors: " + to_string(pred.shape()) + " vs " +
                         to_string(gt.shape()));
  std::vector<double> e(pred.rows());
  for (std::size_t j = 0; j < pred.rows(); ++j) {
    const double dx = pred(j, 0) - gt(j, 0), dy = pred(j, 1) - gt(j, 1), dz = pred(j, 2) - gt(j, 2);
    e[j] = std::sqrt(dx * dx + dy * dy + dz * dz);
  }
  return e;
}

double mpjpe(const Matrix& pred, const Matrix& gt) {
  const auto e = per_joint_errors(pred, gt);
  double s = 0.0;
  for (double v : e) s += v;
  return e.empty() ? 0.0 : s / static_cast<double>(e.size());
}

Matrix procrustes_align(const Matrix& pred, const Matrix& gt) {
  if (pred.shape() != gt.shape() || pred.cols() != 3)
    throw DimensionError("procrustes_align: " + to_string(pred.shape()) + " vs " +
                         to_string(gt.shape()));
  const std::size_t n = pred.rows();
  if (n < 3) throw std::domain_error("procrustes_align: need at least 3 joints");
  Eigen::MatrixXd p(n, 3), g(n, 3);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t k = 0; k < 3; ++k) {
      p(j, k) = pred(j, k);
      g(j, k) = gt(j, k);
    }
  const Eigen::RowVector3d mp = p.colwise().mean();
  const Eigen::RowVector3d mg = g.colwise().mean();
  p.rowwise() -= mp;
  g.rowwise() -= mg;
  const double gnorm = g.squaredNorm();
  if (!(gnorm > 0.0)) throw std::domain_error("procrustes_align: ground-truth joints coincide");
  const double pnorm = p.squaredNorm();
  Matrix aligned(n, 3);
  if (!(pnorm > 0.0)) {
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = 0; k < 3; ++k) aligned(j, k) = mg(static_cast<Eigen::Index>(k));
    return aligned;
  }
  // Cross-covariance pᵀg = U Σ Vᵀ; R = V D Uᵀ with D fixing det(R) = +1.
  const Eigen::Matrix3d cov = p.transpose() * g;
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Matrix3d& u = svd.matrixU();
  const Eigen::Matrix3d& v = svd.matrixV();
  Eigen::Vector3d d(1.0, 1.0, (v * u.transpose()).determinant() < 0.0 ? -1.0 : 1.0);
  const Eigen::Matrix3d rot = v * d.asDiagonal() * u.transpose();
  const double s = svd.singularValues().dot(d) / pnorm;
  const Eigen::MatrixXd out = (s * (p * rot.transpose())).rowwise() + mg;
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t k = 0; k < 3; ++k)
      aligned(j, k) = out(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k));
  return aligned;
}

double pa_mpjpe(const Matrix& pred, const Matrix& gt) { return mpjpe(procrustes_align(pred, gt), gt); }

double pck(std::span<const double> errors, double threshold_mm) {
  if (!(threshold_mm >= 0.0)) throw std::invalid_argument("pck: threshold must be >= 0");
  if (errors.empty()) return 0.0;
  const auto hits = std::count_if(errors.begin(), errors.end(),
                                  [&](double e) { return e <= threshold_mm; });
  return static_cast<double>(hits) / static_cast<double>(errors.size());
}

std::vector<double> auc_thresholds() {
  std::vector<double> t(kAucPoints);
  for (std::size_t i = 0; i < kAucPoints; ++i) t[i] = kAucStepMm * static_cast<double>(i);
  return t;
}

double auc(std::span<const double> errors) {
  double s = 0.0;
  for (double t : auc_thresholds()) s += pck(errors, t);
  return s / static_cast<double>(kAucPoints);
}

double hard_pose_mean(std::span<const double> per_sample_mpjpe) {
  const std::size_t n = per_sample_mpjpe.size();
  if (n < 20)
    throw std::invalid_argument("hard_pose_mean: need at least 20 samples, got " + std::to_string(n));
  std::vector<double> sorted(per_sample_mpjpe.begin(), per_sample_mpjpe.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  const auto k = static_cast<std::size_t>(std::ceil(0.05 * static_cast<double>(n)));
  double s = 0.0;
  for (std::size_t i = 0; i < k; ++i) s += sorted[i];
  return s / static_cast<double>(k);
}

MetricsReport evaluate_poses(const std::vector<Matrix>& preds, const std::vector<Matrix>& gts,
                             std::size_t root) {
  if (preds.size() != gts.size())
    throw std::invalid_argument("evaluate_poses: prediction/ground-truth count mismatch");
  if (preds.empty()) throw std::invalid_argument("evaluate_poses: no samples");
  MetricsReport r;
  std::vector<double> joint_errors;
  double pa_sum = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const Matrix p = root_relative(preds[i], root);
    const Matrix g = root_relative(gts[i], root);
    const auto e = per_joint_errors(p, g);
    joint_errors.insert(joint_errors.end(), e.begin(), e.end());
    const double m = mpjpe(p, g);
    r.per_sample_errors.push_back(m);
    r.mpjpe_mm += m;
    pa_sum += pa_mpjpe(p, g);
  }
  const double n = static_cast<double>(preds.size());
  r.mpjpe_mm /= n;
  r.pa_mpjpe_mm = pa_sum / n;
  r.pck_150 = pck(joint_errors, kPckThresholdMm);
  r.auc = auc(joint_errors);
  for (double t : auc_thresholds()) r.pck_curve.push_back(pck(joint_errors, t));
  if (preds.size() >= 20) r.hard5_mpjpe_mm = hard_pose_mean(r.per_sample_errors);
  return r;
}

nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json j;
  j["mpjpe_mm"] = r.mpjpe_mm;
  j["pa_mpjpe_mm"] = r.pa_mpjpe_mm;
  j["pck_150"] = r.pck_150;
  j["auc"] = r.auc;
  j["hard5_mpjpe_mm"] = r.hard5_mpjpe_mm ? nlohmann::json(*r.hard5_mpjpe_mm) : nlohmann::json(nullptr);
  j["per_sample_errors"] = r.per_sample_errors;
  j["pck_curve"] = {{"thresholds_mm", auc_thresholds()}, {"pck", r.pck_curve}};
  return j;
}

}  // namespace wjmix
