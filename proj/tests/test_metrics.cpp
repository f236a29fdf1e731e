#include <doctest.h>

#include <cmath>
#include <numbers>

#include "oracles.hpp"
#include "wjmix/metrics.hpp"

using namespace wjmix;

namespace {

Matrix rotation(double yaw, double pitch, double roll) {
  const double cy = std::cos(yaw), sy = std::sin(yaw), cp = std::cos(pitch), sp = std::sin(pitch),
               cr = std::cos(roll), sr = std::sin(roll);
  const Matrix rz = Matrix::from_rows({{cy, -sy, 0}, {sy, cy, 0}, {0, 0, 1}});
  const Matrix ry = Matrix::from_rows({{cp, 0, sp}, {0, 1, 0}, {-sp, 0, cp}});
  const Matrix rx = Matrix::from_rows({{1, 0, 0}, {0, cr, -sr}, {0, sr, cr}});
  return oracle::matmul(oracle::matmul(rz, ry), rx);
}

Matrix similarity(const Matrix& p, const Matrix& r, double s, double tx, double ty, double tz) {
  Matrix out = oracle::matmul(p, oracle::transpose(r));
  for (std::size_t i = 0; i < out.rows(); ++i) {
    out(i, 0) = s * out(i, 0) + tx;
    out(i, 1) = s * out(i, 1) + ty;
    out(i, 2) = s * out(i, 2) + tz;
  }
  return out;
}

double sse(const Matrix& a, const Matrix& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a.data()[i] - b.data()[i]) * (a.data()[i] - b.data()[i]);
  return s;
}

}  // namespace

TEST_CASE("mpjpe 3-4-5") {
  CHECK(mpjpe(Matrix::from_rows({{3, 4, 0}}), Matrix::from_rows({{0, 0, 0}})) == 5.0);
  const Matrix pred = Matrix::from_rows({{0, 0, 0}, {3, 4, 0}, {0, 0, 12}});
  const Matrix gt = Matrix::from_rows({{0, 0, 0}, {0, 0, 0}, {0, 5, 0}});
  CHECK(mpjpe(pred, gt) == doctest::Approx(6.0));
  CHECK_THROWS_AS(mpjpe(pred, Matrix(2, 3)), DimensionError);
}

TEST_CASE("root relative subtracts the root row") {
  const Matrix p = Matrix::from_rows({{1, 2, 3}, {4, 6, 8}});
  CHECK(root_relative(p, 0) == Matrix::from_rows({{0, 0, 0}, {3, 4, 5}}));
  CHECK(root_relative(p, 1) == Matrix::from_rows({{-3, -4, -5}, {0, 0, 0}}));
  CHECK_THROWS(root_relative(p, 2));
}

TEST_CASE("procrustes undoes a similarity transform") {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix gt = normal(rng, 300.0, 16, 3);
    const Matrix r = rotation(rng.uniform(-3, 3), rng.uniform(-1.5, 1.5), rng.uniform(-3, 3));
    const Matrix pred = similarity(gt, r, rng.uniform(0.3, 3.0), rng.normal(0, 500), rng.normal(0, 500),
                                   rng.normal(0, 500));
    CHECK(pa_mpjpe(pred, gt) <= 1e-9);
  }
}

TEST_CASE("procrustes matches the quaternion closed form") {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const Matrix gt = normal(rng, 1.0, 4 + rng.below(13), 3);
    const Matrix pred = add(gt, normal(rng, 0.5, gt.rows(), 3));
    CHECK(max_abs_diff(procrustes_align(pred, gt), oracle::procrustes(pred, gt)) < 1e-9);
  }
}

TEST_CASE("procrustes never reflects") {
  const Matrix gt = Matrix::from_rows({{1, 0, 0}, {0, 2, 0}, {0, 0, 3}, {1, 1, 1}});
  Matrix mirrored = gt;
  for (std::size_t i = 0; i < 4; ++i) mirrored(i, 2) = -mirrored(i, 2);
  CHECK(pa_mpjpe(mirrored, gt) > 0.1);
}

TEST_CASE("pa-mpjpe versus mpjpe") {
  Rng rng(3);
  int holds = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Matrix gt = root_relative(normal(rng, 200.0, 16, 3), 0);
    const Matrix pred = root_relative(normal(rng, 200.0, 16, 3), 0);
    const Matrix aligned = procrustes_align(pred, gt);
    // The alignment minimizes squared error, so this always holds.
    CHECK(sse(aligned, gt) <= sse(pred, gt) * (1.0 + 1e-12));
    if (pa_mpjpe(pred, gt) <= mpjpe(pred, gt)) ++holds;
  }
  CHECK(holds == 1000);
  // Not a theorem for the mean distance: one outlier on a cube.
  const Matrix cube = Matrix::from_rows(
      {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {1, 1, 0}, {1, 0, 1}, {0, 1, 1}, {1, 1, 1}});
  Matrix outlier = cube;
  outlier(0, 0) = 3.0;
  CHECK(mpjpe(outlier, cube) == doctest::Approx(0.375));
  CHECK(pa_mpjpe(outlier, cube) > mpjpe(outlier, cube));
}

TEST_CASE("procrustes degenerate inputs") {
  CHECK_THROWS_AS(procrustes_align(Matrix(2, 3), Matrix(2, 3)), std::domain_error);
  CHECK_THROWS_AS(procrustes_align(Matrix::from_rows({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}), Matrix(3, 3, 2.0)),
                  std::domain_error);
  const Matrix gt = Matrix::from_rows({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
  const Matrix aligned = procrustes_align(Matrix(3, 3, 5.0), gt);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t k = 0; k < 3; ++k) CHECK(aligned(i, k) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("pck and auc") {
  const std::vector<double> one{75.0};
  CHECK(auc(one) == doctest::Approx(16.0 / 31.0).epsilon(1e-15));
  CHECK(pck(one, 75.0) == 1.0);
  CHECK(pck(one, 74.999) == 0.0);
  const std::vector<double> e{10, 150, 151, 400};
  CHECK(pck(e) == 0.5);
  CHECK(auc(std::vector<double>{0.0}) == 1.0);
  CHECK(auc(std::vector<double>{1000.0}) == 0.0);
  const auto t = auc_thresholds();
  CHECK(t.size() == 31);
  CHECK(t.front() == 0.0);
  CHECK(t.back() == 150.0);
  CHECK_THROWS(pck(e, -1.0));
}

TEST_CASE("hard pose mean") {
  std::vector<double> v(20);
  for (std::size_t i = 0; i < 20; ++i) v[i] = static_cast<double>(i);
  CHECK(hard_pose_mean(v) == 19.0);
  v.push_back(100.0);
  CHECK(hard_pose_mean(v) == doctest::Approx((100.0 + 19.0) / 2.0));
  CHECK_THROWS(hard_pose_mean(std::vector<double>(19, 1.0)));
}

TEST_CASE("evaluate_poses report") {
  Rng rng(4);
  std::vector<Matrix> preds, gts;
  for (int i = 0; i < 25; ++i) {
    gts.push_back(normal(rng, 300.0, 16, 3));
    preds.push_back(add(gts.back(), normal(rng, 40.0, 16, 3)));
  }
  const MetricsReport r = evaluate_poses(preds, gts, 0);
  CHECK(r.per_sample_errors.size() == 25);
  double m = 0.0;
  for (int i = 0; i < 25; ++i) m += mpjpe(root_relative(preds[i], 0), root_relative(gts[i], 0)) / 25.0;
  CHECK(r.mpjpe_mm == doctest::Approx(m).epsilon(1e-14));
  CHECK(r.pa_mpjpe_mm <= r.mpjpe_mm);
  CHECK(r.hard5_mpjpe_mm.has_value());
  CHECK(r.pck_curve.size() == 31);
  CHECK(r.pck_curve.back() == r.pck_150);
  const auto j = to_json(r);
  for (const char* key : {"mpjpe_mm", "pa_mpjpe_mm", "pck_150", "auc", "hard5_mpjpe_mm"}) CHECK(j.contains(key));
  CHECK(j["pck_curve"]["thresholds_mm"].size() == 31);

  preds.resize(5);
  gts.resize(5);
  const auto small = to_json(evaluate_poses(preds, gts, 0));
  CHECK(small["hard5_mpjpe_mm"].is_null());
  CHECK_THROWS(evaluate_poses(preds, {}, 0));
}
