#include "wjmix/fairing.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Eigenvalues>

namespace wjmix {
namespace {

Matrix system_matrix(const FairingProblem& p) {
  const std::size_t n = p.laplacian.rows();
  Matrix a = scale(p.laplacian, p.s);
  for (std::size_t i = 0; i < n; ++i) a(i, i) += 1.0;
  return a;
}

Matrix normalized_adjacency(const Matrix& laplacian) {
  return sub(Matrix::identity(laplacian.rows()), laplacian);
}

}  // namespace

FairingProblem FairingProblem::make(Matrix laplacian, Matrix signal, double s, double omega) {
  if (laplacian.rows() != laplacian.cols())
    throw DimensionError("fairing: Laplacian must be square, got " + to_string(laplacian.shape()));
  if (signal.rows() != laplacian.rows())
    throw DimensionError("fairing: signal " + to_string(signal.shape()) + " does not match " +
                         to_string(laplacian.shape()));
  if (!(s > 0.0) || !std::isfinite(s))
    throw std::invalid_argument("fairing: smoothing scale s must be positive and finite");
  if (!std::isfinite(omega)) throw std::invalid_argument("fairing: omega must be finite");
  FairingProblem p;
  p.laplacian = std::move(laplacian);
  p.signal = std::move(signal);
  p.s = s;
  p.alpha = 1.0 / (1.0 + s);
  p.omega = omega;
  return p;
}

Matrix jacobi_step(const FairingProblem& p, const Matrix& h) {
  if (h.shape() != p.signal.shape())
    throw DimensionError("jacobi_step: iterate " + to_string(h.shape()) + " vs signal " +
                         to_string(p.signal.shape()));
  const Matrix ah = matmul(normalized_adjacency(p.laplacian), h);
  Matrix next = sub(h, scale(h, p.omega));
  axpy_inplace(next, (1.0 - p.alpha) * p.omega, ah);
  axpy_inplace(next, p.alpha * p.omega, p.signal);
  return next;
}

double fairing_residual(const FairingProblem& p, const Matrix& h) {
  const Matrix r = sub(matmul(system_matrix(p), h), p.signal);
  const double xnorm = frobenius_norm(p.signal);
  const double rnorm = frobenius_norm(r);
  return xnorm > 0.0 ? rnorm / xnorm : rnorm;
}

SolveReport solve_jacobi(const FairingProblem& p, double tol, std::size_t max_iters) {
  if (!(tol > 0.0)) throw std::invalid_argument("solve_jacobi: tol must be positive");
  if (max_iters < 1) throw std::invalid_argument("solve_jacobi: max_iters must be >= 1");
  SolveReport report;
  report.solution = p.signal;
  report.final_residual = fairing_residual(p, report.solution);
  while (report.final_residual > tol) {
    if (report.iterations == max_iters)
      throw ConvergenceError("weighted Jacobi did not converge in " + std::to_string(max_iters) +
                                 " iterations (residual " + std::to_string(report.final_residual) +
                                 ")",
                             report.iterations, report.final_residual);
    report.solution = jacobi_step(p, report.solution);
    ++report.iterations;
    report.final_residual = fairing_residual(p, report.solution);
    if (!std::isfinite(report.final_residual))
      throw ConvergenceError("weighted Jacobi diverged after " + std::to_string(report.iterations) +
                                 " iterations",
                             report.iterations, report.final_residual);
  }
  return report;
}

Matrix lu_solve(Matrix a, Matrix b) {
  const std::size_t n = a.rows();
  if (a.cols() != n || b.rows() != n)
    throw DimensionError("lu_solve: " + to_string(a.shape()) + " with rhs " + to_string(b.shape()));
  const std::size_t m = b.cols();
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t pivot = k;
    for (std::size_t i = k + 1; i < n; ++i)
      if (std::abs(a(i, k)) > std::abs(a(pivot, k))) pivot = i;
    if (a(pivot, k) == 0.0) throw std::domain_error("lu_solve: singular matrix");
    if (pivot != k) {
      for (std::size_t j = 0; j < n; ++j) std::swap(a(k, j), a(pivot, j));
      for (std::size_t j = 0; j < m; ++j) std::swap(b(k, j), b(pivot, j));
    }
    for (std::size_t i = k + 1; i < n; ++i) {
      const double f = a(i, k) / a(k, k);
      if (f == 0.0) continue;
      for (std::size_t j = k; j < n; ++j) a(i, j) -= f * a(k, j);
      for (std::size_t j = 0; j < m; ++j) b(i, j) -= f * b(k, j);
    }
  }
  Matrix x(n, m);
  for (std::size_t ii = n; ii-- > 0;) {
    for (std::size_t j = 0; j < m; ++j) {
      double acc = b(ii, j);
      for (std::size_t k = ii + 1; k < n; ++k) acc -= a(ii, k) * x(k, j);
      x(ii, j) = acc / a(ii, ii);
    }
  }
  return x;
}

Matrix solve_direct(const FairingProblem& p) {
  if (p.laplacian.rows() > 10000)
    throw std::invalid_argument("solve_direct: N > 10000 is too large for a dense solve");
  return lu_solve(system_matrix(p), p.signal);
}

double iteration_spectral_radius(const FairingProblem& p) {
  const std::size_t n = p.laplacian.rows();
  if (n > 512) throw std::invalid_argument("iteration_spectral_radius: N > 512");
  const Matrix adj = normalized_adjacency(p.laplacian);
  Eigen::MatrixXd m(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      m(i, j) = (i == j ? 1.0 - p.omega : 0.0) + (1.0 - p.alpha) * p.omega * adj(i, j);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m, Eigen::EigenvaluesOnly);
  return eig.eigenvalues().cwiseAbs().maxCoeff();
}

double dirichlet_energy(const Matrix& laplacian, const Matrix& h) {
  const Matrix lh = matmul(laplacian, h);
  double e = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i) e += h.data()[i] * lh.data()[i];
  return e;
}

}  // namespace wjmix
