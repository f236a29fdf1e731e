#pragma once

// Implicit fairing on a graph: solve (I + sL) H = X.
//
// Because the graph has no self-loops, diag(I + sL) = (1 + s) I, and the
// weighted Jacobi iterate reduces to
//
//   H' = H - ωH + (1 - α) ω Â H + α ω X,   α = 1 / (1 + s),  Â = I - L.
//
// Its iteration matrix (1 - ω) I + (1 - α) ω Â has eigenvalues
// 1 - ω + (1 - α) ω μ for μ in spec(Â) ⊂ [-1, 1], so 0 < ω < 2 / (2 - α)
// is sufficient for convergence.

#include <cstddef>
#include <stdexcept>

#include "wjmix/tensor.hpp"

namespace wjmix {

class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, std::size_t iterations, double residual)
      : std::runtime_error(what), iterations_(iterations), residual_(residual) {}
  std::size_t iterations() const { return iterations_; }
  double residual() const { return residual_; }

 private:
  std::size_t iterations_;
  double residual_;
};

struct FairingProblem {
  Matrix laplacian;  // N×N, normalized Laplacian I - Â
  Matrix signal;     // N×F
  double s = 1.0;
  double alpha = 0.5;
  double omega = 1.0;

  // Validates shapes and s > 0; derives alpha = 1 / (1 + s). Any finite
  // omega is accepted here; see omega_upper_bound().
  static FairingProblem make(Matrix laplacian, Matrix signal, double s, double omega = 1.0);

  // 2 / (2 - α): supremum of the guaranteed-convergent relaxation range.
  double omega_upper_bound() const { return 2.0 / (2.0 - alpha); }
  bool omega_in_convergence_range() const { return omega > 0.0 && omega < omega_upper_bound(); }
};

struct SolveReport {
  Matrix solution;
  std::size_t iterations = 0;
  double final_residual = 0.0;  // ‖(I+sL)H - X‖_F / ‖X‖_F
};

struct SolverDefaults {
  static constexpr double omega = 1.0;
  static constexpr double tol = 1e-8;
  static constexpr std::size_t max_iters = 10000;
};

Matrix jacobi_step(const FairingProblem& problem, const Matrix& h);

// Relative residual of a candidate solution (absolute when X = 0).
double fairing_residual(const FairingProblem& problem, const Matrix& h);

// Iterates from H⁽⁰⁾ = X until the relative residual is <= tol. Throws
// ConvergenceError if max_iters is exhausted or the iterate stops being finite.
SolveReport solve_jacobi(const FairingProblem& problem, double tol = SolverDefaults::tol,
                         std::size_t max_iters = SolverDefaults::max_iters);

// Dense LU with partial pivoting on I + sL.
Matrix solve_direct(const FairingProblem& problem);

// ρ((1 - ω) I + (1 - α) ω Â) by dense symmetric eigensolve. N <= 512.
double iteration_spectral_radius(const FairingProblem& problem);

// tr(Hᵀ L H)
double dirichlet_energy(const Matrix& laplacian, const Matrix& h);

// Solves a·x = b (b may have several columns) by Gaussian elimination with
// partial pivoting. Throws std::domain_error on a singular pivot.
Matrix lu_solve(Matrix a, Matrix b);

}  // namespace wjmix
