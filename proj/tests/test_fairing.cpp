#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "wjmix/fairing.hpp"
#include "wjmix/graph.hpp"

using namespace wjmix;

namespace {

FairingProblem random_problem(Rng& rng, std::size_t n, std::size_t f, double s, double omega = 1.0) {
  const SkeletonGraph g = random_connected_graph(rng, n, rng.below(n));
  return FairingProblem::make(build_operators(g).laplacian, normal(rng, 1.0, n, f), s, omega);
}

}  // namespace

TEST_CASE("problem construction derives alpha and checks inputs") {
  const Matrix l = build_operators(human36m_topology()).laplacian;
  const FairingProblem p = FairingProblem::make(l, Matrix(16, 2, 1.0), 9.0);
  CHECK(p.alpha == doctest::Approx(0.1));
  CHECK(p.omega_upper_bound() == doctest::Approx(2.0 / 1.9));
  CHECK(p.omega_in_convergence_range());
  CHECK_THROWS(FairingProblem::make(l, Matrix(15, 2), 1.0));
  CHECK_THROWS(FairingProblem::make(l, Matrix(16, 2), 0.0));
  CHECK_THROWS(FairingProblem::make(l, Matrix(16, 2), -1.0));
  CHECK_FALSE(FairingProblem::make(l, Matrix(16, 2), 1.0, 1.5).omega_in_convergence_range());
}

TEST_CASE("one Jacobi step matches the componentwise update") {
  Rng rng(1);
  const FairingProblem p = random_problem(rng, 7, 3, 2.0, 0.8);
  const Matrix h = normal(rng, 1.0, 7, 3);
  // H' = H + ω D⁻¹ (X − (I + sL) H), D = (1 + s) I.
  const Matrix sys = add(Matrix::identity(7), scale(p.laplacian, p.s));
  const Matrix r = sub(p.signal, oracle::matmul(sys, h));
  const Matrix expect = add(h, scale(r, p.omega / (1.0 + p.s)));
  CHECK(max_abs_diff(jacobi_step(p, h), expect) < 1e-13);
}

TEST_CASE("direct solve satisfies the system") {
  Rng rng(2);
  const FairingProblem p = random_problem(rng, 12, 4, 5.0);
  const Matrix h = solve_direct(p);
  const Matrix sys = add(Matrix::identity(12), scale(p.laplacian, p.s));
  CHECK(max_abs_diff(oracle::matmul(sys, h), p.signal) < 1e-12);
  CHECK(fairing_residual(p, h) < 1e-14);
}

TEST_CASE("lu_solve on a small system needing pivoting") {
  const Matrix a = Matrix::from_rows({{0, 2, 1}, {1, 1, 0}, {3, 0, 1}});
  const Matrix b = Matrix::from_rows({{5}, {3}, {6}});
  const Matrix x = lu_solve(a, b);
  CHECK(x(0, 0) == doctest::Approx(1.4));
  CHECK(x(1, 0) == doctest::Approx(1.6));
  CHECK(x(2, 0) == doctest::Approx(1.8));
  CHECK_THROWS_AS(lu_solve(Matrix::from_rows({{1, 2}, {2, 4}}), Matrix(2, 1, 1.0)), std::domain_error);
}

TEST_CASE("Jacobi agrees with direct solve") {
  Rng rng(3);
  for (double s : {1.0, 9.0, 99.0}) {
    const FairingProblem p = random_problem(rng, 20, 5, s);
    const SolveReport r = solve_jacobi(p, 1e-10, 100000);
    CHECK(r.final_residual <= 1e-10);
    CHECK(oracle::rel_frobenius(r.solution, solve_direct(p)) < 1e-8);
  }
}

TEST_CASE("skeleton fairing with s=9 and omega=1") {
  Rng rng(4);
  const Matrix l = build_operators(human36m_topology()).laplacian;
  const FairingProblem p = FairingProblem::make(l, normal(rng, 1.0, 16, 3), 9.0, 1.0);
  const SolveReport r = solve_jacobi(p);
  CHECK(oracle::rel_frobenius(r.solution, solve_direct(p)) < 1e-8);
}

TEST_CASE("near-identity system converges immediately") {
  Rng rng(5);
  const Matrix l = build_operators(human36m_topology()).laplacian;
  const FairingProblem p = FairingProblem::make(l, normal(rng, 1.0, 16, 3), 1e-12);
  CHECK(solve_jacobi(p).iterations <= 2);
}

TEST_CASE("spectral radius matches the eigenvalue formula") {
  Rng rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    const double omega = rng.uniform(0.1, 1.3);
    const FairingProblem p = random_problem(rng, 4 + rng.below(20), 2, rng.uniform(0.5, 50.0), omega);
    const Matrix a_hat = sub(Matrix::identity(p.laplacian.rows()), p.laplacian);
    double rho = 0.0;
    for (double mu : oracle::symmetric_eigen(a_hat).values)
      rho = std::max(rho, std::abs(1.0 - omega + (1.0 - p.alpha) * omega * mu));
    CHECK(iteration_spectral_radius(p) == doctest::Approx(rho).epsilon(1e-10));
  }
}

TEST_CASE("omega beyond the bound diverges on a tree") {
  Rng rng(7);
  const SkeletonGraph g = random_connected_graph(rng, 10, 0);
  const FairingProblem p =
      FairingProblem::make(build_operators(g).laplacian, normal(rng, 1.0, 10, 2), 1.0, 2.0 / 1.5 + 0.1);
  CHECK(iteration_spectral_radius(p) >= 1.0);
  CHECK_THROWS_AS(solve_jacobi(p, 1e-8, 5000), ConvergenceError);
}

TEST_CASE("iteration cap is reported") {
  Rng rng(8);
  const FairingProblem p = random_problem(rng, 16, 2, 99.0);
  try {
    solve_jacobi(p, 1e-12, 3);
    FAIL("expected ConvergenceError");
  } catch (const ConvergenceError& e) {
    CHECK(e.iterations() == 3);
    CHECK(e.residual() > 1e-12);
  }
}

TEST_CASE("fairing lowers the Dirichlet energy") {
  Rng rng(9);
  const FairingProblem p = random_problem(rng, 16, 3, 4.0);
  const Matrix h = solve_direct(p);
  CHECK(dirichlet_energy(p.laplacian, h) < dirichlet_energy(p.laplacian, p.signal));
  CHECK(dirichlet_energy(p.laplacian, h) >= 0.0);
}

TEST_CASE("zero signal stays zero") {
  const Matrix l = build_operators(human36m_topology()).laplacian;
  const FairingProblem p = FairingProblem::make(l, Matrix(16, 2), 3.0);
  const SolveReport r = solve_jacobi(p);
  CHECK(max_abs(r.solution) == 0.0);
}
