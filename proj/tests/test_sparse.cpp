#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "pnrecon/elliptic.hpp"
#include "pnrecon/errors.hpp"
#include "pnrecon/sparse.hpp"

using namespace pnrecon;

namespace {

ScalarField random_gamma(const Grid& g, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(1.0, 2.0);
  ScalarField f(g);
  for (double& v : f.values()) v = u(rng);
  return f;
}

}  // namespace

TEST_CASE("identity system returns its right-hand side") {
  SparseSystem s(4);
  for (std::size_t i = 0; i < 4; ++i) s.add(i, i, 1.0);
  s.rhs = {1.0, -2.0, 3.5, 0.25};
  CHECK(solve(s) == s.rhs);
  CHECK(solve(s, {1e-12, SolveMethod::Iterative}) == s.rhs);
}

TEST_CASE("random 8x8 grid system matches dense elimination") {
  Grid g(8, 8);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const ScalarField gamma = random_gamma(g, seed);
    const BoundarySpec spec = BoundarySpec::standard();
    DirichletData d = DirichletData::zeros(g, spec);
    for (double& v : d.source) v = u(rng);
    const SparseSystem s = ConductivityOperator(gamma, spec).assemble(d);
    const auto ref = oracle::gauss_solve(s);
    const auto direct = solve(s, {1e-12, SolveMethod::Direct});
    const auto iter = solve(s, {1e-13, SolveMethod::Iterative});
    for (std::size_t i = 0; i < s.n; ++i) {
      CHECK(direct[i] == doctest::Approx(ref[i]).epsilon(1e-10));
      CHECK(std::abs(iter[i] - ref[i]) < 1e-10);
    }
    CHECK(relative_residual(s, direct) < 1e-12);
  }
}

TEST_CASE("homogeneous system has the zero solution") {
  Grid g(6, 6);
  const BoundarySpec spec = BoundarySpec::standard();
  const SparseSystem s =
      ConductivityOperator(random_gamma(g, 9), spec).assemble(DirichletData::zeros(g, spec));
  for (double v : solve(s, {1e-10, SolveMethod::Direct})) CHECK(v == 0.0);
  for (double v : solve(s, {1e-10, SolveMethod::Iterative})) CHECK(v == 0.0);
}

TEST_CASE("iteration cap surfaces the final residual") {
  Grid g(20, 20);
  const BoundarySpec spec = BoundarySpec::standard();
  const SparseSystem s =
      ConductivityOperator(random_gamma(g, 2), spec).assemble(DirichletData::constant(g, spec, 1.0));
  try {
    solve(s, {1e-14, SolveMethod::Iterative, 0, 3});
    FAIL("expected SolverError");
  } catch (const SolverError& e) {
    CHECK(e.residual() > 1e-14);
  }
  CHECK_THROWS_AS(solve(s, {0.0}), InvalidInput);
}

TEST_CASE("diagonal dominance check") {
  SparseSystem ok(2);
  ok.add(0, 0, 2.0);
  ok.add(0, 1, -1.0);
  ok.add(1, 0, -1.0);
  ok.add(1, 1, 1.0);
  CHECK(is_diagonally_dominant(ok));

  SparseSystem singular(2);
  singular.add(0, 0, 1.0);
  singular.add(0, 1, -1.0);
  singular.add(1, 0, -1.0);
  singular.add(1, 1, 1.0);
  CHECK_FALSE(is_diagonally_dominant(singular));

  SparseSystem weak(1);
  weak.add(0, 0, 0.5);
  weak.rows[0].emplace_back(0, 0.0);
  CHECK(is_diagonally_dominant(weak));
}

TEST_CASE("banded LU reproduces a nonsymmetric dominant system") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const std::size_t n = 30;
  SparseSystem s(n);
  for (std::size_t i = 0; i < n; ++i) {
    double off = 0.0;
    for (std::size_t j : {i >= 3 ? i - 3 : n, i + 1, i + 5}) {
      if (j >= n) continue;
      const double v = u(rng);
      s.add(i, j, v);
      off += std::abs(v);
    }
    s.add(i, i, off + 0.1);
    s.rhs[i] = u(rng);
  }
  const auto x = BandedLU(s).solve(s.rhs);
  const auto ref = oracle::gauss_solve(s);
  for (std::size_t i = 0; i < n; ++i) CHECK(x[i] == doctest::Approx(ref[i]).epsilon(1e-12));
}
