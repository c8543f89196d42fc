#include <cmath>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "pnrecon/elliptic.hpp"
#include "pnrecon/errors.hpp"

using namespace pnrecon;

namespace {

BoundarySpec all_dirichlet() {
  BoundarySpec s;
  s.set(Edge::Top, BoundaryLabel::Source);
  s.set(Edge::Left, BoundaryLabel::Source);
  s.set(Edge::Right, BoundaryLabel::Source);
  s.set(Edge::Bottom, BoundaryLabel::Measure);
  return s;
}

ScalarField smooth_gamma(const Grid& g) {
  return ScalarField::sample(g, [](double x, double y) {
    return 1.5 + 0.3 * std::sin(3.0 * x + 1.0) * std::cos(2.0 * y);
  });
}

std::vector<double> random_source(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> s(n);
  for (double& v : s) v = u(rng);
  return s;
}

}  // namespace

TEST_CASE("unit conductivity gives the standard 5-point stencil") {
  Grid g(3, 3);
  const BoundarySpec spec = all_dirichlet();
  ConductivityOperator op(ScalarField(g, 1.0), spec);
  REQUIRE(op.unknowns() == 1);
  DirichletData d = DirichletData::zeros(g, spec);
  for (std::size_t k = 0; k < d.source.size(); ++k) d.source[k] = 1.0 + k;
  const SparseSystem s = op.assemble(d);
  CHECK(s.coeff(0, 0) == doctest::Approx(4.0));
  // rhs = sum of the four edge-midpoint neighbours.
  const ScalarField u = op.solve(d, SolveKind::Forward);
  const double neighbours = u(1, 0) + u(0, 1) + u(2, 1) + u(1, 2);
  CHECK(s.rhs[0] == doctest::Approx(neighbours));
  CHECK(4.0 * u(1, 1) == doctest::Approx(neighbours));
}

TEST_CASE("face conductance is the harmonic mean") {
  CHECK(harmonic_mean(1.0, 2.0) == doctest::Approx(4.0 / 3.0));
  Grid g(5, 5);
  ScalarField gamma(g, 1.0);
  gamma(2, 1) = 2.0;
  ConductivityOperator op(gamma, all_dirichlet());
  const SparseSystem s = op.assemble(DirichletData::zeros(g, all_dirichlet()));
  // Unknowns are the 3x3 interior in node order; (1,1) -> 0, (2,1) -> 1.
  CHECK(s.coeff(0, 1) == doctest::Approx(-4.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("assembled matrices are diagonally dominant and symmetric") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(1.0, 2.0);
  for (int trial = 0; trial < 20; ++trial) {
    Grid g(3 + trial % 9, 3 + (trial * 5) % 8);
    ScalarField gamma(g);
    for (double& v : gamma.values()) v = u(rng);
    const BoundarySpec spec = trial % 2 ? BoundarySpec::standard() : all_dirichlet();
    const SparseSystem s = ConductivityOperator(gamma, spec).assemble(DirichletData::zeros(g, spec));
    CHECK(is_diagonally_dominant(s));
    for (std::size_t i = 0; i < s.n; ++i)
      for (const auto& [c, v] : s.rows[i]) CHECK(s.coeff(c, i) == v);
  }
}

TEST_CASE("conductivity outside the admissible range is rejected") {
  Grid g(4, 4);
  ScalarField gamma(g, 1.5);
  gamma(1, 1) = 2.5;
  CHECK_THROWS_AS(ConductivityOperator(gamma, BoundarySpec::standard()), InvalidInput);
  gamma(1, 1) = 0.5;
  CHECK_THROWS_AS(ConductivityOperator(gamma, BoundarySpec::standard()), InvalidInput);
}

TEST_CASE("linear field: unit current through the grounded contact") {
  Grid g(9, 9);
  const BoundarySpec spec = BoundarySpec::standard();
  ConductivityOperator op(ScalarField(g, 1.0), spec);
  const ForwardSolution sol = solve_forward(op, std::vector<double>(g.nx(), 1.0));
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i) CHECK(sol.u(i, j) == doctest::Approx(g.y(j)).epsilon(1e-13));
  for (double c : sol.trace) CHECK(c == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("two-layer medium matches the series-conductance closed form") {
  // Interface halfway between node rows: the face straddling it sees exactly
  // the harmonic average of the two layers, so the scheme is exact.
  for (int n : {12, 32}) {
    Grid g(n, n);
    const double c = 0.5 * (g.y(n / 2 - 1) + g.y(n / 2));
    ScalarField gamma = ScalarField::sample(g, [c](double, double y) { return y < c ? 1.0 : 2.0; });
    ConductivityOperator op(gamma, BoundarySpec::standard());
    const ForwardSolution sol = solve_forward(op, std::vector<double>(n, 1.0));
    // s1 c + s2 (1 - c) = 1 with 1 * s1 = 2 * s2.
    const double s2 = 1.0 / (1.0 + c), s1 = 2.0 * s2;
    for (int j = 0; j < n; ++j) {
      const double y = g.y(j);
      const double exact = y < c ? s1 * y : s1 * c + s2 * (y - c);
      CHECK(std::abs(sol.u(n / 3, j) - exact) < 1e-10);
    }
    for (double cur : sol.trace) CHECK(std::abs(cur - s1) < 1e-10);
    if (n == 32) {
      CHECK(std::abs(s1 * 0.5 - 2.0 / 3.0) < 1e-15);
      CHECK(std::abs(s1 - 4.0 / 3.0) < 1e-15);
    }
  }
}

TEST_CASE("zero source drives zero current") {
  Grid g(10, 10);
  const auto cur = dtn_apply(smooth_gamma(g), BoundarySpec::standard(), std::vector<double>(10, 0.0));
  for (double c : cur) CHECK(c == 0.0);
}

TEST_CASE("DtN map is linear, conservative and obeys the maximum principle") {
  Grid g(21, 17);
  const BoundarySpec spec = BoundarySpec::standard();
  ForwardConfig cfg;
  cfg.solver.method = SolveMethod::Direct;
  ConductivityOperator op(smooth_gamma(g), spec, cfg);
  const auto u1 = random_source(g.nx(), 1), u2 = random_source(g.nx(), 2);
  std::vector<double> mix(u1.size());
  for (std::size_t k = 0; k < mix.size(); ++k) mix[k] = 0.7 * u1[k] - 1.3 * u2[k];
  const auto t1 = solve_forward(op, u1).trace, t2 = solve_forward(op, u2).trace;
  const auto tm = solve_forward(op, mix).trace;
  for (std::size_t k = 0; k < tm.size(); ++k)
    CHECK(std::abs(tm[k] - (0.7 * t1[k] - 1.3 * t2[k])) < 1e-10);

  const ForwardSolution sol = solve_forward(op, u1);
  const auto in = op.outward_current(sol.u, BoundaryLabel::Source);
  double out_total = 0.0, in_total = 0.0;
  for (std::size_t k = 0; k < sol.trace.size(); ++k) out_total += op.measure_weights()[k] * sol.trace[k];
  const auto& src = op.source_nodes();
  for (std::size_t k = 0; k < src.size(); ++k)
    in_total -= boundary_segment_length(g, spec, src[k], BoundaryLabel::Source) * in[k];
  CHECK(std::abs(out_total - in_total) < 1e-10);

  for (double v : sol.u.values()) {
    CHECK(v >= -1e-12);
    CHECK(v <= 1.0 + 1e-12);
  }
}

TEST_CASE("discrete adjoint is the transpose of the linearized current") {
  Grid g(13, 11);
  const BoundarySpec spec = BoundarySpec::standard();
  ConductivityOperator op(smooth_gamma(g), spec);
  const ForwardSolution fwd = solve_forward(op, random_source(g.nx(), 4));
  std::mt19937_64 rng(8);
  std::normal_distribution<double> nd;
  std::vector<double> r(op.measure_nodes().size());
  for (double& v : r) v = nd(rng);
  ScalarField h(g);
  for (double& v : h.values()) v = nd(rng);

  DirichletData adj = DirichletData::zeros(g, spec);
  adj.measure = r;
  const ScalarField p = op.solve(adj, SolveKind::Adjoint);
  const ScalarField w = op.misfit_gradient(fwd.u, p);
  const double lhs = trace_inner(op.measure_weights(), op.linearized_current(fwd.u, h), r);
  const double rhs = inner(w, h);
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
}

TEST_CASE("linearized current matches finite differences of the DtN map") {
  Grid g(12, 12);
  const BoundarySpec spec = BoundarySpec::standard();
  const ScalarField gamma = smooth_gamma(g);
  const auto src = random_source(g.nx(), 6);
  ConductivityOperator op(gamma, spec);
  const ForwardSolution fwd = solve_forward(op, src);
  const ScalarField h = ScalarField::sample(g, [](double x, double y) { return std::cos(x + 2 * y); });
  const auto lin = op.linearized_current(fwd.u, h);
  const double t = 1e-5;
  const auto plus = dtn_apply(gamma + t * h, spec, src);
  const auto minus = dtn_apply(gamma - t * h, spec, src);
  for (std::size_t k = 0; k < lin.size(); ++k)
    CHECK(lin[k] == doctest::Approx((plus[k] - minus[k]) / (2 * t)).epsilon(1e-6));
}

TEST_CASE("solve counter records each boundary-value solve") {
  Grid g(6, 6);
  SolveCounter counter;
  ForwardConfig cfg;
  cfg.counter = &counter;
  ConductivityOperator op(ScalarField(g, 1.0), BoundarySpec::standard(), cfg);
  solve_forward(op, std::vector<double>(6, 1.0));
  op.solve(DirichletData::zeros(g, op.spec()), SolveKind::Adjoint);
  CHECK(counter[SolveKind::Forward] == 1);
  CHECK(counter[SolveKind::Adjoint] == 1);
  CHECK(counter.total() == 2);
}

// ---------------------------------------------------------------------------

TEST_CASE("equilibrium with constant doping is constant") {
  Grid g(12, 12);
  const BoundarySpec spec = BoundarySpec::standard();
  const double c = 0.7;
  const auto res = solve_equilibrium_detailed(ScalarField(g, std::exp(c)), spec,
                                              DirichletData::constant(g, spec, c), 0.3);
  for (double v : res.potential.values()) CHECK(v == doctest::Approx(c).epsilon(1e-12));
  CHECK(res.residual_sup <= 1e-9);
}

TEST_CASE("equilibrium respects the comparison bound for perturbed doping") {
  Grid g(16, 16);
  const BoundarySpec spec = BoundarySpec::standard();
  const double c = 0.4;
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  ScalarField doping(g);
  for (double& v : doping.values()) v = std::exp(c) + 1e-3 * u(rng);
  const auto res = solve_equilibrium_detailed(doping, spec, DirichletData::constant(g, spec, c), 0.2);
  double dev = 0.0, vmin = 1e300;
  for (double v : res.potential.values()) {
    dev = std::max(dev, std::abs(v - c));
    vmin = std::min(vmin, v);
  }
  CHECK(dev > 0.0);
  CHECK(dev <= 1e-3 / std::exp(vmin));
  for (std::size_t k = 1; k < res.residual_history.size(); ++k)
    CHECK(res.residual_history[k] < res.residual_history[k - 1]);
}

TEST_CASE("large Debye length approaches the harmonic extension") {
  Grid g(16, 16);
  const BoundarySpec spec = BoundarySpec::standard();
  DirichletData vbi = DirichletData::zeros(g, spec);
  for (std::size_t k = 0; k < vbi.source.size(); ++k) vbi.source[k] = 0.5 + 0.3 * std::sin(3.0 * k);
  const ScalarField doping = ScalarField::sample(g, [](double x, double y) { return 1.0 + x * y; });
  const ScalarField v = solve_equilibrium(doping, spec, vbi, 1e3);
  const ScalarField harmonic = ConductivityOperator(ScalarField(g, 1.0), spec, {{}, {1.0, 1.0}})
                                   .solve(vbi, SolveKind::Forward);
  for (std::size_t n = 0; n < v.size(); ++n) CHECK(std::abs(v[n] - harmonic[n]) < 1e-4);
}

TEST_CASE("Newton residual decreases monotonically for strongly varying doping") {
  Grid g(24, 24);
  const BoundarySpec spec = BoundarySpec::standard();
  const ScalarField doping =
      ScalarField::sample(g, [](double x, double y) { return y > 0.4 + 0.2 * x ? 50.0 : -5.0; });
  const auto res = solve_equilibrium_detailed(doping, spec, DirichletData::constant(g, spec, 0.0), 0.05);
  CHECK(res.residual_sup <= 1e-9);
  for (std::size_t k = 1; k < res.residual_history.size(); ++k)
    CHECK(res.residual_history[k] < res.residual_history[k - 1]);
}

TEST_CASE("gamma from constant doping") {
  Grid g(8, 8);
  const BoundarySpec spec = BoundarySpec::standard();
  const ScalarField g0 = gamma_from_doping(ScalarField(g, 1.0), spec, DirichletData::zeros(g, spec), 0.5);
  for (double v : g0.values()) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
  const ScalarField g1 = gamma_from_doping(ScalarField(g, std::exp(1.0)), spec,
                                           DirichletData::constant(g, spec, 1.0), 0.5);
  for (double v : g1.values()) CHECK(v == doctest::Approx(std::exp(1.0)).epsilon(1e-12));
}

TEST_CASE("doping -> gamma -> doping round trip") {
  Grid g(128, 128);
  const BoundarySpec spec = BoundarySpec::standard();
  const ScalarField doping = ScalarField::sample(
      g, [](double x, double y) { return 1.5 + 0.5 * std::sin(2.0 * x) * std::cos(3.0 * y); });
  const double lambda = 0.1;
  const ScalarField gamma =
      gamma_from_doping(doping, spec, DirichletData::constant(g, spec, std::log(1.5)), lambda);
  const ScalarField back = doping_from_gamma(gamma, spec, lambda);
  const auto roles = node_roles(g, spec);
  double err = 0.0;
  for (std::size_t n = 0; n < g.size(); ++n)
    if (roles[n] == NodeRole::Interior || roles[n] == NodeRole::Insulating)
      err = std::max(err, std::abs(back[n] - doping[n]));
  CHECK(err <= 1e-6);
}

TEST_CASE("doping from gamma: closed-form cases") {
  Grid g(33, 33);
  const BoundarySpec spec = BoundarySpec::standard();
  const double lambda = 0.3;
  const ScalarField c0 = doping_from_gamma(ScalarField(g, 1.7), spec, lambda);
  for (double v : c0.values()) CHECK(v == doctest::Approx(1.7).epsilon(1e-14));

  const ScalarField ex = ScalarField::sample(g, [](double x, double) { return std::exp(x); });
  const ScalarField c1 = doping_from_gamma(ex, spec, lambda);
  const ScalarField ex2 = ScalarField::sample(g, [](double x, double) { return std::exp(x * x); });
  const ScalarField c2 = doping_from_gamma(ex2, spec, lambda);
  for (int j = 1; j < g.ny() - 1; ++j)
    for (int i = 1; i < g.nx() - 1; ++i) {
      CHECK(std::abs(c1(i, j) - ex(i, j)) < 1e-10);
      // Centered differences are exact on quadratics.
      CHECK(std::abs(c2(i, j) - (ex2(i, j) - 2.0 * lambda * lambda)) < 1e-9);
    }
  ScalarField bad(g, 1.0);
  bad(3, 3) = 0.0;
  CHECK_THROWS_AS(doping_from_gamma(bad, spec, lambda), InvalidInput);
}

TEST_CASE("Schroedinger potential of a conductivity") {
  const BoundarySpec spec = BoundarySpec::standard();
  Grid g(41, 41);
  const ScalarField flat = schrodinger_from_gamma(ScalarField(g, 1.0), spec);
  for (double v : flat.values()) CHECK(v == 0.0);

  const ScalarField lin =
      ScalarField::sample(g, [](double x, double) { return (1.0 + x) * (1.0 + x); });
  const ScalarField v0 = schrodinger_from_gamma(lin, spec);
  for (int j = 1; j < g.ny() - 1; ++j)
    for (int i = 1; i < g.nx() - 1; ++i) CHECK(std::abs(v0(i, j)) < 1e-9);

  // gamma = e^{2x}: V = 1 up to (h^2/12).
  double prev = 0.0;
  for (int n : {21, 41}) {
    Grid gn(n, n);
    const ScalarField e2 = ScalarField::sample(gn, [](double x, double) { return std::exp(2.0 * x); });
    const ScalarField v = schrodinger_from_gamma(e2, spec);
    double err = 0.0;
    for (int j = 1; j < n - 1; ++j)
      for (int i = 1; i < n - 1; ++i) err = std::max(err, std::abs(v(i, j) - 1.0));
    CHECK(err <= gn.hx() * gn.hx() / 12.0 * 1.01);
    if (prev > 0.0) CHECK(prev / err == doctest::Approx(4.0).epsilon(0.05));
    prev = err;
  }
  ScalarField bad(g, 1.0);
  bad(5, 5) = -1.0;
  CHECK_THROWS_AS(schrodinger_from_gamma(bad, spec), InvalidInput);
}
