#include <cmath>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "doctest.h"
#include "pnrecon/errors.hpp"
#include "pnrecon/grid.hpp"

using namespace pnrecon;

TEST_CASE("grid geometry") {
  Grid g(5, 3);
  CHECK(g.hx() == doctest::Approx(0.25));
  CHECK(g.hy() == doctest::Approx(0.5));
  CHECK(g.index(2, 1) == 7u);
  CHECK(g.x(4) == doctest::Approx(1.0));
  double area = 0.0;
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i) area += g.cell_area(i, j);
  CHECK(area == doctest::Approx(1.0).epsilon(1e-15));
  CHECK_THROWS_AS(Grid(2, 5), InvalidInput);
}

TEST_CASE("boundary_nodes enumerates the top edge in order") {
  Grid g(3, 3);
  BoundarySpec spec = BoundarySpec::standard();
  auto top = boundary_nodes(g, spec, BoundaryLabel::Source);
  REQUIRE(top.size() == 3);
  CHECK(top[0] == g.index(0, 2));
  CHECK(top[1] == g.index(1, 2));
  CHECK(top[2] == g.index(2, 2));
}

TEST_CASE("boundary_nodes on a 5x5 bottom contact") {
  Grid g(5, 5);
  auto bottom = boundary_nodes(g, BoundarySpec::standard(), BoundaryLabel::Measure);
  CHECK(bottom.size() == 5);
}

TEST_CASE("missing measurement contact is rejected") {
  Grid g(3, 3);
  BoundarySpec spec;
  spec.set(Edge::Top, BoundaryLabel::Source);
  CHECK(boundary_nodes(g, spec, BoundaryLabel::Measure).empty());
  CHECK_THROWS_AS(spec.validate(g), InvalidInput);
  CHECK_THROWS_AS(parse_label("ground"), InvalidInput);
}

TEST_CASE("boundary labels partition the boundary") {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> pick(0, 2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const BoundaryLabel labels[] = {BoundaryLabel::Source, BoundaryLabel::Measure,
                                  BoundaryLabel::Insulating};
  for (int trial = 0; trial < 50; ++trial) {
    Grid g(3 + trial % 7, 4 + trial % 5);
    BoundarySpec spec;
    for (Edge e : {Edge::Bottom, Edge::Right, Edge::Top, Edge::Left}) {
      double a = u(rng), b = u(rng);
      spec.set(e, labels[pick(rng)], std::min(a, b), std::max(a, b));
    }
    std::multiset<std::size_t> seen;
    for (BoundaryLabel l : labels)
      for (std::size_t n : boundary_nodes(g, spec, l)) seen.insert(n);
    std::size_t expected = 0;
    for (int j = 0; j < g.ny(); ++j)
      for (int i = 0; i < g.nx(); ++i)
        if (g.on_boundary(i, j)) {
          ++expected;
          CHECK(seen.count(g.index(i, j)) == 1);
        }
    CHECK(seen.size() == expected);
  }
}

TEST_CASE("corner precedence: Dirichlet over Neumann") {
  Grid g(4, 4);
  auto roles = node_roles(g, BoundarySpec::standard());
  CHECK(roles[g.index(0, 0)] == NodeRole::Measure);
  CHECK(roles[g.index(3, 3)] == NodeRole::Source);
  CHECK(roles[g.index(0, 1)] == NodeRole::Insulating);
  CHECK(roles[g.index(1, 1)] == NodeRole::Interior);
}

TEST_CASE("norms of zero and constant fields") {
  Grid g(9, 7);
  FieldNorms z = norms(ScalarField(g, 0.0));
  CHECK(z.l2 == 0.0);
  CHECK(z.h1_semi == 0.0);
  CHECK(z.bv == 0.0);
  FieldNorms c = norms(ScalarField(g, -3.5));
  CHECK(c.l2 == doctest::Approx(3.5).epsilon(1e-14));
  CHECK(c.h1_semi == 0.0);
  CHECK(c.bv == 0.0);
}

TEST_CASE("total variation of a unit step equals the interface length") {
  Grid g(64, 64);
  ScalarField step = ScalarField::sample(g, [](double x, double) { return x > 0.5 ? 1.0 : 0.0; });
  CHECK(std::abs(norms(step).bv - 1.0) <= 2.0 * g.hx());
}

TEST_CASE("norms are absolutely homogeneous") {
  Grid g(17, 11);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  ScalarField f(g);
  for (double& v : f.values()) v = nd(rng);
  const FieldNorms base = norms(f);
  for (double c : {-2.5, 0.0, 0.3, 7.0}) {
    const FieldNorms s = norms(c * f);
    CHECK(s.l2 == doctest::Approx(std::abs(c) * base.l2).epsilon(1e-13));
    CHECK(s.h1_semi == doctest::Approx(std::abs(c) * base.h1_semi).epsilon(1e-13));
    CHECK(s.bv == doctest::Approx(std::abs(c) * base.bv).epsilon(1e-13));
  }
}

TEST_CASE("H1 seminorm converges for a smooth field") {
  Grid g(256, 256);
  const double pi = std::numbers::pi;
  ScalarField f = ScalarField::sample(
      g, [pi](double x, double y) { return std::sin(pi * x) * std::sin(pi * y); });
  const double exact = pi / std::sqrt(2.0);
  CHECK(std::abs(norms(f).h1_semi - exact) / exact < 0.01);
}

TEST_CASE("field arithmetic requires identical grids") {
  ScalarField a(Grid(4, 4), 1.0), b(Grid(5, 4), 1.0);
  CHECK_THROWS_AS(a += b, InvalidInput);
  CHECK_THROWS_AS(inner(a, b), InvalidInput);
}

TEST_CASE("field file round trip is exact") {
  Grid g(6, 4);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1e3, 1e3);
  ScalarField f(g);
  for (double& v : f.values()) v = u(rng) / 3.0;
  std::stringstream ss;
  write_field(ss, f);
  CHECK(ss.str().rfind("field 6 4\n", 0) == 0);
  ScalarField back = read_field(ss);
  CHECK(back == f);

  std::stringstream bad("field 3 3\n1 2 3\n4 5\n");
  CHECK_THROWS_AS(read_field(bad), InvalidInput);
}
