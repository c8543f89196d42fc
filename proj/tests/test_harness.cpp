#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "pnrecon/errors.hpp"
#include "pnrecon/harness.hpp"

using namespace pnrecon;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("pnrecon_test_" + name);
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("config: serialize and parse round trip") {
  for (const auto& name : preset_names()) {
    const ExperimentConfig c = preset(name);
    std::istringstream in(serialize_config(c));
    CHECK(parse_config(in) == c);
  }
  ExperimentConfig c;
  c.nx = 33;
  c.phantom.kind = PhantomKind::Analytic;
  c.phantom.c1 = 0.123456789012345678;
  c.method = Method::Kaczmarz;
  c.smooth = true;
  c.noise = 0.05;
  c.seed = 77;
  c.output = "out dir";
  c.source_edge = Edge::Right;
  c.source_lo = 0.25;
  std::istringstream in(serialize_config(c));
  CHECK(parse_config(in) == c);
}

TEST_CASE("config: parsing rules") {
  std::istringstream ok("# comment\n\nnx = 40   # trailing\n  method=lk\nseed = 3\n");
  const ExperimentConfig c = parse_config(ok);
  CHECK(c.nx == 40);
  CHECK(c.method == Method::Kaczmarz);
  CHECK(c.seed == 3u);

  std::istringstream unknown("colour = blue\n");
  CHECK_THROWS_AS(parse_config(unknown), InvalidInput);
  std::istringstream malformed("nx = 4x\n");
  CHECK_THROWS_AS(parse_config(malformed), InvalidInput);
  std::istringstream no_eq("nx 40\n");
  CHECK_THROWS_AS(parse_config(no_eq), InvalidInput);

  ExperimentConfig noisy;
  noisy.noise = 0.1;
  CHECK_THROWS_AS(noisy.validate(), InvalidInput);
  noisy.seed = 1;
  CHECK_NOTHROW(noisy.validate());
  ExperimentConfig bad;
  bad.p_prime = 5;
  CHECK_THROWS_AS(bad.validate(), InvalidInput);
  CHECK_THROWS_AS(preset("exp9"), InvalidInput);
}

TEST_CASE("phantoms") {
  const Grid g(33, 33);
  PhantomSpec lin;
  const ScalarField f = make_phantom(g, lin);
  CHECK(f(0, 0) == 1.0);
  CHECK(f(0, 32) == 2.0);
  CHECK(f(16, 8) == 1.0);  // y = 0.25 = curve(0.5)
  CHECK(f(16, 9) == 2.0);
  PhantomSpec an;
  an.kind = PhantomKind::Analytic;
  CHECK(an.curve(0.25) == doctest::Approx(0.65));
  an.c1 = 0.6;
  CHECK_THROWS_AS(an.validate(), InvalidInput);
  PhantomSpec out;
  out.yb = 1.2;
  CHECK_THROWS_AS(make_phantom(g, out), InvalidInput);
}

TEST_CASE("noise source and noise model") {
  NoiseSource s(5489);
  CHECK(s.raw() == 14514284786278117030ULL);
  NoiseSource a(9), b(9);
  for (int k = 0; k < 100; ++k) {
    const double v = a.next();
    CHECK(v == b.next());
    CHECK(v >= -1.0);
    CHECK(v < 1.0);
  }

  std::vector<double> y = {0.3, -1.5, 0.7, 2.0, 0.0};
  std::vector<double> clean = y;
  NoiseSource r(1);
  CHECK(add_noise(y, 0.0, r) == 0.0);
  CHECK(y == clean);
  const double amp = add_noise(y, 0.1, r);
  CHECK(amp == doctest::Approx(0.2));
  for (std::size_t k = 0; k < y.size(); ++k) CHECK(std::abs(y[k] - clean[k]) <= 0.1 * 2.0);
}

TEST_CASE("synthesize: exact, noisy and deterministic") {
  ExperimentConfig c;
  c.nx = c.ny = 24;
  const Dataset exact = synthesize(c);
  CHECK(exact.datum.delta == 0.0);
  CHECK(exact.datum.U == std::vector<double>(24, 1.0));
  c.noise = 0.1;
  c.seed = 4;
  const Dataset n1 = synthesize(c), n2 = synthesize(c);
  CHECK(n1.datum.Y == n2.datum.Y);
  double sup = 0.0, dev = 0.0;
  for (std::size_t k = 0; k < exact.datum.Y.size(); ++k) {
    sup = std::max(sup, std::abs(exact.datum.Y[k]));
    dev = std::max(dev, std::abs(n1.datum.Y[k] - exact.datum.Y[k]));
  }
  CHECK(dev <= 0.1 * sup);
  CHECK(dev > 0.0);
  CHECK(n1.datum.delta == doctest::Approx(0.1 * sup));

  c.method = Method::Kaczmarz;
  const Dataset lk = synthesize(c);
  CHECK(lk.traces.traces.size() == 9);
  CHECK(lk.traces.delta > 0.0);

  ExperimentConfig lat = preset("lattice-recovery");
  const Dataset l1 = synthesize(lat), l2 = synthesize(lat);
  CHECK(l1.lattice == l2.lattice);
  for (double w : l1.lattice.weights()) {
    CHECK(w >= 0.2);
    CHECK(w <= 0.8);
  }
}

TEST_CASE("metrics") {
  const Grid g(41, 41);
  const ScalarField truth = ScalarField::sample(g, [](double, double y) { return y > 0.5 ? 2.0 : 1.0; });
  const Metrics same = metrics(truth, truth);
  CHECK(same.misclassified == 0.0);
  CHECK(same.l2_relative == 0.0);
  CHECK(same.jaccard == 0.0);
  const Metrics swapped = metrics(3.0 * ScalarField(g, 1.0) - truth, truth);
  CHECK(swapped.misclassified == doctest::Approx(1.0));
  CHECK(swapped.jaccard == doctest::Approx(1.0));
  const ScalarField shifted =
      ScalarField::sample(g, [](double, double y) { return y > 0.6 ? 2.0 : 1.0; });
  CHECK(std::abs(metrics(shifted, truth).misclassified - 0.1) <= g.hx());
  CHECK_THROWS_AS(metrics(ScalarField(Grid(5, 5)), truth), InvalidInput);
}

TEST_CASE("exports") {
  const Grid g(4, 3);
  const ScalarField f = ScalarField::sample(g, [](double x, double) { return x > 0.5 ? 2.0 : 1.0; });
  std::ostringstream pgm;
  write_pgm(pgm, f);
  CHECK(pgm.str() == "P2\n4 3\n255\n0 0 255 255\n0 0 255 255\n0 0 255 255\n");

  ScalarField odd(g);
  for (std::size_t n = 0; n < odd.size(); ++n) odd[n] = 1.0 / 3.0 + n * 1e-13;
  std::stringstream field;
  write_field(field, odd);
  CHECK(read_field(field) == odd);

  std::ostringstream hist;
  write_levelset_history(hist, {LevelSetRecord{}});
  CHECK(hist.str().rfind("iter,residual_l2,G_alpha,misclassified,step,core_solves\n", 0) == 0);
  std::ostringstream lk;
  write_lk_history(lk, {});
  CHECK(lk.str() == "cycle,residual_l2,misclassified\n");

  const std::vector<std::vector<double>> traces = {{0.1, 1.0 / 7.0}, {3.0}};
  std::stringstream tcsv;
  write_traces_csv(tcsv, traces);
  CHECK(read_traces_csv(tcsv) == traces);
  std::istringstream bad("a,b,c\n");
  CHECK_THROWS_AS(read_traces_csv(bad), InvalidInput);
}

TEST_CASE("level-set run: solve ledger and deterministic outputs") {
  ExperimentConfig c;
  c.nx = c.ny = 20;
  c.max_iter = 6;
  c.noise = 0.02;
  c.seed = 2;
  const auto d1 = scratch("ls1"), d2 = scratch("ls2");
  c.output = d1.string();
  const Report r1 = run_experiment(c);
  c.output = d2.string();
  const Report r2 = run_experiment(c);
  const long core = r1.solves[SolveKind::Forward] + r1.solves[SolveKind::Adjoint] +
                    r1.solves[SolveKind::Velocity];
  CHECK(core == 3 * r1.iterations + 1);
  CHECK(r1.solves[SolveKind::Adjoint] == r1.iterations);
  for (const char* name : {"history.csv", "final.field", "final.pgm", "truth.field", "initial.pgm"})
    CHECK(slurp(d1 / name) == slurp(d2 / name));
  CHECK(slurp(d1 / "config.txt") != slurp(d2 / "config.txt"));  // output path differs
  CHECK(std::filesystem::exists(d1 / "summary.json"));
  std::filesystem::remove_all(d1);
  std::filesystem::remove_all(d2);
}

TEST_CASE("Landweber-Kaczmarz run: 2 N solves per cycle") {
  ExperimentConfig c;
  c.method = Method::Kaczmarz;
  c.nx = c.ny = 24;
  c.max_cycles = 2;
  const Report r = run_experiment(c);
  CHECK(r.iterations == 2);
  CHECK(r.solves.total() == 2 * 9 * 2);
  CHECK(r.history_csv.rfind("cycle,residual_l2,misclassified\n", 0) == 0);
}

TEST_CASE("lattice run") {
  const auto dir = scratch("lat");
  ExperimentConfig c = preset("lattice-recovery");
  c.output = dir.string();
  const Report r = run_experiment(c);
  CHECK(r.recovery_max_error <= 1e-8);
  CHECK(r.recovery.reports.size() == 3);
  const std::string csv = slurp(dir / "recovery.csv");
  CHECK(csv.rfind("p,det_D_p,max_abs_error\n", 0) == 0);
  std::filesystem::remove_all(dir);

  ExperimentConfig twin = preset("lattice-recovery");
  twin.lattice_n = 3;
  twin.p_prime = 2;
  CHECK_NOTHROW(run_experiment(twin));
}
