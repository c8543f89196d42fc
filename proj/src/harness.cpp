#include "pnrecon/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "pnrecon/errors.hpp"

namespace pnrecon {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw InvalidInput(key + ": expected a number, got '" + v + "'");
  return out;
}

long to_long(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  long out = 0;
  try {
    out = std::stol(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw InvalidInput(key + ": expected an integer, got '" + v + "'");
  return out;
}

int to_int(const std::string& key, const std::string& v) {
  const long l = to_long(key, v);
  if (l < -1000000000L || l > 1000000000L) throw InvalidInput(key + ": value out of range");
  return static_cast<int>(l);
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw InvalidInput(key + ": expected true or false, got '" + v + "'");
}

std::string_view method_name(Method m) {
  switch (m) {
    case Method::LevelSet: return "levelset";
    case Method::Kaczmarz: return "lk";
    case Method::Lattice: return "lattice";
  }
  return "?";
}

std::string_view phantom_name(PhantomKind k) {
  switch (k) {
    case PhantomKind::Linear: return "linear";
    case PhantomKind::Analytic: return "analytic";
    case PhantomKind::Custom: return "custom";
  }
  return "?";
}

Method parse_method(const std::string& v) {
  if (v == "levelset") return Method::LevelSet;
  if (v == "lk") return Method::Kaczmarz;
  if (v == "lattice") return Method::Lattice;
  throw InvalidInput("method: expected levelset, lk or lattice, got '" + v + "'");
}

PhantomKind parse_phantom(const std::string& v) {
  if (v == "linear") return PhantomKind::Linear;
  if (v == "analytic") return PhantomKind::Analytic;
  if (v == "custom") return PhantomKind::Custom;
  throw InvalidInput("phantom: expected linear, analytic or custom, got '" + v + "'");
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw InvalidInput(msg);
}

}  // namespace

// ---------------------------------------------------------------------------

double PhantomSpec::curve(double x) const {
  switch (kind) {
    case PhantomKind::Linear: return ya + (yb - ya) * x;
    case PhantomKind::Analytic: return c0 + c1 * std::sin(2.0 * M_PI * x);
    case PhantomKind::Custom: break;
  }
  throw InvalidInput("custom phantoms have no junction curve");
}

void PhantomSpec::validate() const {
  switch (kind) {
    case PhantomKind::Linear:
      require(ya > 0.0 && ya < 1.0 && yb > 0.0 && yb < 1.0,
              "phantom: linear junction endpoints must lie in (0,1)");
      break;
    case PhantomKind::Analytic:
      require(c0 - std::abs(c1) > 0.0 && c0 + std::abs(c1) < 1.0,
              "phantom: analytic junction c0 +- |c1| must stay inside (0,1)");
      break;
    case PhantomKind::Custom:
      require(!file.empty(), "phantom: custom phantom needs phantom_file");
      break;
  }
}

ScalarField make_phantom(const Grid& grid, const PhantomSpec& p) {
  p.validate();
  if (p.kind == PhantomKind::Custom) {
    ScalarField f = load_field(p.file);
    if (!(f.grid() == grid))
      throw InvalidInput("phantom_file grid does not match nx, ny");
    if (f.min() < 1.0 || f.max() > 2.0) throw InvalidInput("phantom_file values outside [1,2]");
    return f;
  }
  return ScalarField::sample(grid, [&](double x, double y) { return y > p.curve(x) ? 2.0 : 1.0; });
}

// ---------------------------------------------------------------------------

BoundarySpec ExperimentConfig::boundary() const {
  BoundarySpec s;
  s.set(source_edge, BoundaryLabel::Source, source_lo, source_hi);
  s.set(measure_edge, BoundaryLabel::Measure, measure_lo, measure_hi);
  return s;
}

void ExperimentConfig::validate() const {
  require(nx >= 3 && ny >= 3, "nx, ny: at least 3 nodes per direction");
  require(source_edge != measure_edge, "source_edge and measure_edge must differ");
  require(0.0 <= source_lo && source_lo < source_hi && source_hi <= 1.0,
          "source_lo, source_hi: need 0 <= lo < hi <= 1");
  require(0.0 <= measure_lo && measure_lo < measure_hi && measure_hi <= 1.0,
          "measure_lo, measure_hi: need 0 <= lo < hi <= 1");
  if (method != Method::Lattice) {
    phantom.validate();
    boundary().validate(grid());
  }
  require(alpha >= 0.0, "alpha: must be non-negative");
  require(beta >= 0.0, "beta: must be non-negative");
  require(eps >= 0.0, "eps: must be non-negative (0 selects two grid spacings)");
  require(tau > 0.0, "tau: must be positive");
  require(tau_dp >= 1.0, "tau_dp: must be at least 1");
  require(max_iter >= 0, "max_iter: must be non-negative");
  require(init_ya > 0.0 && init_ya < 1.0 && init_yb > 0.0 && init_yb < 1.0,
          "init_ya, init_yb: must lie in (0,1)");
  require(lk_n >= 1, "lk_n: must be at least 1");
  require(lk_delta_x > 0.0, "lk_delta_x: must be positive");
  require(omega >= 0.0, "omega: must be non-negative (0 selects automatic)");
  require(max_cycles >= 0, "max_cycles: must be non-negative");
  require(frozen_width >= 0, "frozen_width: must be non-negative");
  require(init_gamma >= 1.0 && init_gamma <= 2.0, "init_gamma: must lie in [1,2]");
  require(lattice_n >= 2, "lattice_n: must be at least 2");
  require(p_prime >= 1 && 2 * p_prime <= lattice_n + 1, "p_prime: need 1 <= p' and 2p' <= N + 1");
  require(lattice_eps > 0.0, "lattice_eps: must be positive");
  require(0.0 < w_lo && w_lo < w_hi && w_hi < 1.0, "w_lo, w_hi: need 0 < lo < hi < 1");
  require(noise >= 0.0 && noise < 1.0, "noise: must lie in [0,1)");
  require(noise == 0.0 || seed.has_value(), "seed: required when noise > 0");
  require(method != Method::Lattice || !lattice_file.empty() || seed.has_value(),
          "seed: required to draw a random lattice");
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "nx", "ny", "source_edge", "source_lo", "source_hi", "measure_edge", "measure_lo",
      "measure_hi", "phantom", "phantom_ya", "phantom_yb", "phantom_c0", "phantom_c1",
      "phantom_file", "method", "alpha", "beta", "eps", "tau", "tau_dp", "max_iter", "init_ya",
      "init_yb", "pin_measure", "lk_n", "lk_delta_x", "omega", "max_cycles", "frozen_width",
      "smooth", "init_gamma", "lattice_n", "p_prime", "lattice_eps", "w_lo", "w_hi",
      "lattice_file", "noise", "seed", "output"};
  return keys;
}

void set_config_value(ExperimentConfig& c, const std::string& key, const std::string& v) {
  if (key == "nx") c.nx = to_int(key, v);
  else if (key == "ny") c.ny = to_int(key, v);
  else if (key == "source_edge") c.source_edge = parse_edge(v);
  else if (key == "source_lo") c.source_lo = to_double(key, v);
  else if (key == "source_hi") c.source_hi = to_double(key, v);
  else if (key == "measure_edge") c.measure_edge = parse_edge(v);
  else if (key == "measure_lo") c.measure_lo = to_double(key, v);
  else if (key == "measure_hi") c.measure_hi = to_double(key, v);
  else if (key == "phantom") c.phantom.kind = parse_phantom(v);
  else if (key == "phantom_ya") c.phantom.ya = to_double(key, v);
  else if (key == "phantom_yb") c.phantom.yb = to_double(key, v);
  else if (key == "phantom_c0") c.phantom.c0 = to_double(key, v);
  else if (key == "phantom_c1") c.phantom.c1 = to_double(key, v);
  else if (key == "phantom_file") c.phantom.file = v;
  else if (key == "method") c.method = parse_method(v);
  else if (key == "alpha") c.alpha = to_double(key, v);
  else if (key == "beta") c.beta = to_double(key, v);
  else if (key == "eps") c.eps = to_double(key, v);
  else if (key == "tau") c.tau = to_double(key, v);
  else if (key == "tau_dp") c.tau_dp = to_double(key, v);
  else if (key == "max_iter") c.max_iter = to_int(key, v);
  else if (key == "init_ya") c.init_ya = to_double(key, v);
  else if (key == "init_yb") c.init_yb = to_double(key, v);
  else if (key == "pin_measure") c.pin_measure = to_bool(key, v);
  else if (key == "lk_n") c.lk_n = to_int(key, v);
  else if (key == "lk_delta_x") c.lk_delta_x = to_double(key, v);
  else if (key == "omega") c.omega = to_double(key, v);
  else if (key == "max_cycles") c.max_cycles = to_int(key, v);
  else if (key == "frozen_width") c.frozen_width = to_int(key, v);
  else if (key == "smooth") c.smooth = to_bool(key, v);
  else if (key == "init_gamma") c.init_gamma = to_double(key, v);
  else if (key == "lattice_n") c.lattice_n = to_int(key, v);
  else if (key == "p_prime") c.p_prime = to_int(key, v);
  else if (key == "lattice_eps") c.lattice_eps = to_double(key, v);
  else if (key == "w_lo") c.w_lo = to_double(key, v);
  else if (key == "w_hi") c.w_hi = to_double(key, v);
  else if (key == "lattice_file") c.lattice_file = v;
  else if (key == "noise") c.noise = to_double(key, v);
  else if (key == "seed") {
    if (v == "none") c.seed.reset();
    else {
      const long s = to_long(key, v);
      require(s >= 0, "seed: must be non-negative");
      c.seed = static_cast<std::uint64_t>(s);
    }
  } else if (key == "output") c.output = v;
  else throw InvalidInput("unknown config key '" + key + "'");
}

ExperimentConfig parse_config(std::istream& is, ExperimentConfig c) {
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw InvalidInput("config line " + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    try {
      set_config_value(c, key, value);
    } catch (const InvalidInput& e) {
      throw InvalidInput("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return c;
}

ExperimentConfig load_config(const std::string& path, ExperimentConfig base) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open config file '" + path + "'");
  return parse_config(in, std::move(base));
}

void write_config(std::ostream& os, const ExperimentConfig& c) {
  auto kv = [&](const char* k, const std::string& v) { os << k << " = " << v << '\n'; };
  kv("nx", std::to_string(c.nx));
  kv("ny", std::to_string(c.ny));
  kv("source_edge", std::string(edge_name(c.source_edge)));
  kv("source_lo", fmt(c.source_lo));
  kv("source_hi", fmt(c.source_hi));
  kv("measure_edge", std::string(edge_name(c.measure_edge)));
  kv("measure_lo", fmt(c.measure_lo));
  kv("measure_hi", fmt(c.measure_hi));
  kv("phantom", std::string(phantom_name(c.phantom.kind)));
  kv("phantom_ya", fmt(c.phantom.ya));
  kv("phantom_yb", fmt(c.phantom.yb));
  kv("phantom_c0", fmt(c.phantom.c0));
  kv("phantom_c1", fmt(c.phantom.c1));
  if (!c.phantom.file.empty()) kv("phantom_file", c.phantom.file);
  kv("method", std::string(method_name(c.method)));
  kv("alpha", fmt(c.alpha));
  kv("beta", fmt(c.beta));
  kv("eps", fmt(c.eps));
  kv("tau", fmt(c.tau));
  kv("tau_dp", fmt(c.tau_dp));
  kv("max_iter", std::to_string(c.max_iter));
  kv("init_ya", fmt(c.init_ya));
  kv("init_yb", fmt(c.init_yb));
  kv("pin_measure", c.pin_measure ? "true" : "false");
  kv("lk_n", std::to_string(c.lk_n));
  kv("lk_delta_x", fmt(c.lk_delta_x));
  kv("omega", fmt(c.omega));
  kv("max_cycles", std::to_string(c.max_cycles));
  kv("frozen_width", std::to_string(c.frozen_width));
  kv("smooth", c.smooth ? "true" : "false");
  kv("init_gamma", fmt(c.init_gamma));
  kv("lattice_n", std::to_string(c.lattice_n));
  kv("p_prime", std::to_string(c.p_prime));
  kv("lattice_eps", fmt(c.lattice_eps));
  kv("w_lo", fmt(c.w_lo));
  kv("w_hi", fmt(c.w_hi));
  if (!c.lattice_file.empty()) kv("lattice_file", c.lattice_file);
  kv("noise", fmt(c.noise));
  kv("seed", c.seed ? std::to_string(*c.seed) : "none");
  if (!c.output.empty()) kv("output", c.output);
}

std::string serialize_config(const ExperimentConfig& c) {
  std::ostringstream os;
  write_config(os, c);
  return os.str();
}

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = {"exp1-exact", "exp1-noisy", "exp2-exact",
                                                 "lattice-recovery"};
  return names;
}

ExperimentConfig preset(const std::string& name) {
  ExperimentConfig c;
  if (name == "exp1-exact") return c;
  if (name == "exp1-noisy") {
    c.noise = 0.10;
    c.seed = 1;
    c.max_iter = 2000;
    c.alpha = 1e-3;
    return c;
  }
  if (name == "exp2-exact") {
    c.phantom.kind = PhantomKind::Analytic;
    return c;
  }
  if (name == "lattice-recovery") {
    c.method = Method::Lattice;
    c.seed = 1;
    return c;
  }
  throw InvalidInput("unknown preset '" + name + "'");
}

// ---------------------------------------------------------------------------

double add_noise(std::vector<double>& y, double level, NoiseSource& rng) {
  double sup = 0.0;
  for (double v : y) sup = std::max(sup, std::abs(v));
  if (level == 0.0) return 0.0;
  const double amp = level * sup;
  for (double& v : y) v += amp * rng.next();
  return amp;
}

Dataset synthesize(const ExperimentConfig& c) {
  c.validate();
  Dataset d;
  NoiseSource rng(c.seed.value_or(0));
  if (c.method == Method::Lattice) {
    if (!c.lattice_file.empty()) {
      std::ifstream in(c.lattice_file);
      if (!in) throw InvalidInput("cannot open lattice file '" + c.lattice_file + "'");
      d.lattice = read_lattice(in);
      require(d.lattice.N() == c.lattice_n, "lattice_file size does not match lattice_n");
    } else {
      d.lattice = Lattice(c.lattice_n, c.lattice_eps);
      for (int j = 1; j <= c.lattice_n; ++j)
        for (int i = 1; i <= c.lattice_n; ++i)
          d.lattice.w(i, j) = c.w_lo + (c.w_hi - c.w_lo) * 0.5 * (rng.next() + 1.0);
    }
    d.layout = LatticeLayout::standard(c.lattice_n, c.p_prime);
    d.sweep = sweep_data(d.lattice, d.layout, c.p_prime);
    if (c.noise > 0.0) {
      const auto sites = measured_sites(c.lattice_n, c.p_prime);
      for (auto& v : d.sweep.values) {
        std::vector<double> m;
        for (Site s : sites) m.push_back(v(s.i, s.j));
        add_noise(m, c.noise, rng);
        for (std::size_t k = 0; k < sites.size(); ++k) v(sites[k].i, sites[k].j) = m[k];
      }
    }
    return d;
  }

  const Grid g = c.grid();
  d.spec = c.boundary();
  d.truth = make_phantom(g, c.phantom);
  const ConductivityOperator op(d.truth, d.spec);
  double length = 0.0;
  for (double w : op.measure_weights()) length += w;
  const double root_length = std::sqrt(length);

  if (c.method == Method::LevelSet) {
    d.datum.U.assign(op.source_nodes().size(), 1.0);
    d.datum.Y = solve_forward(op, d.datum.U).trace;
    d.datum.delta = add_noise(d.datum.Y, c.noise, rng) * root_length;
  } else {
    d.traces.basis = VoltageBasis{c.lk_n, c.lk_delta_x};
    d.traces.basis.validate(g, d.spec);
    double delta = 0.0;
    for (int j = 1; j <= c.lk_n; ++j) {
      auto y = solve_forward(op, d.traces.basis.source(g, d.spec, j)).trace;
      delta = std::max(delta, add_noise(y, c.noise, rng) * root_length);
      d.traces.traces.push_back(std::move(y));
    }
    d.traces.delta = delta;
  }
  return d;
}

Metrics metrics(const ScalarField& rec, const ScalarField& truth) {
  require_same_grid(rec, truth);
  const Grid& g = truth.grid();
  Metrics m;
  m.misclassified = misclassified_fraction(rec, truth);
  const ScalarField diff = rec - truth;
  const double tn = std::sqrt(inner(truth, truth));
  m.l2_relative = tn > 0.0 ? std::sqrt(inner(diff, diff)) / tn : std::sqrt(inner(diff, diff));
  double both = 0.0, either = 0.0;
  for (std::size_t n = 0; n < rec.size(); ++n) {
    const bool a = !(rec[n] > 1.5), b = !(truth[n] > 1.5);
    if (a && b) both += g.cell_area(n);
    if (a || b) either += g.cell_area(n);
  }
  m.jaccard = either > 0.0 ? 1.0 - both / either : 0.0;
  return m;
}

// ---------------------------------------------------------------------------

void write_pgm(std::ostream& os, const ScalarField& f, double lo, double hi) {
  if (!(hi > lo)) throw InvalidInput("pgm: value range must be non-empty");
  const Grid& g = f.grid();
  os << "P2\n" << g.nx() << ' ' << g.ny() << "\n255\n";
  for (int j = g.ny() - 1; j >= 0; --j) {
    for (int i = 0; i < g.nx(); ++i) {
      const double t = std::clamp((f(i, j) - lo) / (hi - lo), 0.0, 1.0);
      os << (i ? " " : "") << static_cast<int>(std::lround(255.0 * t));
    }
    os << '\n';
  }
}

void write_levelset_history(std::ostream& os, const std::vector<LevelSetRecord>& h) {
  os << std::setprecision(17) << "iter,residual_l2,G_alpha,misclassified,step,core_solves\n";
  for (const auto& r : h)
    os << r.iter << ',' << r.residual_l2 << ',' << r.G_alpha << ',' << r.misclassified << ','
       << r.step << ',' << r.core_solves << '\n';
}

void write_lk_history(std::ostream& os, const std::vector<LkCycleRecord>& h) {
  os << std::setprecision(17) << "cycle,residual_l2,misclassified\n";
  for (const auto& r : h) os << r.cycle << ',' << r.residual_l2 << ',' << r.misclassified << '\n';
}

void write_traces_csv(std::ostream& os, const std::vector<std::vector<double>>& traces) {
  os << std::setprecision(17) << "trace,node,value\n";
  for (std::size_t t = 0; t < traces.size(); ++t)
    for (std::size_t k = 0; k < traces[t].size(); ++k)
      os << t + 1 << ',' << k << ',' << traces[t][k] << '\n';
}

std::vector<std::vector<double>> read_traces_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || trim(line) != "trace,node,value")
    throw InvalidInput("traces csv: expected header 'trace,node,value'");
  std::vector<std::vector<double>> out;
  while (std::getline(is, line)) {
    if (trim(line).empty()) continue;
    std::istringstream ls(line);
    std::string a, b, v;
    if (!std::getline(ls, a, ',') || !std::getline(ls, b, ',') || !std::getline(ls, v))
      throw InvalidInput("traces csv: malformed line '" + line + "'");
    const long t = to_long("trace", trim(a)), k = to_long("node", trim(b));
    if (t < 1 || t > static_cast<long>(out.size()) + 1)
      throw InvalidInput("traces csv: trace index out of order");
    if (t == static_cast<long>(out.size()) + 1) out.emplace_back();
    if (k != static_cast<long>(out[t - 1].size()))
      throw InvalidInput("traces csv: node index out of order");
    out[t - 1].push_back(to_double("value", trim(v)));
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

std::string stop_name(StopReason r) {
  switch (r) {
    case StopReason::Tolerance: return "tolerance";
    case StopReason::Discrepancy: return "discrepancy";
    case StopReason::MaxIter: return "max_iter";
  }
  return "?";
}

std::string stop_name(LkStop r) {
  switch (r) {
    case LkStop::Tolerance: return "tolerance";
    case LkStop::Discrepancy: return "discrepancy";
    case LkStop::MaxCycles: return "max_cycles";
  }
  return "?";
}

void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw InvalidInput("cannot write '" + p.string() + "'");
  out << s;
  if (!out) throw InvalidInput("write failed for '" + p.string() + "'");
}

}  // namespace

Report run_experiment(const ExperimentConfig& c) {
  const auto t0 = std::chrono::steady_clock::now();
  const Dataset d = synthesize(c);
  Report r;
  r.method = c.method;

  if (c.method == Method::Lattice) {
    r.recovery = recover_diagonals(d.sweep, c.p_prime);
    r.recovery_max_error = recovery_error(r.recovery, d.lattice);
    r.iterations = c.p_prime;
    r.stop_reason = "complete";
    std::ostringstream os;
    write_recovery_csv(os, r.recovery, &d.lattice);
    r.history_csv = os.str();
  } else if (c.method == Method::LevelSet) {
    const Grid g = c.grid();
    LevelSetState s = LevelSetState::start(line_level_set(g, c.init_ya, c.init_yb), c.eps);
    s.alpha = c.alpha;
    s.beta = c.beta;
    s.step = c.tau;
    EvolveOptions o;
    o.max_iter = c.max_iter;
    o.tau_dp = c.tau_dp;
    o.pin_measure_contact = c.pin_measure;
    o.truth = &d.truth;
    r.initial = project(s.phi);
    const EvolveResult e = evolve(s, d.spec, d.datum, o);
    r.final_gamma = project(e.state.phi);
    r.iterations = e.history.back().iter;
    r.stop_reason = stop_name(e.reason);
    r.solves = e.solves;
    std::ostringstream os;
    write_levelset_history(os, e.history);
    r.history_csv = os.str();
  } else {
    const Grid g = c.grid();
    LkOptions o;
    o.max_cycles = c.max_cycles;
    o.omega = c.omega;
    o.frozen_width = c.frozen_width;
    o.smooth_gradient = c.smooth;
    o.tau_dp = c.tau_dp;
    // The strip along the contacts starts from the known profile.
    ScalarField g0(g, c.init_gamma);
    const auto strip = contact_strip(g, d.spec, c.frozen_width);
    for (std::size_t n = 0; n < g0.size(); ++n)
      if (strip[n]) g0[n] = d.truth[n];
    r.initial = g0;
    const LkResult e = lk_run(g0, d.spec, d.traces, o, &d.truth);
    r.final_gamma = e.gamma;
    r.iterations = e.history.back().cycle;
    r.stop_reason = stop_name(e.reason);
    r.solves = e.solves;
    std::ostringstream os;
    write_lk_history(os, e.history);
    r.history_csv = os.str();
  }
  if (c.method != Method::Lattice) {
    r.truth = d.truth;
    r.final_metrics = metrics(r.final_gamma, d.truth);
  }
  r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!c.output.empty()) write_report(c.output, c, r);
  return r;
}

std::string summary_json(const Report& r) {
  nlohmann::ordered_json j;
  j["method"] = std::string(method_name(r.method));
  j["iterations"] = r.iterations;
  j["stop_reason"] = r.stop_reason;
  if (r.method == Method::Lattice) {
    j["recovery_max_abs_error"] = r.recovery_max_error;
    nlohmann::ordered_json reps = nlohmann::ordered_json::array();
    for (const auto& rep : r.recovery.reports)
      reps.push_back({{"p", rep.p}, {"det_D_p", rep.det}, {"det_tol", rep.det_tol},
                      {"cond", rep.cond}, {"amplification", rep.amplification}});
    j["diagonals"] = reps;
  } else {
    j["solves"] = {{"forward", r.solves[SolveKind::Forward]},
                   {"adjoint", r.solves[SolveKind::Adjoint]},
                   {"velocity", r.solves[SolveKind::Velocity]},
                   {"line_search", r.solves[SolveKind::LineSearch]},
                   {"total", r.solves.total()}};
    j["metrics"] = {{"misclassified", r.final_metrics.misclassified},
                    {"l2_relative", r.final_metrics.l2_relative},
                    {"jaccard", r.final_metrics.jaccard}};
  }
  j["wall_seconds"] = r.wall_seconds;
  return j.dump(2) + "\n";
}

void write_report(const std::string& dir, const ExperimentConfig& c, const Report& r) {
  namespace fs = std::filesystem;
  const fs::path root(dir);
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw InvalidInput("cannot create output directory '" + dir + "': " + ec.message());
  write_text(root / "config.txt", serialize_config(c));
  write_text(root / (r.method == Method::Lattice ? "recovery.csv" : "history.csv"), r.history_csv);
  if (r.method != Method::Lattice) {
    for (const auto& [name, f] : {std::pair<const char*, const ScalarField*>{"initial", &r.initial},
                                  {"final", &r.final_gamma},
                                  {"truth", &r.truth}}) {
      std::ostringstream field, pgm;
      write_field(field, *f);
      write_pgm(pgm, *f);
      write_text(root / (std::string(name) + ".field"), field.str());
      write_text(root / (std::string(name) + ".pgm"), pgm.str());
    }
  }
  write_text(root / "summary.json", summary_json(r));
}

}  // namespace pnrecon
