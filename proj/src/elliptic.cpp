#include "pnrecon/elliptic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "pnrecon/errors.hpp"

namespace pnrecon {

long SolveCounter::total() const { return std::accumulate(counts.begin(), counts.end(), 0L); }

DirichletData DirichletData::zeros(const Grid& grid, const BoundarySpec& spec) {
  return constant(grid, spec, 0.0);
}

DirichletData DirichletData::constant(const Grid& grid, const BoundarySpec& spec, double value) {
  DirichletData d;
  d.source.assign(boundary_nodes(grid, spec, BoundaryLabel::Source).size(), value);
  d.measure.assign(boundary_nodes(grid, spec, BoundaryLabel::Measure).size(), value);
  return d;
}

DirichletData DirichletData::driven(const Grid& grid, const BoundarySpec& spec,
                                    std::vector<double> source) {
  DirichletData d = zeros(grid, spec);
  if (source.size() != d.source.size())
    throw InvalidInput("source trace has " + std::to_string(source.size()) +
                       " values, contact has " + std::to_string(d.source.size()) + " nodes");
  d.source = std::move(source);
  return d;
}

namespace {

bool is_contact(NodeRole r) { return r == NodeRole::Source || r == NodeRole::Measure; }

// dH/da for H = 2ab/(a+b).
double harmonic_mean_da(double a, double b) { return 2.0 * b * b / ((a + b) * (a + b)); }

}  // namespace

ConductivityOperator::ConductivityOperator(const ScalarField& gamma, const BoundarySpec& spec,
                                           const ForwardConfig& cfg)
    : gamma_(gamma), spec_(spec), cfg_(cfg) {
  const Grid& g = gamma_.grid();
  spec_.validate(g);
  const double slack = 1e-12;
  for (std::size_t n = 0; n < g.size(); ++n) {
    const double v = gamma_[n];
    if (!std::isfinite(v) || v < cfg_.bounds.lower - slack || v > cfg_.bounds.upper + slack)
      throw InvalidInput("conductivity " + std::to_string(v) + " at node " + std::to_string(n) +
                         " outside [" + std::to_string(cfg_.bounds.lower) + ", " +
                         std::to_string(cfg_.bounds.upper) + "]");
  }
  if (!(cfg_.bounds.lower > 0.0)) throw InvalidInput("conductivity lower bound must be positive");

  roles_ = node_roles(g, spec_);
  source_nodes_ = boundary_nodes(g, spec_, BoundaryLabel::Source);
  measure_nodes_ = boundary_nodes(g, spec_, BoundaryLabel::Measure);
  for (std::size_t n : measure_nodes_)
    measure_weights_.push_back(boundary_segment_length(g, spec_, n, BoundaryLabel::Measure));

  faces_of_node_.resize(g.size());
  for (int j = 0; j < g.ny(); ++j) {
    for (int i = 0; i < g.nx(); ++i) {
      const std::size_t n = g.index(i, j);
      if (i + 1 < g.nx()) {
        faces_of_node_[n].push_back(faces_.size());
        faces_of_node_[g.index(i + 1, j)].push_back(faces_.size());
        faces_.push_back({n, g.index(i + 1, j), g.hy() * g.cell_fraction_y(j) / g.hx()});
      }
      if (j + 1 < g.ny()) {
        faces_of_node_[n].push_back(faces_.size());
        faces_of_node_[g.index(i, j + 1)].push_back(faces_.size());
        faces_.push_back({n, g.index(i, j + 1), g.hx() * g.cell_fraction_x(i) / g.hy()});
      }
    }
  }

  unknown_of_node_.assign(g.size(), -1);
  for (std::size_t n = 0; n < g.size(); ++n) {
    if (is_contact(roles_[n])) continue;
    unknown_of_node_[n] = static_cast<std::ptrdiff_t>(node_of_unknown_.size());
    node_of_unknown_.push_back(n);
  }

  matrix_ = SparseSystem(node_of_unknown_.size());
  for (std::size_t r = 0; r < node_of_unknown_.size(); ++r) {
    const std::size_t n = node_of_unknown_[r];
    for (std::size_t fi : faces_of_node_[n]) {
      const Face& f = faces_[fi];
      const std::size_t m = f.a == n ? f.b : f.a;
      const double k = face_conductance(f);
      matrix_.add(r, r, k);
      if (unknown_of_node_[m] >= 0) matrix_.add(r, static_cast<std::size_t>(unknown_of_node_[m]), -k);
    }
  }
}

std::vector<double> ConductivityOperator::contact_values(const DirichletData& data) const {
  if (data.source.size() != source_nodes_.size() || data.measure.size() != measure_nodes_.size())
    throw InvalidInput("Dirichlet data does not match the contact node counts");
  std::vector<double> full(grid().size(), 0.0);
  for (std::size_t k = 0; k < source_nodes_.size(); ++k) full[source_nodes_[k]] = data.source[k];
  for (std::size_t k = 0; k < measure_nodes_.size(); ++k) full[measure_nodes_[k]] = data.measure[k];
  return full;
}

SparseSystem ConductivityOperator::assemble(const DirichletData& data) const {
  const std::vector<double> full = contact_values(data);
  SparseSystem s = matrix_;
  for (std::size_t r = 0; r < node_of_unknown_.size(); ++r) {
    const std::size_t n = node_of_unknown_[r];
    for (std::size_t fi : faces_of_node_[n]) {
      const Face& f = faces_[fi];
      const std::size_t m = f.a == n ? f.b : f.a;
      if (unknown_of_node_[m] < 0) s.rhs[r] += face_conductance(f) * full[m];
    }
  }
  return s;
}

std::vector<double> ConductivityOperator::solve_reduced(const SparseSystem& s,
                                                        SolveKind kind) const {
  if (cfg_.counter) cfg_.counter->add(kind);
  const bool direct = cfg_.solver.method == SolveMethod::Direct ||
                      (cfg_.solver.method == SolveMethod::Auto && s.n <= cfg_.solver.direct_limit);
  if (direct) {
    if (!factor_) factor_ = std::make_shared<const BandedLU>(matrix_);
    return factor_->solve(s.rhs);
  }
  return solve_pcg(s, cfg_.solver.tol, cfg_.solver.max_iter);
}

ScalarField ConductivityOperator::scatter(const std::vector<double>& reduced,
                                          std::vector<double> full) const {
  for (std::size_t r = 0; r < node_of_unknown_.size(); ++r) full[node_of_unknown_[r]] = reduced[r];
  return ScalarField(grid(), std::move(full));
}

ScalarField ConductivityOperator::solve(const DirichletData& data, SolveKind kind) const {
  const SparseSystem s = assemble(data);
  return scatter(solve_reduced(s, kind), contact_values(data));
}

std::vector<double> ConductivityOperator::flux_balance(const ScalarField& u) const {
  std::vector<double> out(grid().size(), 0.0);
  for (const Face& f : faces_) {
    const double q = face_conductance(f) * (u[f.a] - u[f.b]);
    out[f.a] += q;
    out[f.b] -= q;
  }
  return out;
}

std::vector<double> ConductivityOperator::outward_current(const ScalarField& u,
                                                          BoundaryLabel label) const {
  require_same_grid(u, gamma_);
  const std::vector<double> balance = flux_balance(u);
  const std::vector<std::size_t>& nodes =
      label == BoundaryLabel::Measure ? measure_nodes_ : source_nodes_;
  if (label == BoundaryLabel::Insulating) throw InvalidInput("no current through insulation");
  std::vector<double> out;
  out.reserve(nodes.size());
  for (std::size_t n : nodes) {
    // Inflow from the neighbours leaves through the boundary segment.
    const double len = boundary_segment_length(grid(), spec_, n, label);
    out.push_back(-balance[n] / len);
  }
  return out;
}

ScalarField ConductivityOperator::misfit_gradient(const ScalarField& u, const ScalarField& p) const {
  require_same_grid(u, gamma_);
  require_same_grid(p, gamma_);
  const Grid& g = grid();
  ScalarField w(g);
  for (const Face& f : faces_) {
    const double ga = gamma_[f.a], gb = gamma_[f.b];
    const double prod = (u[f.a] - u[f.b]) * (p[f.a] - p[f.b]) * f.geometry;
    w[f.a] -= harmonic_mean_da(ga, gb) * prod;
    w[f.b] -= harmonic_mean_da(gb, ga) * prod;
  }
  for (std::size_t n = 0; n < g.size(); ++n) w[n] /= g.cell_area(n);
  return w;
}

std::vector<double> ConductivityOperator::linearized_current(const ScalarField& u,
                                                             const ScalarField& h) const {
  require_same_grid(u, gamma_);
  require_same_grid(h, gamma_);
  std::vector<double> dk(faces_.size());
  for (std::size_t fi = 0; fi < faces_.size(); ++fi) {
    const Face& f = faces_[fi];
    const double ga = gamma_[f.a], gb = gamma_[f.b];
    dk[fi] = f.geometry * (harmonic_mean_da(ga, gb) * h[f.a] + harmonic_mean_da(gb, ga) * h[f.b]);
  }
  // A du = -(dA) u on the unknowns, du = 0 on the contacts.
  SparseSystem s = matrix_;
  for (std::size_t r = 0; r < node_of_unknown_.size(); ++r) {
    const std::size_t n = node_of_unknown_[r];
    double acc = 0.0;
    for (std::size_t fi : faces_of_node_[n]) {
      const Face& f = faces_[fi];
      const std::size_t m = f.a == n ? f.b : f.a;
      acc += dk[fi] * (u[m] - u[n]);
    }
    s.rhs[r] = acc;
  }
  const ScalarField du =
      scatter(solve_reduced(s, SolveKind::Linearized), std::vector<double>(grid().size(), 0.0));

  std::vector<double> out;
  out.reserve(measure_nodes_.size());
  for (std::size_t k = 0; k < measure_nodes_.size(); ++k) {
    const std::size_t n = measure_nodes_[k];
    double inflow = 0.0;
    for (std::size_t fi : faces_of_node_[n]) {
      const Face& f = faces_[fi];
      const std::size_t m = f.a == n ? f.b : f.a;
      inflow += dk[fi] * (u[m] - u[n]) + face_conductance(f) * (du[m] - du[n]);
    }
    out.push_back(inflow / measure_weights_[k]);
  }
  return out;
}

SparseSystem assemble(const EllipticProblem& p) {
  ForwardConfig cfg;
  cfg.bounds = p.bounds;
  return ConductivityOperator(p.gamma, p.spec, cfg).assemble(p.data);
}

ForwardSolution solve_forward(const ConductivityOperator& op, const std::vector<double>& source) {
  ForwardSolution out;
  out.u = op.solve(DirichletData::driven(op.grid(), op.spec(), source), SolveKind::Forward);
  out.trace = op.outward_current(out.u, BoundaryLabel::Measure);
  return out;
}

std::vector<double> dtn_apply(const ScalarField& gamma, const BoundarySpec& spec,
                              const std::vector<double>& source, const ForwardConfig& cfg) {
  return solve_forward(ConductivityOperator(gamma, spec, cfg), source).trace;
}

double trace_inner(const std::vector<double>& weights, const std::vector<double>& a,
                   const std::vector<double>& b) {
  if (a.size() != weights.size() || b.size() != weights.size())
    throw InvalidInput("trace length mismatch");
  double s = 0.0;
  for (std::size_t k = 0; k < weights.size(); ++k) s += weights[k] * a[k] * b[k];
  return s;
}

double trace_norm(const std::vector<double>& weights, const std::vector<double>& a) {
  return std::sqrt(trace_inner(weights, a, a));
}

// ---------------------------------------------------------------------------

EquilibriumResult solve_equilibrium_detailed(const ScalarField& doping, const BoundarySpec& spec,
                                             const DirichletData& built_in, double lambda,
                                             const EquilibriumOptions& opts) {
  if (!(lambda > 0.0)) throw InvalidInput("Debye length lambda must be positive");
  if (!doping.all_finite()) throw InvalidInput("doping profile has non-finite entries");
  const Grid& g = doping.grid();

  ForwardConfig cfg;
  cfg.solver = opts.linear;
  cfg.bounds = {1.0, 1.0};
  const ConductivityOperator laplace(ScalarField(g, 1.0), spec, cfg);
  const double l2 = lambda * lambda;
  // For large lambda the equation is divided by lambda^2 so that the
  // tolerance stays above the rounding floor of the scaled Laplacian.
  const double scale = 1.0 / std::max(1.0, l2);
  const std::vector<std::size_t>& unknown_nodes = laplace.unknown_nodes();

  // Start from the local charge-neutral potential, contacts fixed.
  std::vector<double> full = laplace.contact_values(built_in);
  for (std::size_t n : unknown_nodes) full[n] = std::log(std::max(doping[n], 1e-8));
  ScalarField v(g, full);

  // Pointwise residual lambda^2 Lap_h V - exp(V) + C on the unknowns.
  auto residual = [&](const ScalarField& x) {
    const std::vector<double> bal = laplace.flux_balance(x);
    std::vector<double> r(unknown_nodes.size());
    for (std::size_t k = 0; k < unknown_nodes.size(); ++k) {
      const std::size_t n = unknown_nodes[k];
      r[k] = scale * (-l2 * bal[n] / g.cell_area(n) - std::exp(x[n]) + doping[n]);
    }
    return r;
  };
  auto merit = [&](const std::vector<double>& r) {
    double s = 0.0;
    for (std::size_t k = 0; k < r.size(); ++k) s += g.cell_area(unknown_nodes[k]) * r[k] * r[k];
    return std::sqrt(s);
  };
  auto sup = [](const std::vector<double>& r) {
    double s = 0.0;
    for (double x : r) s = std::max(s, std::abs(x));
    return s;
  };

  EquilibriumResult out;
  std::vector<double> r = residual(v);
  double m = merit(r);
  out.residual_history.push_back(m);

  for (int it = 0; it < opts.max_iter; ++it) {
    if (sup(r) <= opts.tol) {
      out.potential = v;
      out.residual_sup = sup(r);
      out.iterations = it;
      return out;
    }
    // Jacobian of F(V) = lambda^2 L V + A (exp V - C), with F = -A r.
    SparseSystem jac = laplace.assemble(DirichletData::zeros(g, spec));
    for (std::size_t k = 0; k < unknown_nodes.size(); ++k) {
      for (auto& [c, val] : jac.rows[k]) val *= scale * l2;
      const std::size_t n = unknown_nodes[k];
      jac.add(k, k, scale * g.cell_area(n) * std::exp(v[n]));
      jac.rhs[k] = g.cell_area(n) * r[k];
    }
    if (opts.counter) opts.counter->add(SolveKind::Equilibrium);
    const std::vector<double> step = solve(jac, opts.linear);

    double t = 1.0;
    bool accepted = false;
    while (t >= opts.min_damping) {
      ScalarField trial = v;
      for (std::size_t k = 0; k < unknown_nodes.size(); ++k) trial[unknown_nodes[k]] += t * step[k];
      std::vector<double> rt = residual(trial);
      const double mt = merit(rt);
      if (std::isfinite(mt) && mt < m) {
        v = std::move(trial);
        r = std::move(rt);
        m = mt;
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    out.residual_history.push_back(m);
    if (!accepted) {
      if (sup(r) <= opts.tol) break;
      throw SolverError("Newton stagnated: damping below floor", sup(r));
    }
  }
  if (sup(r) > opts.tol)
    throw SolverError("Newton did not converge in " + std::to_string(opts.max_iter) + " steps",
                      sup(r));
  out.potential = v;
  out.residual_sup = sup(r);
  out.iterations = opts.max_iter;
  return out;
}

ScalarField solve_equilibrium(const ScalarField& doping, const BoundarySpec& spec,
                              const DirichletData& built_in, double lambda,
                              const EquilibriumOptions& opts) {
  return solve_equilibrium_detailed(doping, spec, built_in, lambda, opts).potential;
}

ScalarField gamma_from_doping(const ScalarField& doping, const BoundarySpec& spec,
                              const DirichletData& built_in, double lambda,
                              const EquilibriumOptions& opts) {
  ScalarField v = solve_equilibrium(doping, spec, built_in, lambda, opts);
  for (double& x : v.values()) x = std::exp(x);
  return v;
}

ScalarField laplacian(const ScalarField& f, const BoundarySpec& spec) {
  const Grid& g = f.grid();
  const std::vector<NodeRole> roles = node_roles(g, spec);
  ScalarField out(g);
  const int nx = g.nx(), ny = g.ny();
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const bool contact = is_contact(roles[g.index(i, j)]);
      double dxx, dyy;
      if (i > 0 && i < nx - 1)
        dxx = f(i - 1, j) - 2.0 * f(i, j) + f(i + 1, j);
      else if (i == 0)
        dxx = contact ? f(0, j) - 2.0 * f(1, j) + f(2, j) : 2.0 * (f(1, j) - f(0, j));
      else
        dxx = contact ? f(nx - 1, j) - 2.0 * f(nx - 2, j) + f(nx - 3, j)
                      : 2.0 * (f(nx - 2, j) - f(nx - 1, j));
      if (j > 0 && j < ny - 1)
        dyy = f(i, j - 1) - 2.0 * f(i, j) + f(i, j + 1);
      else if (j == 0)
        dyy = contact ? f(i, 0) - 2.0 * f(i, 1) + f(i, 2) : 2.0 * (f(i, 1) - f(i, 0));
      else
        dyy = contact ? f(i, ny - 1) - 2.0 * f(i, ny - 2) + f(i, ny - 3)
                      : 2.0 * (f(i, ny - 2) - f(i, ny - 1));
      out(i, j) = dxx / (g.hx() * g.hx()) + dyy / (g.hy() * g.hy());
    }
  }
  return out;
}

namespace {

void require_positive(const ScalarField& gamma) {
  for (std::size_t n = 0; n < gamma.size(); ++n)
    if (!(gamma[n] > 0.0) || !std::isfinite(gamma[n]))
      throw InvalidInput("conductivity must be positive, got " + std::to_string(gamma[n]) +
                         " at node " + std::to_string(n));
}

}  // namespace

ScalarField doping_from_gamma(const ScalarField& gamma, const BoundarySpec& spec, double lambda) {
  require_positive(gamma);
  ScalarField lg = gamma;
  for (double& x : lg.values()) x = std::log(x);
  return gamma - (lambda * lambda) * laplacian(lg, spec);
}

ScalarField schrodinger_from_gamma(const ScalarField& gamma, const BoundarySpec& spec) {
  require_positive(gamma);
  ScalarField root = gamma;
  for (double& x : root.values()) x = std::sqrt(x);
  ScalarField v = laplacian(root, spec);
  for (std::size_t n = 0; n < v.size(); ++n) v[n] /= root[n];
  return v;
}

SparseSystem assemble_shifted_neumann(const Grid& grid) {
  SparseSystem s(grid.size());
  auto couple = [&](std::size_t a, std::size_t b, double k) {
    s.add(a, a, k);
    s.add(b, b, k);
    s.add(a, b, -k);
    s.add(b, a, -k);
  };
  for (int j = 0; j < grid.ny(); ++j) {
    for (int i = 0; i < grid.nx(); ++i) {
      const std::size_t n = grid.index(i, j);
      s.add(n, n, grid.cell_area(i, j));
      if (i + 1 < grid.nx())
        couple(n, grid.index(i + 1, j), grid.hy() * grid.cell_fraction_y(j) / grid.hx());
      if (j + 1 < grid.ny())
        couple(n, grid.index(i, j + 1), grid.hx() * grid.cell_fraction_x(i) / grid.hy());
    }
  }
  return s;
}

}  // namespace pnrecon
