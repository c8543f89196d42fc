#include "pnrecon/levelset.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

#include "pnrecon/errors.hpp"

namespace pnrecon {

LevelSetState LevelSetState::start(const ScalarField& phi0, double eps) {
  LevelSetState s;
  s.phi = phi0;
  s.phi0 = phi0;
  s.eps = eps > 0.0 ? eps : 2.0 * phi0.grid().hx();
  return s;
}

void LevelSetState::validate() const {
  require_same_grid(phi, phi0);
  if (!(eps > 0.0)) throw InvalidInput("level set: eps must be positive");
  if (!(beta > 0.0)) throw InvalidInput("level set: beta must be positive");
  if (!(alpha >= 0.0)) throw InvalidInput("level set: alpha must be non-negative");
  if (!(step > 0.0)) throw InvalidInput("level set: step must be positive");
  if (!phi.all_finite()) throw InvalidInput("level set: phi has non-finite entries");
}

ScalarField project(const ScalarField& phi) {
  ScalarField out(phi.grid());
  for (std::size_t n = 0; n < phi.size(); ++n)
    out[n] = phi[n] > 0.0 ? 2.0 : (phi[n] < 0.0 ? 1.0 : 1.5);
  return out;
}

double ramp(double t, double eps) {
  if (t <= -eps) return 1.0;
  if (t >= eps) return 2.0;
  return 1.0 + (t + eps) / (2.0 * eps);
}

double ramp_slope(double t, double eps) { return std::abs(t) < eps ? 0.5 / eps : 0.0; }

std::pair<ScalarField, ScalarField> project_smooth(const ScalarField& phi, double eps) {
  if (!(eps > 0.0)) throw InvalidInput("project_smooth: eps must be positive");
  ScalarField p(phi.grid()), dp(phi.grid());
  for (std::size_t n = 0; n < phi.size(); ++n) {
    p[n] = ramp(phi[n], eps);
    dp[n] = ramp_slope(phi[n], eps);
  }
  return {std::move(p), std::move(dp)};
}

ScalarField line_level_set(const Grid& grid, double y0, double y1) {
  const double norm = std::hypot(1.0, y1 - y0);
  return ScalarField::sample(grid, [=](double x, double y) {
    return (y - (y0 + (y1 - y0) * x)) / norm;
  });
}

// ---------------------------------------------------------------------------

AdjointResult adjoint_gradient(const ConductivityOperator& op, const ScalarField& u,
                               const std::vector<double>& trace, const InverseDatum& datum) {
  if (datum.Y.size() != trace.size())
    throw InvalidInput("adjoint_gradient: data length " + std::to_string(datum.Y.size()) +
                       " does not match the measurement contact (" +
                       std::to_string(trace.size()) + " nodes)");
  AdjointResult out;
  out.residual.resize(trace.size());
  for (std::size_t k = 0; k < trace.size(); ++k) out.residual[k] = trace[k] - datum.Y[k];
  DirichletData adj = DirichletData::zeros(op.grid(), op.spec());
  adj.measure = out.residual;
  const ScalarField p = op.solve(adj, SolveKind::Adjoint);
  out.w = op.misfit_gradient(u, p);
  return out;
}

AdjointResult adjoint_gradient(const ScalarField& gamma, const BoundarySpec& spec,
                               const InverseDatum& datum, const ForwardConfig& cfg) {
  ConductivityOperator op(gamma, spec, cfg);
  const ForwardSolution fwd = solve_forward(op, datum.U);
  return adjoint_gradient(op, fwd.u, fwd.trace, datum);
}

ScalarField curvature(const ScalarField& phi, double eps, double eta) {
  if (!(eta > 0.0)) throw InvalidInput("curvature: eta must be positive");
  const Grid& g = phi.grid();
  const ScalarField p = project_smooth(phi, eps).first;
  ScalarField nx(g), ny(g);
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i) {
      const double gx = i + 1 < g.nx() ? (p(i + 1, j) - p(i, j)) / g.hx() : 0.0;
      const double gy = j + 1 < g.ny() ? (p(i, j + 1) - p(i, j)) / g.hy() : 0.0;
      const double mag = std::max(std::hypot(gx, gy), eta);
      nx(i, j) = gx / mag;
      ny(i, j) = gy / mag;
    }
  ScalarField k(g);
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i) {
      const double wx = i > 0 ? nx(i - 1, j) : 0.0;
      const double wy = j > 0 ? ny(i, j - 1) : 0.0;
      k(i, j) = (nx(i, j) - wx) / g.hx() + (ny(i, j) - wy) / g.hy();
    }
  return k;
}

namespace {

// (I - Lap_h) weighted by control volumes, factored once per grid.
class ShiftedNeumann {
 public:
  explicit ShiftedNeumann(const Grid& g, const SolveOptions& opts = {})
      : grid_(g), matrix_(assemble_shifted_neumann(g)), opts_(opts) {
    const bool direct = opts.method == SolveMethod::Direct ||
                        (opts.method == SolveMethod::Auto && matrix_.n <= opts.direct_limit);
    if (direct) lu_ = std::make_unique<BandedLU>(matrix_);
  }

  ScalarField solve(const ScalarField& rhs) const {
    if (!(rhs.grid() == grid_)) throw InvalidInput("velocity right-hand side on a different grid");
    std::vector<double> b(rhs.size());
    for (std::size_t n = 0; n < b.size(); ++n) b[n] = -grid_.cell_area(n) * rhs[n];
    if (lu_) return ScalarField(grid_, lu_->solve(b));
    SparseSystem s = matrix_;
    s.rhs = std::move(b);
    return ScalarField(grid_, solve_pcg(s, opts_.tol, opts_.max_iter));
  }

 private:
  Grid grid_;
  SparseSystem matrix_;
  SolveOptions opts_;
  std::unique_ptr<BandedLU> lu_;
};

ScalarField velocity_rhs(const LevelSetState& state, const ScalarField& w, double eta) {
  require_same_grid(state.phi, w);
  const ScalarField dp = project_smooth(state.phi, state.eps).second;
  const ScalarField kappa = curvature(state.phi, state.eps, eta);
  ScalarField rhs(w.grid());
  for (std::size_t n = 0; n < rhs.size(); ++n)
    rhs[n] = dp[n] * (w[n] - state.beta * dp[n] * kappa[n]);
  return rhs;
}

double misfit_sq(const ConductivityOperator& op, const std::vector<double>& r) {
  const double n = trace_norm(op.measure_weights(), r);
  return n * n;
}

double prior_term(const LevelSetState& state, const ScalarField& phi) {
  const FieldNorms d = norms(phi - state.phi0);
  return state.alpha * (2.0 * state.beta * norms(project(phi)).bv + d.l2 * d.l2 +
                        d.h1_semi * d.h1_semi);
}

}  // namespace

ScalarField solve_shifted_neumann(const ScalarField& rhs, const SolveOptions& opts) {
  return ShiftedNeumann(rhs.grid(), opts).solve(rhs);
}

ScalarField velocity_solve(const LevelSetState& state, const ScalarField& w,
                           SolveCounter* counter, double eta) {
  const ScalarField rhs = velocity_rhs(state, w, eta);
  if (counter) counter->add(SolveKind::Velocity);
  return solve_shifted_neumann(rhs);
}

double tikhonov_value(const LevelSetState& state, const BoundarySpec& spec,
                      const InverseDatum& datum, const ForwardConfig& cfg) {
  state.validate();
  ConductivityOperator op(project_smooth(state.phi, state.eps).first, spec, cfg);
  const ForwardSolution fwd = solve_forward(op, datum.U);
  if (fwd.trace.size() != datum.Y.size()) throw InvalidInput("tikhonov_value: data length mismatch");
  std::vector<double> r(fwd.trace.size());
  for (std::size_t k = 0; k < r.size(); ++k) r[k] = fwd.trace[k] - datum.Y[k];
  return misfit_sq(op, r) + prior_term(state, state.phi);
}

double misclassified_fraction(const ScalarField& a, const ScalarField& b) {
  require_same_grid(a, b);
  const Grid& g = a.grid();
  double area = 0.0;
  for (std::size_t n = 0; n < a.size(); ++n) {
    const bool pa = a[n] > 1.5, pb = b[n] > 1.5;
    if (pa != pb) area += g.cell_area(n);
  }
  return area;
}

// ---------------------------------------------------------------------------

namespace {

struct Evaluation {
  ScalarField phi;
  std::shared_ptr<ConductivityOperator> op;
  ForwardSolution fwd;
  std::vector<double> residual;
  double residual_l2 = 0.0;
  double G = 0.0;
};

}  // namespace

EvolveResult evolve(LevelSetState state, const BoundarySpec& spec, const InverseDatum& datum,
                    const EvolveOptions& opts) {
  state.validate();
  if (opts.max_iter < 0) throw InvalidInput("evolve: max_iter must be non-negative");
  if (opts.truth) require_same_grid(*opts.truth, state.phi);
  const Grid& g = state.phi.grid();

  EvolveResult out;
  ForwardConfig cfg = opts.forward;
  cfg.counter = &out.solves;
  const ShiftedNeumann velocity(g, cfg.solver);

  std::vector<bool> pinned(g.size(), false);
  if (opts.pin_measure_contact)
    for (std::size_t n : boundary_nodes(g, spec, BoundaryLabel::Measure)) pinned[n] = true;

  auto evaluate = [&](const ScalarField& phi) {
    Evaluation e;
    e.phi = phi;
    e.op = std::make_shared<ConductivityOperator>(project_smooth(phi, state.eps).first, spec, cfg);
    e.fwd = solve_forward(*e.op, datum.U);
    if (e.fwd.trace.size() != datum.Y.size()) throw InvalidInput("evolve: data length mismatch");
    e.residual.resize(e.fwd.trace.size());
    for (std::size_t k = 0; k < e.residual.size(); ++k) e.residual[k] = e.fwd.trace[k] - datum.Y[k];
    e.residual_l2 = trace_norm(e.op->measure_weights(), e.residual);
    e.G = e.residual_l2 * e.residual_l2 + prior_term(state, phi);
    return e;
  };
  auto record = [&](const Evaluation& e, double step, long solves) {
    LevelSetRecord r;
    r.iter = state.iter;
    r.residual_l2 = e.residual_l2;
    r.G_alpha = e.G;
    if (opts.truth) r.misclassified = misclassified_fraction(project(e.phi), *opts.truth);
    r.step = step;
    r.core_solves = solves;
    out.history.push_back(r);
  };
  auto core = [&] {
    return out.solves[SolveKind::Forward] + out.solves[SolveKind::Adjoint] +
           out.solves[SolveKind::Velocity];
  };
  const double target = datum.delta > 0.0 ? opts.tau_dp * datum.delta : opts.stop_tol;
  const StopReason hit = datum.delta > 0.0 ? StopReason::Discrepancy : StopReason::Tolerance;

  Evaluation cur = evaluate(state.phi);
  record(cur, 0.0, 0);

  out.reason = StopReason::MaxIter;
  for (int k = 0; k < opts.max_iter; ++k) {
    if (cur.residual_l2 <= target) {
      out.reason = hit;
      break;
    }
    const long before = core();
    const AdjointResult adj = adjoint_gradient(*cur.op, cur.fwd.u, cur.fwd.trace, datum);
    out.solves.add(SolveKind::Velocity);
    ScalarField v = velocity.solve(velocity_rhs(state, adj.w, opts.eta));
    // H1 gradient of the prior term alpha/2 ||phi - phi0||^2_H1 is alpha (phi - phi0).
    if (opts.prior_in_velocity)
      for (std::size_t n = 0; n < v.size(); ++n) v[n] -= state.alpha * (cur.phi[n] - state.phi0[n]);
    for (std::size_t n = 0; n < v.size(); ++n)
      if (pinned[n]) v[n] = 0.0;

    double tau = state.step;
    bool accepted = false;
    for (int h = 0; h <= opts.max_halvings; ++h, tau *= 0.5) {
      ScalarField trial = cur.phi;
      for (std::size_t n = 0; n < trial.size(); ++n) trial[n] += tau * v[n];
      Evaluation next = evaluate(trial);
      if (next.G <= cur.G) {
        cur = std::move(next);
        accepted = true;
        break;
      }
      out.solves.reattribute(SolveKind::Forward, SolveKind::LineSearch);
    }
    if (!accepted)
      throw StagnationError("level set: G_alpha increased for every step down to 2^-" +
                                std::to_string(opts.max_halvings) + " * tau (G = " +
                                std::to_string(cur.G) + ")",
                            state.iter, cur.G);
    state.phi = cur.phi;
    ++state.iter;
    record(cur, tau, core() - before);
  }
  if (out.reason == StopReason::MaxIter && cur.residual_l2 <= target) out.reason = hit;
  if (opts.forward.counter)
    for (std::size_t i = 0; i < out.solves.counts.size(); ++i)
      opts.forward.counter->counts[i] += out.solves.counts[i];
  out.state = std::move(state);
  return out;
}

}  // namespace pnrecon
