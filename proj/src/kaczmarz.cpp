#include "pnrecon/kaczmarz.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pnrecon/errors.hpp"
#include "pnrecon/levelset.hpp"

namespace pnrecon {

namespace {

// Coordinate of a boundary node along its edge.
double edge_coordinate(const Grid& g, std::size_t n) {
  const int j = g.row(n);
  return (j == 0 || j == g.ny() - 1) ? g.x(g.col(n)) : g.y(j);
}

double stacked_norm(const std::vector<double>& parts) {
  double s = 0.0;
  for (double p : parts) s += p * p;
  return std::sqrt(s);
}

}  // namespace

void VoltageBasis::validate(const Grid& grid, const BoundarySpec& spec) const {
  if (N < 1) throw InvalidInput("voltage basis: N must be at least 1");
  if (!(delta_x > 0.0)) throw InvalidInput("voltage basis: delta_x must be positive");
  const auto nodes = boundary_nodes(grid, spec, BoundaryLabel::Source);
  if (nodes.empty()) throw InvalidInput("voltage basis: empty source contact");
  double lo = 1.0, hi = 0.0;
  for (std::size_t n : nodes) {
    lo = std::min(lo, edge_coordinate(grid, n));
    hi = std::max(hi, edge_coordinate(grid, n));
  }
  for (int j = 1; j <= N; ++j) {
    if (center(j) - delta_x < lo - 1e-12 || center(j) + delta_x > hi + 1e-12)
      throw InvalidInput("voltage basis: support of U_" + std::to_string(j) +
                         " leaves the source contact");
    if (source(grid, spec, j) == std::vector<double>(nodes.size(), 0.0))
      throw InvalidInput("voltage basis: U_" + std::to_string(j) + " covers no grid node");
  }
}

std::vector<double> VoltageBasis::source(const Grid& grid, const BoundarySpec& spec, int j) const {
  if (j < 1 || j > N)
    throw InvalidInput("component index " + std::to_string(j) + " outside 1.." + std::to_string(N));
  const auto nodes = boundary_nodes(grid, spec, BoundaryLabel::Source);
  std::vector<double> u(nodes.size(), 0.0);
  for (std::size_t k = 0; k < nodes.size(); ++k)
    if (std::abs(edge_coordinate(grid, nodes[k]) - center(j)) <= delta_x + 1e-12) u[k] = 1.0;
  return u;
}

int component_index(long k, int N) {
  if (k < 1 || N < 1) throw InvalidInput("component_index: k and N must be positive");
  return static_cast<int>((k - 1) % N) + 1;
}

std::vector<double> component_apply(const ScalarField& gamma, const BoundarySpec& spec,
                                    const VoltageBasis& basis, int j, const ForwardConfig& cfg) {
  return dtn_apply(gamma, spec, basis.source(gamma.grid(), spec, j), cfg);
}

std::vector<bool> contact_strip(const Grid& grid, const BoundarySpec& spec, int width) {
  std::vector<bool> mask(grid.size(), false);
  if (width <= 0) return mask;
  const auto roles = node_roles(grid, spec);
  for (std::size_t n = 0; n < grid.size(); ++n) {
    if (roles[n] != NodeRole::Source && roles[n] != NodeRole::Measure) continue;
    const int ci = grid.col(n), cj = grid.row(n);
    for (int j = std::max(0, cj - width); j <= std::min(grid.ny() - 1, cj + width); ++j)
      for (int i = std::max(0, ci - width); i <= std::min(grid.nx() - 1, ci + width); ++i)
        mask[grid.index(i, j)] = true;
  }
  return mask;
}

ScalarField smooth_once(const ScalarField& f) {
  const Grid& g = f.grid();
  auto at = [&](int i, int j) {
    i = i < 0 ? 1 : (i >= g.nx() ? g.nx() - 2 : i);
    j = j < 0 ? 1 : (j >= g.ny() ? g.ny() - 2 : j);
    return f(i, j);
  };
  ScalarField out(g);
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i)
      out(i, j) = 0.5 * f(i, j) +
                  0.125 * (at(i - 1, j) + at(i + 1, j) + at(i, j - 1) + at(i, j + 1));
  return out;
}

double estimate_norm_sq(const ScalarField& gamma, const BoundarySpec& spec,
                        const std::vector<double>& source, int iterations,
                        const ForwardConfig& cfg) {
  ConductivityOperator op(gamma, spec, cfg);
  const ForwardSolution fwd = solve_forward(op, source);
  const Grid& g = gamma.grid();
  ScalarField h(g, 1.0);
  double lambda = 0.0;
  for (int it = 0; it < iterations; ++it) {
    const double hn = std::sqrt(inner(h, h));
    if (hn == 0.0) return 0.0;
    h *= 1.0 / hn;
    DirichletData adj = DirichletData::zeros(g, spec);
    adj.measure = op.linearized_current(fwd.u, h);
    const ScalarField p = op.solve(adj, SolveKind::Linearized);
    h = op.misfit_gradient(fwd.u, p);
    lambda = std::sqrt(inner(h, h));
  }
  return lambda;
}

ScalarField lk_step(const ScalarField& gamma, const BoundarySpec& spec, const DtNDataset& data,
                    long k, double omega, const std::vector<bool>& frozen, bool smooth,
                    const ForwardConfig& cfg, LkStepInfo* info) {
  const int j = component_index(k, data.basis.N);
  if (data.traces.size() != static_cast<std::size_t>(data.basis.N))
    throw InvalidInput("dataset holds " + std::to_string(data.traces.size()) + " traces for N = " +
                       std::to_string(data.basis.N));
  const Grid& g = gamma.grid();
  ConductivityOperator op(gamma, spec, cfg);
  InverseDatum datum;
  datum.U = data.basis.source(g, spec, j);
  datum.Y = data.traces[j - 1];
  const ForwardSolution fwd = solve_forward(op, datum.U);
  const AdjointResult adj = adjoint_gradient(op, fwd.u, fwd.trace, datum);
  if (info) {
    info->component = j;
    info->residual_l2 = trace_norm(op.measure_weights(), adj.residual);
  }
  const ScalarField w = smooth ? smooth_once(adj.w) : adj.w;
  const ConductivityBounds b = cfg.bounds;
  ScalarField next = gamma;
  for (std::size_t n = 0; n < next.size(); ++n) {
    if (!frozen.empty() && frozen[n]) continue;
    next[n] = std::clamp(gamma[n] - omega * w[n], b.lower, b.upper);
  }
  return next;
}

LkResult lk_run(const ScalarField& gamma0, const BoundarySpec& spec, const DtNDataset& data,
                const LkOptions& opts, const ScalarField* truth) {
  const Grid& g = gamma0.grid();
  data.basis.validate(g, spec);
  if (data.traces.size() != static_cast<std::size_t>(data.basis.N))
    throw InvalidInput("dataset trace count does not match N");
  if (opts.max_cycles < 0) throw InvalidInput("lk_run: max_cycles must be non-negative");
  if (truth) require_same_grid(*truth, gamma0);
  const int N = data.basis.N;

  LkResult out;
  ForwardConfig setup_cfg = opts.forward;
  setup_cfg.counter = &out.setup;
  ForwardConfig step_cfg = opts.forward;
  step_cfg.counter = &out.solves;

  out.omega = opts.omega;
  if (!(out.omega > 0.0)) {
    double largest = 0.0;
    for (int j = 1; j <= N; ++j)
      largest = std::max(largest, estimate_norm_sq(gamma0, spec, data.basis.source(g, spec, j),
                                                   opts.power_iterations, setup_cfg));
    if (!(largest > 0.0)) throw SolverError("lk_run: vanishing derivative at gamma_0", 0.0);
    out.omega = 1.0 / largest;
  }

  const double target = data.delta > 0.0 ? opts.tau_dp * std::sqrt(double(N)) * data.delta
                                         : opts.stop_tol;
  const LkStop hit = data.delta > 0.0 ? LkStop::Discrepancy : LkStop::Tolerance;
  auto misclassified = [&](const ScalarField& gm) {
    return truth ? misclassified_fraction(gm, *truth) : -1.0;
  };

  // Cycle 0: residual of the starting guess.
  {
    LkCycleRecord rec;
    for (int j = 1; j <= N; ++j) {
      ConductivityOperator op(gamma0, spec, setup_cfg);
      const auto t = solve_forward(op, data.basis.source(g, spec, j)).trace;
      std::vector<double> r(t.size());
      for (std::size_t k = 0; k < t.size(); ++k) r[k] = t[k] - data.traces[j - 1][k];
      rec.component_residuals.push_back(trace_norm(op.measure_weights(), r));
    }
    rec.residual_l2 = stacked_norm(rec.component_residuals);
    rec.misclassified = misclassified(gamma0);
    out.history.push_back(rec);
  }

  const std::vector<bool> frozen = contact_strip(g, spec, opts.frozen_width);
  ScalarField gamma = gamma0;
  long k = 0;
  out.reason = LkStop::MaxCycles;
  for (int c = 1; c <= opts.max_cycles; ++c) {
    if (out.history.back().residual_l2 <= target) {
      out.reason = hit;
      break;
    }
    LkCycleRecord rec;
    rec.cycle = c;
    for (int s = 0; s < N; ++s) {
      LkStepInfo info;
      gamma = lk_step(gamma, spec, data, ++k, out.omega, frozen, opts.smooth_gradient, step_cfg,
                      &info);
      rec.component_residuals.push_back(info.residual_l2);
    }
    rec.residual_l2 = stacked_norm(rec.component_residuals);
    if (!std::isfinite(rec.residual_l2))
      throw StagnationError("Landweber-Kaczmarz: residual is not finite", c, rec.residual_l2);
    rec.misclassified = misclassified(gamma);
    out.history.push_back(rec);
  }
  if (out.reason == LkStop::MaxCycles && out.history.back().residual_l2 <= target) out.reason = hit;
  if (opts.forward.counter)
    for (std::size_t i = 0; i < out.solves.counts.size(); ++i)
      opts.forward.counter->counts[i] += out.solves.counts[i] + out.setup.counts[i];
  out.gamma = std::move(gamma);
  return out;
}

}  // namespace pnrecon
