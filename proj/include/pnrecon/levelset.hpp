#pragma once

#include <utility>
#include <vector>

#include "pnrecon/elliptic.hpp"
#include "pnrecon/grid.hpp"

namespace pnrecon {

/// One voltage-current pair: source voltage on the source contact and the
/// (possibly noisy) current measured on the measurement contact.
struct InverseDatum {
  std::vector<double> U;
  std::vector<double> Y;
  double delta = 0.0;
};

struct LevelSetState {
  ScalarField phi;
  ScalarField phi0;
  double eps = 0.0;
  double beta = 1e-5;
  double alpha = 1e-3;
  double step = 1.0;
  int iter = 0;

  /// eps defaults to 2 hx.
  static LevelSetState start(const ScalarField& phi0, double eps = 0.0);
  void validate() const;
};

/// 2 where phi > 0, 1 where phi < 0, 1.5 on phi = 0.
ScalarField project(const ScalarField& phi);

double ramp(double t, double eps);
double ramp_slope(double t, double eps);

/// Linear ramp P_eps and its derivative.
std::pair<ScalarField, ScalarField> project_smooth(const ScalarField& phi, double eps);

/// Signed distance to the line through (0, y0) and (1, y1), positive above.
ScalarField line_level_set(const Grid& grid, double y0, double y1);

struct AdjointResult {
  std::vector<double> residual;
  ScalarField w;
};

/// Residual F(gamma) - Y and the L2 gradient w of 1/2 ||F(gamma) - Y||^2
/// (so that the derivative along h is inner(w, h)). `u` is the forward
/// state for datum.U under `op`.
AdjointResult adjoint_gradient(const ConductivityOperator& op, const ScalarField& u,
                               const std::vector<double>& trace, const InverseDatum& datum);

AdjointResult adjoint_gradient(const ScalarField& gamma, const BoundarySpec& spec,
                               const InverseDatum& datum, const ForwardConfig& cfg = {});

/// div(grad P / max(|grad P|, eta)) with P = P_eps(phi); forward-difference
/// gradient, backward-difference divergence, zero flux across the boundary.
ScalarField curvature(const ScalarField& phi, double eps, double eta = 1e-8);

/// Solves (Lap_h - I) v = rhs with zero normal derivative on the whole boundary.
ScalarField solve_shifted_neumann(const ScalarField& rhs, const SolveOptions& opts = {});

/// The level-set velocity: (Lap - I) v = P'(phi) (w - beta P'(phi) kappa).
ScalarField velocity_solve(const LevelSetState& state, const ScalarField& w,
                           SolveCounter* counter = nullptr, double eta = 1e-8);

/// G_alpha = ||F(P_eps(phi)) - Y||^2 + alpha (2 beta |P(phi)|_BV + ||phi - phi0||^2_H1).
double tikhonov_value(const LevelSetState& state, const BoundarySpec& spec,
                      const InverseDatum& datum, const ForwardConfig& cfg = {});

/// Area fraction where the projections of two conductivities disagree.
double misclassified_fraction(const ScalarField& a, const ScalarField& b);

struct EvolveOptions {
  int max_iter = 500;
  /// Stop when ||residual|| <= stop_tol; with delta > 0 the discrepancy
  /// principle ||residual|| <= tau_dp * delta is used instead.
  double stop_tol = 1e-12;
  double tau_dp = 1.1;
  int max_halvings = 20;
  double eta = 1e-8;
  /// Add the H1 gradient of the prior term of G_alpha to the velocity so
  /// that the step is a descent direction for the full functional.
  bool prior_in_velocity = true;
  /// Freeze phi on the measurement contact, where the doping is known.
  bool pin_measure_contact = false;
  ForwardConfig forward;
  /// Optional ground truth for the history's misclassified fraction.
  const ScalarField* truth = nullptr;
};

struct LevelSetRecord {
  int iter = 0;
  double residual_l2 = 0.0;
  double G_alpha = 0.0;
  double misclassified = -1.0;
  double step = 0.0;
  /// Forward + adjoint + velocity solves spent on the update that produced
  /// this iterate (0 for the initial state).
  long core_solves = 0;
};

enum class StopReason { Tolerance, Discrepancy, MaxIter };

struct EvolveResult {
  LevelSetState state;
  std::vector<LevelSetRecord> history;
  StopReason reason = StopReason::MaxIter;
  SolveCounter solves;
};

/// phi_{k+1} = phi_k + tau v_k with tau halved until G_alpha does not
/// increase. The accepted trial's forward solve is reused as the next
/// iterate's forward solve; rejected trials are counted as LineSearch.
/// Throws StagnationError when no step in the schedule is acceptable.
EvolveResult evolve(LevelSetState state, const BoundarySpec& spec, const InverseDatum& datum,
                    const EvolveOptions& opts = {});

}  // namespace pnrecon
