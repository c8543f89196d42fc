#pragma once

#include <vector>

#include "pnrecon/elliptic.hpp"
#include "pnrecon/grid.hpp"

namespace pnrecon {

/// N box sources U_j = 1 on |x - x_j| <= delta_x along the source contact,
/// centers x_j = j/(N+1).
struct VoltageBasis {
  int N = 9;
  double delta_x = 1.0 / 20.0;

  double center(int j) const { return static_cast<double>(j) / (N + 1); }
  /// Throws unless every support lies inside the source contact.
  void validate(const Grid& grid, const BoundarySpec& spec) const;
  /// U_j on the source-contact nodes (1-based j).
  std::vector<double> source(const Grid& grid, const BoundarySpec& spec, int j) const;
};

struct DtNDataset {
  VoltageBasis basis;
  std::vector<std::vector<double>> traces;
  /// Per-trace noise bound: ||Y_j^delta - Y_j|| <= delta.
  double delta = 0.0;
};

/// Cyclic component for step k >= 1: ((k - 1) mod N) + 1.
int component_index(long k, int N);

std::vector<double> component_apply(const ScalarField& gamma, const BoundarySpec& spec,
                                    const VoltageBasis& basis, int j,
                                    const ForwardConfig& cfg = {});

/// Nodes within `width` cells (Chebyshev distance) of a contact node.
std::vector<bool> contact_strip(const Grid& grid, const BoundarySpec& spec, int width);

/// One explicit smoothing pass: 1/2 self + 1/8 of each (mirrored) neighbour.
ScalarField smooth_once(const ScalarField& f);

/// Power-method estimate of ||F_j'(gamma)||^2 (largest eigenvalue of F'^* F').
double estimate_norm_sq(const ScalarField& gamma, const BoundarySpec& spec,
                        const std::vector<double>& source, int iterations = 8,
                        const ForwardConfig& cfg = {});

struct LkOptions {
  int max_cycles = 200;
  /// Relaxation; 0 selects 1 / max_j ||F_j'(gamma_0)||^2.
  double omega = 0.0;
  int power_iterations = 8;
  /// Frozen strip along the contacts (0 disables).
  int frozen_width = 3;
  bool smooth_gradient = false;
  double stop_tol = 1e-12;
  double tau_dp = 1.1;
  ForwardConfig forward;
};

struct LkStepInfo {
  int component = 0;
  double residual_l2 = 0.0;
};

/// gamma_{k+1} = clamp(gamma_k - omega F_j'(gamma_k)^* (F_j(gamma_k) - Y_j)).
/// Exactly two boundary-value solves (forward and adjoint).
ScalarField lk_step(const ScalarField& gamma, const BoundarySpec& spec, const DtNDataset& data,
                    long k, double omega, const std::vector<bool>& frozen, bool smooth,
                    const ForwardConfig& cfg = {}, LkStepInfo* info = nullptr);

struct LkCycleRecord {
  int cycle = 0;
  /// sqrt(sum_j ||r_j||^2) over the residuals met during the cycle.
  double residual_l2 = 0.0;
  double misclassified = -1.0;
  std::vector<double> component_residuals;
};

enum class LkStop { Tolerance, Discrepancy, MaxCycles };

struct LkResult {
  ScalarField gamma;
  double omega = 0.0;
  std::vector<LkCycleRecord> history;
  LkStop reason = LkStop::MaxCycles;
  /// Solves spent inside lk_step (2 per step).
  SolveCounter solves;
  /// Relaxation estimate and the initial residual check.
  SolveCounter setup;
};

/// Cycles of N Kaczmarz steps; stops at max_cycles or when the stacked
/// residual drops to tau_dp * sqrt(N) * delta (or stop_tol for exact data).
LkResult lk_run(const ScalarField& gamma0, const BoundarySpec& spec, const DtNDataset& data,
                const LkOptions& opts = {}, const ScalarField* truth = nullptr);

}  // namespace pnrecon
