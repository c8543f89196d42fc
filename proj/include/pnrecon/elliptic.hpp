#pragma once

#include <array>
#include <cstddef>
#include <memory>
#include <vector>

#include "pnrecon/grid.hpp"
#include "pnrecon/sparse.hpp"

namespace pnrecon {

/// Admissible conductivity range gamma_- <= gamma <= gamma_+.
struct ConductivityBounds {
  double lower = 1.0;
  double upper = 2.0;
};

enum class SolveKind : int { Forward = 0, Adjoint, Velocity, Linearized, Equilibrium, LineSearch };

/// Instrumentation: number of elliptic boundary-value solves by purpose.
struct SolveCounter {
  std::array<long, 6> counts{};

  void add(SolveKind kind) { ++counts[static_cast<int>(kind)]; }
  long operator[](SolveKind kind) const { return counts[static_cast<int>(kind)]; }
  /// Re-label one already counted solve, e.g. a line-search trial that is
  /// accepted and becomes the next forward state.
  void reattribute(SolveKind from, SolveKind to) {
    --counts[static_cast<int>(from)];
    ++counts[static_cast<int>(to)];
  }
  long total() const;
};

/// Dirichlet values on the two contacts, aligned with
/// boundary_nodes(grid, spec, Source) and boundary_nodes(grid, spec, Measure).
struct DirichletData {
  std::vector<double> source;
  std::vector<double> measure;

  static DirichletData zeros(const Grid& grid, const BoundarySpec& spec);
  static DirichletData constant(const Grid& grid, const BoundarySpec& spec, double value);
  /// Source trace taken from `source`, measurement contact grounded.
  static DirichletData driven(const Grid& grid, const BoundarySpec& spec,
                              std::vector<double> source);
};

/// div(gamma grad u) = 0 with u = U on the contacts and u_nu = 0 elsewhere.
struct EllipticProblem {
  ScalarField gamma;
  BoundarySpec spec;
  DirichletData data;
  ConductivityBounds bounds;
};

struct ForwardConfig {
  SolveOptions solver;
  ConductivityBounds bounds;
  SolveCounter* counter = nullptr;
};

/// 2ab/(a+b).
inline double harmonic_mean(double a, double b) { return 2.0 * a * b / (a + b); }

/// Finite-volume discretization of div(gamma grad .) for one conductivity.
///
/// Each node owns its (half or quarter, on the boundary) control volume; the
/// face between neighbours carries conductance H(gamma_a, gamma_b) * length /
/// distance with H the harmonic mean. Insulating boundary nodes keep their
/// equation (this is the ghost-node mirror condition scaled by the half
/// cell); contact nodes are eliminated into the right-hand side. The reduced
/// matrix is symmetric and diagonally dominant.
class ConductivityOperator {
 public:
  ConductivityOperator(const ScalarField& gamma, const BoundarySpec& spec,
                       const ForwardConfig& cfg = {});

  const Grid& grid() const { return gamma_.grid(); }
  const ScalarField& gamma() const { return gamma_; }
  const BoundarySpec& spec() const { return spec_; }
  const std::vector<std::size_t>& source_nodes() const { return source_nodes_; }
  const std::vector<std::size_t>& measure_nodes() const { return measure_nodes_; }
  /// Boundary length owned by each measurement node (trace quadrature weights).
  const std::vector<double>& measure_weights() const { return measure_weights_; }
  std::size_t unknowns() const { return node_of_unknown_.size(); }
  /// Node index of each reduced unknown (interior and insulating nodes).
  const std::vector<std::size_t>& unknown_nodes() const { return node_of_unknown_; }

  /// Full-size nodal vector holding the contact values (zero elsewhere).
  std::vector<double> contact_values(const DirichletData& data) const;

  /// Net conductance-weighted outflow sum_m K_nm (u_n - u_m) at every node.
  std::vector<double> flux_balance(const ScalarField& u) const;

  /// Reduced system for the given contact values.
  SparseSystem assemble(const DirichletData& data) const;

  /// Full nodal solution; counts one solve of `kind`.
  ScalarField solve(const DirichletData& data, SolveKind kind) const;

  /// Outward current -gamma du/dnu per unit length at the nodes of `label`,
  /// taken from the discrete flux balance of each boundary control volume.
  std::vector<double> outward_current(const ScalarField& u, BoundaryLabel label) const;

  /// Gradient density of J(gamma) = 1/2 ||trace(gamma) - Y||^2 given the
  /// forward state u and the adjoint state p (p = residual on the measurement
  /// contact, 0 on the source contact). Scaled so that
  /// dJ[h] = inner(w, h) with the trapezoid L2 product.
  ScalarField misfit_gradient(const ScalarField& u, const ScalarField& p) const;

  /// Directional derivative of the measurement-contact current along the
  /// conductivity perturbation `h`, given the forward state `u`.
  std::vector<double> linearized_current(const ScalarField& u, const ScalarField& h) const;

 private:
  struct Face {
    std::size_t a, b;
    double geometry;  // length / distance
  };

  std::vector<double> solve_reduced(const SparseSystem& s, SolveKind kind) const;
  ScalarField scatter(const std::vector<double>& reduced, std::vector<double> full) const;

  double face_conductance(const Face& f) const {
    return harmonic_mean(gamma_[f.a], gamma_[f.b]) * f.geometry;
  }

  ScalarField gamma_;
  BoundarySpec spec_;
  ForwardConfig cfg_;
  std::vector<NodeRole> roles_;
  std::vector<Face> faces_;
  std::vector<std::vector<std::size_t>> faces_of_node_;
  std::vector<std::ptrdiff_t> unknown_of_node_;
  std::vector<std::size_t> node_of_unknown_;
  std::vector<std::size_t> source_nodes_;
  std::vector<std::size_t> measure_nodes_;
  std::vector<double> measure_weights_;
  SparseSystem matrix_;
  mutable std::shared_ptr<const BandedLU> factor_;
};

/// Spec-level entry point: the reduced system for a problem.
SparseSystem assemble(const EllipticProblem& p);

/// Forward state and the current it drives through the measurement contact.
struct ForwardSolution {
  ScalarField u;
  std::vector<double> trace;
};

ForwardSolution solve_forward(const ConductivityOperator& op, const std::vector<double>& source);

/// Voltage-to-current map: source voltage on the source contact (measurement
/// contact grounded) to outward current on the measurement contact.
std::vector<double> dtn_apply(const ScalarField& gamma, const BoundarySpec& spec,
                              const std::vector<double>& source, const ForwardConfig& cfg = {});

/// Boundary-weighted inner product and norm on measurement-contact traces.
double trace_inner(const std::vector<double>& weights, const std::vector<double>& a,
                   const std::vector<double>& b);
double trace_norm(const std::vector<double>& weights, const std::vector<double>& a);

// ---------------------------------------------------------------------------
// Equilibrium and transforms

struct EquilibriumOptions {
  double tol = 1e-9;
  int max_iter = 100;
  double min_damping = 1.0 / (1 << 20);
  SolveOptions linear;
  SolveCounter* counter = nullptr;
};

struct EquilibriumResult {
  ScalarField potential;
  /// L2 norm of the pointwise residual before each Newton step and at exit.
  std::vector<double> residual_history;
  double residual_sup = 0.0;
  int iterations = 0;
};

/// Damped Newton for lambda^2 Lap V = exp(V) - C with V = V_bi on the
/// contacts and zero normal derivative on the insulating boundary.
EquilibriumResult solve_equilibrium_detailed(const ScalarField& doping, const BoundarySpec& spec,
                                             const DirichletData& built_in, double lambda,
                                             const EquilibriumOptions& opts = {});

ScalarField solve_equilibrium(const ScalarField& doping, const BoundarySpec& spec,
                              const DirichletData& built_in, double lambda,
                              const EquilibriumOptions& opts = {});

/// gamma = exp(V0).
ScalarField gamma_from_doping(const ScalarField& doping, const BoundarySpec& spec,
                              const DirichletData& built_in, double lambda,
                              const EquilibriumOptions& opts = {});

/// 5-point Laplacian: mirror reflection at insulating nodes, one-sided
/// second differences at contact nodes.
ScalarField laplacian(const ScalarField& f, const BoundarySpec& spec);

/// C = gamma - lambda^2 Lap(ln gamma).
ScalarField doping_from_gamma(const ScalarField& gamma, const BoundarySpec& spec, double lambda);

/// V = Lap(sqrt gamma) / sqrt gamma.
ScalarField schrodinger_from_gamma(const ScalarField& gamma, const BoundarySpec& spec);

/// (Lap - I) with zero normal derivative on the whole boundary, assembled as
/// the SPD matrix of -(Lap - I) weighted by control-volume areas.
SparseSystem assemble_shifted_neumann(const Grid& grid);

}  // namespace pnrecon
