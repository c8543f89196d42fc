#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace pnrecon {

/// Lattice site; interior sites are 1..N, boundary sites carry index 0 or N+1.
struct Site {
  int i = 0;
  int j = 0;
  bool operator==(const Site&) const = default;
};

enum class LatticeBoundary : std::uint8_t { Source, Measure, Neumann };

/// N x N survival probabilities w_ij in (0,1) on a lattice of spacing eps.
class Lattice {
 public:
  Lattice() = default;
  Lattice(int N, double eps, double fill = 0.5);

  int N() const { return N_; }
  double eps() const { return eps_; }
  double& w(int i, int j) { return w_[index(i, j)]; }
  double w(int i, int j) const { return w_[index(i, j)]; }
  const std::vector<double>& weights() const { return w_; }

  /// Throws InvalidInput naming the first site with w outside (0,1)
  /// (or outside [0,1] when relaxed).
  void validate(bool relaxed = false) const;

  bool operator==(const Lattice&) const = default;

 private:
  std::size_t index(int i, int j) const;

  int N_ = 0;
  double eps_ = 1.0;
  std::vector<double> w_;
};

/// w = 4 / (4 + eps^2 V) pointwise; V is N x N in the same order as weights().
Lattice w_from_potential(int N, const std::vector<double>& V, double eps, bool relaxed = false);
std::vector<double> potential_from_w(const Lattice& l);

/// 3w / (4 - w).
double effective_weight(double w);

/// Partition of the boundary sites into the source contact (detectors live
/// here), the grounded measurement contact and the Neumann part.
class LatticeLayout {
 public:
  LatticeLayout() = default;
  /// Every boundary site Neumann.
  explicit LatticeLayout(int N);

  /// Measurement contact on (0, 1..p'+1) and (1..p'+1, 0); source contact on
  /// the whole right edge; detectors (N+1, N-p'+1) .. (N+1, N) from bottom to top.
  static LatticeLayout standard(int N, int p_prime);

  int N() const { return N_; }
  LatticeBoundary label(Site s) const;
  void set(Site s, LatticeBoundary label);
  bool is_boundary(Site s) const;

  /// Boundary sites in natural order: left (j up), right (j up), bottom
  /// (i up), top (i up).
  std::vector<Site> boundary_sites() const;
  std::vector<Site> sites(LatticeBoundary label) const;
  /// Interior neighbour of a boundary site.
  Site inward(Site s) const;

  std::vector<Site> detectors;

 private:
  std::size_t slot(Site s) const;

  int N_ = 0;
  std::vector<LatticeBoundary> labels_;
};

/// z^d on the full (N+2) x (N+2) index range; boundary values follow the
/// boundary conditions, corners are unused (0).
struct LatticeSolution {
  int N = 0;
  Site detector;
  std::vector<double> z;

  double operator()(int i, int j) const { return z[static_cast<std::size_t>(j) * (N + 2) + i]; }
  double& operator()(int i, int j) { return z[static_cast<std::size_t>(j) * (N + 2) + i]; }
};

enum class NeumannForm { Direct, Effective };

/// Unique solution with Dirichlet impulse at detector d. `form` selects the
/// Neumann-adjacent row: (1 - k w/4) u - (w/4) sum = 0, or the equivalent
/// u - w/(4 - k w) sum = 0 with the Neumann neighbours treated as zero.
LatticeSolution lattice_solve(const Lattice& l, const LatticeLayout& layout, Site d,
                              NeumannForm form = NeumannForm::Direct);

/// z at the interior site next to each measurement-contact site, in the
/// contact's natural order.
std::vector<double> measurements(const LatticeSolution& sol, const LatticeLayout& layout);

int min_length(Site a, Site b);
/// Number of monotone lattice paths: binom(|di| + |dj|, |di|).
double path_count(Site a, Site b);

/// Jacobi iteration of the probabilistic fixed-point form, max_len sweeps
/// from zero: the sum over walks of at most max_len transitions.
LatticeSolution path_sum_partial(const Lattice& l, const LatticeLayout& layout, Site d, int max_len);

/// Rows: diagonal sites (q, p+1-q), q = 1..p; columns: the given solutions.
double sweep_determinant(const std::vector<LatticeSolution>& z, int p);

/// Per-detector boundary data read by the sweep: values of z at every site
/// with an index in {0, 1} (NaN where not supplied).
struct SweepData {
  int N = 0;
  std::vector<Site> detectors;
  std::vector<LatticeSolution> values;
};

/// Sites with an index in {0,1} up to diagonal p'+1 that the sweep reads.
std::vector<Site> required_sites(int N, int p_prime);

/// The subset of required_sites on the first interior layer (the ones that
/// carry measurement noise; index-0 values follow from the boundary conditions).
std::vector<Site> measured_sites(int N, int p_prime);

/// Simulates the data the sweep needs, using only the required sites.
SweepData sweep_data(const Lattice& l, const LatticeLayout& layout, int p_prime);

struct DiagonalReport {
  int p = 0;
  double det = 0.0;
  double det_tol = 0.0;
  /// Infinity-norm condition number of the diagonal's linear system.
  double cond = 0.0;
  /// First-order worst case of |w_rec - w| on this diagonal per unit
  /// absolute perturbation of each first-layer datum: max over the diagonal's
  /// sites of the summed |dw / dz|.
  double amplification = 0.0;
};

struct Recovery {
  int N = 0;
  int p_prime = 0;
  /// V-hat = 4/w and w on sites with i + j <= p'+1 (NaN elsewhere), N x N.
  std::vector<double> Vhat;
  std::vector<double> w;
  std::vector<DiagonalReport> reports;

  double w_at(int i, int j) const { return w[static_cast<std::size_t>(j - 1) * N + (i - 1)]; }
};

/// Diagonal sweep: at diagonal p, solve the p^2 x p^2 system for V-hat on
/// the diagonal and the interior z of the next diagonal for detectors
/// d_1..d_p, then march the remaining detectors. Throws GenericityError when
/// |D_p| <= 1e-12 * (product of the detector columns' 1-norms).
Recovery recover_diagonals(const SweepData& data, int p_prime);

// File formats.
void write_lattice(std::ostream& os, const Lattice& l);
Lattice read_lattice(std::istream& is);
void write_measurements_csv(std::ostream& os, const std::vector<LatticeSolution>& sols,
                            const LatticeLayout& layout);
/// max_abs_error per diagonal needs the truth; pass nullptr to leave it blank.
void write_recovery_csv(std::ostream& os, const Recovery& r, const Lattice* truth);

/// Largest |w_rec - w| over the covered diagonals.
double recovery_error(const Recovery& r, const Lattice& truth, int p = 0);

}  // namespace pnrecon
