#pragma once

#include <cstddef>
#include <utility>
#include <vector>

namespace pnrecon {

/// Square sparse linear system stored as per-row (column, coefficient) lists.
struct SparseSystem {
  using Entry = std::pair<std::size_t, double>;

  std::size_t n = 0;
  std::vector<std::vector<Entry>> rows;
  std::vector<double> rhs;

  explicit SparseSystem(std::size_t size = 0) : n(size), rows(size), rhs(size, 0.0) {}

  void add(std::size_t row, std::size_t col, double value);
  double coeff(std::size_t row, std::size_t col) const;
  std::vector<double> multiply(const std::vector<double>& x) const;

  /// Largest |col - row| with a stored entry, split into (below, above).
  std::pair<std::size_t, std::size_t> bandwidth() const;
};

/// |a_ii| >= sum_{j != i} |a_ij| in every row, strict in at least one row of
/// every connected component of the matrix graph.
bool is_diagonally_dominant(const SparseSystem& s);

/// ||Ax - b||_2 / ||b||_2 (or ||Ax - b||_2 when b = 0).
double relative_residual(const SparseSystem& s, const std::vector<double>& x);

/// LU factorization without pivoting in band storage. Intended for the
/// diagonally dominant matrices assembled in this library, where elimination
/// without pivoting is stable.
class BandedLU {
 public:
  explicit BandedLU(const SparseSystem& s);

  std::vector<double> solve(const std::vector<double>& rhs) const;
  std::size_t size() const { return n_; }

 private:
  double& at(std::size_t i, std::size_t j) { return band_[i * width_ + (j + lower_ - i)]; }
  double at(std::size_t i, std::size_t j) const { return band_[i * width_ + (j + lower_ - i)]; }

  std::size_t n_ = 0;
  std::size_t lower_ = 0;
  std::size_t upper_ = 0;
  std::size_t width_ = 0;
  std::vector<double> band_;
};

/// Jacobi-preconditioned conjugate gradients for symmetric positive definite
/// systems. Throws SolverError carrying the final relative residual when the
/// iteration cap is hit.
std::vector<double> solve_pcg(const SparseSystem& s, double tol, int max_iter = 0);

enum class SolveMethod { Auto, Direct, Iterative };

struct SolveOptions {
  double tol = 1e-10;
  SolveMethod method = SolveMethod::Auto;
  /// Auto picks the banded direct path up to this many unknowns.
  std::size_t direct_limit = 40000;
  int max_iter = 0;
};

std::vector<double> solve(const SparseSystem& s, const SolveOptions& opts = {});

}  // namespace pnrecon
