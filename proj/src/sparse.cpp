#include "pnrecon/sparse.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "pnrecon/errors.hpp"

namespace pnrecon {

void SparseSystem::add(std::size_t row, std::size_t col, double value) {
  for (auto& [c, v] : rows[row]) {
    if (c == col) {
      v += value;
      return;
    }
  }
  rows[row].emplace_back(col, value);
}

double SparseSystem::coeff(std::size_t row, std::size_t col) const {
  for (const auto& [c, v] : rows[row])
    if (c == col) return v;
  return 0.0;
}

std::vector<double> SparseSystem::multiply(const std::vector<double>& x) const {
  std::vector<double> y(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (const auto& [c, v] : rows[i]) s += v * x[c];
    y[i] = s;
  }
  return y;
}

std::pair<std::size_t, std::size_t> SparseSystem::bandwidth() const {
  std::size_t lo = 0, hi = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& [c, v] : rows[i]) {
      if (v == 0.0) continue;
      if (c < i) lo = std::max(lo, i - c);
      if (c > i) hi = std::max(hi, c - i);
    }
  }
  return {lo, hi};
}

bool is_diagonally_dominant(const SparseSystem& s) {
  std::vector<bool> strict(s.n, false);
  for (std::size_t i = 0; i < s.n; ++i) {
    double diag = 0.0, off = 0.0;
    for (const auto& [c, v] : s.rows[i]) (c == i ? diag : off) += std::abs(v);
    const double slack = 1e-13 * std::max(1.0, std::abs(diag));
    if (diag + slack < off) return false;
    strict[i] = diag > off + slack;
  }
  // Union-find over the symmetrized matrix graph.
  std::vector<std::size_t> parent(s.n);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&](std::size_t a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  };
  for (std::size_t i = 0; i < s.n; ++i)
    for (const auto& [c, v] : s.rows[i])
      if (v != 0.0) parent[find(i)] = find(c);
  std::vector<bool> component_ok(s.n, false);
  for (std::size_t i = 0; i < s.n; ++i)
    if (strict[i]) component_ok[find(i)] = true;
  for (std::size_t i = 0; i < s.n; ++i)
    if (!component_ok[find(i)]) return false;
  return true;
}

double relative_residual(const SparseSystem& s, const std::vector<double>& x) {
  const std::vector<double> ax = s.multiply(x);
  double rr = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < s.n; ++i) {
    rr += (ax[i] - s.rhs[i]) * (ax[i] - s.rhs[i]);
    bb += s.rhs[i] * s.rhs[i];
  }
  return bb > 0.0 ? std::sqrt(rr / bb) : std::sqrt(rr);
}

// ---------------------------------------------------------------------------

BandedLU::BandedLU(const SparseSystem& s) : n_(s.n) {
  std::tie(lower_, upper_) = s.bandwidth();
  width_ = lower_ + upper_ + 1;
  band_.assign(n_ * width_, 0.0);
  for (std::size_t i = 0; i < n_; ++i)
    for (const auto& [c, v] : s.rows[i]) at(i, c) += v;

  for (std::size_t k = 0; k < n_; ++k) {
    const double pivot = at(k, k);
    if (pivot == 0.0 || !std::isfinite(pivot))
      throw SolverError("zero pivot in banded elimination at row " + std::to_string(k), 0.0);
    const std::size_t imax = std::min(n_ - 1, k + lower_);
    const std::size_t jmax = std::min(n_ - 1, k + upper_);
    for (std::size_t i = k + 1; i <= imax; ++i) {
      double& lik = at(i, k);
      if (lik == 0.0) continue;
      lik /= pivot;
      const double l = lik;
      for (std::size_t j = k + 1; j <= jmax; ++j) at(i, j) -= l * at(k, j);
    }
  }
}

std::vector<double> BandedLU::solve(const std::vector<double>& rhs) const {
  std::vector<double> x(rhs);
  for (std::size_t i = 0; i < n_; ++i) {
    const std::size_t k0 = i > lower_ ? i - lower_ : 0;
    double s = x[i];
    for (std::size_t k = k0; k < i; ++k) s -= at(i, k) * x[k];
    x[i] = s;
  }
  for (std::size_t ii = n_; ii-- > 0;) {
    const std::size_t jmax = std::min(n_ - 1, ii + upper_);
    double s = x[ii];
    for (std::size_t j = ii + 1; j <= jmax; ++j) s -= at(ii, j) * x[j];
    x[ii] = s / at(ii, ii);
  }
  return x;
}

// ---------------------------------------------------------------------------

std::vector<double> solve_pcg(const SparseSystem& s, double tol, int max_iter) {
  const std::size_t n = s.n;
  if (max_iter <= 0) max_iter = static_cast<int>(10 * n + 100);
  std::vector<double> inv_diag(n, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double d = s.coeff(i, i);
    if (d <= 0.0) throw InvalidInput("PCG requires a positive diagonal");
    inv_diag[i] = 1.0 / d;
  }
  auto dot = [](const std::vector<double>& a, const std::vector<double>& b) {
    double r = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) r += a[i] * b[i];
    return r;
  };

  std::vector<double> x(n, 0.0), r(s.rhs), z(n), p(n);
  const double bnorm = std::sqrt(dot(s.rhs, s.rhs));
  if (bnorm == 0.0) return x;
  for (std::size_t i = 0; i < n; ++i) z[i] = inv_diag[i] * r[i];
  p = z;
  double rz = dot(r, z);
  double rel = 1.0;
  for (int it = 0; it < max_iter; ++it) {
    const std::vector<double> ap = s.multiply(p);
    const double alpha = rz / dot(p, ap);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] += alpha * p[i];
      r[i] -= alpha * ap[i];
    }
    rel = std::sqrt(dot(r, r)) / bnorm;
    if (rel <= tol) return x;
    for (std::size_t i = 0; i < n; ++i) z[i] = inv_diag[i] * r[i];
    const double rz_next = dot(r, z);
    const double beta = rz_next / rz;
    rz = rz_next;
    for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
  }
  throw SolverError("PCG did not converge in " + std::to_string(max_iter) + " iterations", rel);
}

std::vector<double> solve(const SparseSystem& s, const SolveOptions& opts) {
  if (!(opts.tol > 0.0)) throw InvalidInput("solver tolerance must be positive");
  const bool direct = opts.method == SolveMethod::Direct ||
                      (opts.method == SolveMethod::Auto && s.n <= opts.direct_limit);
  if (direct) return BandedLU(s).solve(s.rhs);
  return solve_pcg(s, opts.tol, opts.max_iter);
}

}  // namespace pnrecon
