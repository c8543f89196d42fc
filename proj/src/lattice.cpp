#include "pnrecon/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "pnrecon/errors.hpp"
#include "pnrecon/sparse.hpp"

namespace pnrecon {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string site_name(Site s) {
  return "(" + std::to_string(s.i) + "," + std::to_string(s.j) + ")";
}

// Dense row-major LU with partial pivoting; small systems only.
struct DenseLU {
  std::size_t n;
  std::vector<double> a;
  std::vector<std::size_t> perm;
  bool singular = false;

  DenseLU(std::vector<double> m, std::size_t size) : n(size), a(std::move(m)), perm(size) {
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    for (std::size_t k = 0; k < n; ++k) {
      std::size_t piv = k;
      for (std::size_t i = k + 1; i < n; ++i)
        if (std::abs(a[i * n + k]) > std::abs(a[piv * n + k])) piv = i;
      if (a[piv * n + k] == 0.0) {
        singular = true;
        return;
      }
      if (piv != k) {
        for (std::size_t j = 0; j < n; ++j) std::swap(a[k * n + j], a[piv * n + j]);
        std::swap(perm[k], perm[piv]);
      }
      for (std::size_t i = k + 1; i < n; ++i) {
        const double f = a[i * n + k] /= a[k * n + k];
        for (std::size_t j = k + 1; j < n; ++j) a[i * n + j] -= f * a[k * n + j];
      }
    }
  }

  std::vector<double> solve(const std::vector<double>& b) const {
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) {
      double s = b[perm[i]];
      for (std::size_t j = 0; j < i; ++j) s -= a[i * n + j] * x[j];
      x[i] = s;
    }
    for (std::size_t i = n; i-- > 0;) {
      double s = x[i];
      for (std::size_t j = i + 1; j < n; ++j) s -= a[i * n + j] * x[j];
      x[i] = s / a[i * n + i];
    }
    return x;
  }

  double det() const {
    if (singular) return 0.0;
    double d = 1.0;
    for (std::size_t i = 0; i < n; ++i) d *= a[i * n + i];
    // Sign of the row permutation.
    std::vector<std::size_t> p = perm;
    for (std::size_t i = 0; i < n; ++i)
      while (p[i] != i) {
        std::swap(p[i], p[p[i]]);
        d = -d;
      }
    return d;
  }

  double inverse_norm_inf() const {
    std::vector<double> rows(n, 0.0), e(n, 0.0);
    for (std::size_t c = 0; c < n; ++c) {
      e[c] = 1.0;
      const auto col = solve(e);
      e[c] = 0.0;
      for (std::size_t r = 0; r < n; ++r) rows[r] += std::abs(col[r]);
    }
    return *std::max_element(rows.begin(), rows.end());
  }
};

double norm_inf(const std::vector<double>& m, std::size_t n) {
  double best = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += std::abs(m[i * n + j]);
    best = std::max(best, s);
  }
  return best;
}

constexpr Site kSteps[4] = {{-1, 0}, {1, 0}, {0, -1}, {0, 1}};

}  // namespace

// ---------------------------------------------------------------------------

Lattice::Lattice(int N, double eps, double fill) : N_(N), eps_(eps) {
  if (N < 1) throw InvalidInput("lattice side must be at least 1");
  if (!(eps > 0.0)) throw InvalidInput("lattice spacing must be positive");
  w_.assign(static_cast<std::size_t>(N) * N, fill);
}

std::size_t Lattice::index(int i, int j) const {
  if (i < 1 || i > N_ || j < 1 || j > N_)
    throw InvalidInput("lattice site " + site_name({i, j}) + " outside 1.." + std::to_string(N_));
  return static_cast<std::size_t>(j - 1) * N_ + (i - 1);
}

void Lattice::validate(bool relaxed) const {
  for (int j = 1; j <= N_; ++j)
    for (int i = 1; i <= N_; ++i) {
      const double v = w(i, j);
      const bool ok = relaxed ? (v >= 0.0 && v <= 1.0) : (v > 0.0 && v < 1.0);
      if (!ok)
        throw InvalidInput("w" + site_name({i, j}) + " = " + std::to_string(v) + " outside " +
                           (relaxed ? "[0,1]" : "(0,1)"));
    }
}

Lattice w_from_potential(int N, const std::vector<double>& V, double eps, bool relaxed) {
  Lattice l(N, eps);
  if (V.size() != l.weights().size()) throw InvalidInput("potential array has the wrong size");
  for (int j = 1; j <= N; ++j)
    for (int i = 1; i <= N; ++i) {
      const double d = 4.0 + eps * eps * V[static_cast<std::size_t>(j - 1) * N + (i - 1)];
      if (!(d > 0.0))
        throw InvalidInput("4 + eps^2 V <= 0 at site " + site_name({i, j}));
      l.w(i, j) = 4.0 / d;
    }
  l.validate(relaxed);
  return l;
}

std::vector<double> potential_from_w(const Lattice& l) {
  const double e2 = l.eps() * l.eps();
  std::vector<double> V(l.weights().size());
  for (std::size_t k = 0; k < V.size(); ++k) {
    if (!(l.weights()[k] > 0.0)) throw InvalidInput("potential undefined for w <= 0");
    V[k] = (4.0 / l.weights()[k] - 4.0) / e2;
  }
  return V;
}

double effective_weight(double w) { return 3.0 * w / (4.0 - w); }

// ---------------------------------------------------------------------------

LatticeLayout::LatticeLayout(int N) : N_(N) {
  if (N < 1) throw InvalidInput("lattice side must be at least 1");
  labels_.assign(4 * static_cast<std::size_t>(N), LatticeBoundary::Neumann);
}

LatticeLayout LatticeLayout::standard(int N, int p_prime) {
  if (p_prime < 1 || p_prime + 1 > N)
    throw InvalidInput("standard layout needs 1 <= p' < N, got p' = " + std::to_string(p_prime));
  LatticeLayout l(N);
  for (int k = 1; k <= p_prime + 1; ++k) {
    l.set({0, k}, LatticeBoundary::Measure);
    l.set({k, 0}, LatticeBoundary::Measure);
  }
  for (int j = 1; j <= N; ++j) l.set({N + 1, j}, LatticeBoundary::Source);
  for (int j = N - p_prime + 1; j <= N; ++j) l.detectors.push_back({N + 1, j});
  return l;
}

bool LatticeLayout::is_boundary(Site s) const {
  const bool ie = s.i == 0 || s.i == N_ + 1, je = s.j == 0 || s.j == N_ + 1;
  const bool iin = s.i >= 1 && s.i <= N_, jin = s.j >= 1 && s.j <= N_;
  return (ie && jin) || (je && iin);
}

std::size_t LatticeLayout::slot(Site s) const {
  if (!is_boundary(s)) throw InvalidInput("site " + site_name(s) + " is not a boundary site");
  const std::size_t n = N_;
  if (s.i == 0) return s.j - 1;
  if (s.i == N_ + 1) return n + s.j - 1;
  if (s.j == 0) return 2 * n + s.i - 1;
  return 3 * n + s.i - 1;
}

LatticeBoundary LatticeLayout::label(Site s) const { return labels_[slot(s)]; }
void LatticeLayout::set(Site s, LatticeBoundary label) { labels_[slot(s)] = label; }

std::vector<Site> LatticeLayout::boundary_sites() const {
  std::vector<Site> out;
  for (int j = 1; j <= N_; ++j) out.push_back({0, j});
  for (int j = 1; j <= N_; ++j) out.push_back({N_ + 1, j});
  for (int i = 1; i <= N_; ++i) out.push_back({i, 0});
  for (int i = 1; i <= N_; ++i) out.push_back({i, N_ + 1});
  return out;
}

std::vector<Site> LatticeLayout::sites(LatticeBoundary lab) const {
  std::vector<Site> out;
  for (Site s : boundary_sites())
    if (label(s) == lab) out.push_back(s);
  return out;
}

Site LatticeLayout::inward(Site s) const {
  if (!is_boundary(s)) throw InvalidInput("site " + site_name(s) + " is not a boundary site");
  if (s.i == 0) return {1, s.j};
  if (s.i == N_ + 1) return {N_, s.j};
  if (s.j == 0) return {s.i, 1};
  return {s.i, N_};
}

// ---------------------------------------------------------------------------

namespace {

void check_detector(const LatticeLayout& layout, Site d) {
  if (!layout.is_boundary(d) || layout.label(d) != LatticeBoundary::Source)
    throw InvalidInput("detector " + site_name(d) + " is not on the source contact");
}

void check_pair(const Lattice& l, const LatticeLayout& layout) {
  if (l.N() != layout.N()) throw InvalidInput("lattice and layout sizes differ");
}

std::size_t unknown(int N, int i, int j) { return static_cast<std::size_t>(j - 1) * N + (i - 1); }

// Fill boundary values of z from the boundary conditions.
void apply_boundary(LatticeSolution& sol, const LatticeLayout& layout) {
  for (Site s : layout.boundary_sites()) {
    switch (layout.label(s)) {
      case LatticeBoundary::Source: sol(s.i, s.j) = s == sol.detector ? 1.0 : 0.0; break;
      case LatticeBoundary::Measure: sol(s.i, s.j) = 0.0; break;
      case LatticeBoundary::Neumann: {
        const Site in = layout.inward(s);
        sol(s.i, s.j) = sol(in.i, in.j);
        break;
      }
    }
  }
}

LatticeSolution empty_solution(int N, Site d) {
  LatticeSolution sol;
  sol.N = N;
  sol.detector = d;
  sol.z.assign(static_cast<std::size_t>(N + 2) * (N + 2), 0.0);
  return sol;
}

}  // namespace

LatticeSolution lattice_solve(const Lattice& l, const LatticeLayout& layout, Site d,
                              NeumannForm form) {
  check_pair(l, layout);
  l.validate();
  check_detector(layout, d);
  const int N = l.N();
  SparseSystem sys(static_cast<std::size_t>(N) * N);
  for (int j = 1; j <= N; ++j)
    for (int i = 1; i <= N; ++i) {
      const std::size_t r = unknown(N, i, j);
      const double w = l.w(i, j);
      int k = 0;
      for (Site st : kSteps) {
        const Site nb{i + st.i, j + st.j};
        if (layout.is_boundary(nb) && layout.label(nb) == LatticeBoundary::Neumann) ++k;
      }
      const double diag = form == NeumannForm::Direct ? 1.0 - k * w / 4.0 : 1.0;
      const double c = form == NeumannForm::Direct ? w / 4.0 : w / (4.0 - k * w);
      sys.add(r, r, diag);
      for (Site st : kSteps) {
        const Site nb{i + st.i, j + st.j};
        if (!layout.is_boundary(nb)) {
          sys.add(r, unknown(N, nb.i, nb.j), -c);
        } else if (layout.label(nb) == LatticeBoundary::Source && nb == d) {
          sys.rhs[r] += c;
        }
      }
    }
  for (std::size_t r = 0; r < sys.n; ++r) {
    double off = 0.0, diag = 0.0;
    for (const auto& [col, v] : sys.rows[r]) (col == r ? diag : off) += std::abs(v);
    // Dirichlet and Neumann neighbours make the row strictly dominant; a
    // row with four interior neighbours is strict because w < 1.
    if (!(diag > off))
      throw InvalidInput("lattice matrix is not strictly diagonally dominant in row " +
                         std::to_string(r));
  }
  const std::vector<double> x = BandedLU(sys).solve(sys.rhs);
  LatticeSolution sol = empty_solution(N, d);
  for (int j = 1; j <= N; ++j)
    for (int i = 1; i <= N; ++i) sol(i, j) = x[unknown(N, i, j)];
  apply_boundary(sol, layout);
  return sol;
}

std::vector<double> measurements(const LatticeSolution& sol, const LatticeLayout& layout) {
  std::vector<double> out;
  for (Site s : layout.sites(LatticeBoundary::Measure)) {
    const Site in = layout.inward(s);
    out.push_back(sol(in.i, in.j));
  }
  return out;
}

int min_length(Site a, Site b) { return std::abs(a.i - b.i) + std::abs(a.j - b.j); }

double path_count(Site a, Site b) {
  const int l = min_length(a, b);
  const int k = std::min(std::abs(a.i - b.i), std::abs(a.j - b.j));
  double c = 1.0;
  for (int m = 1; m <= k; ++m) c = c * (l - k + m) / m;
  return std::round(c);
}

LatticeSolution path_sum_partial(const Lattice& l, const LatticeLayout& layout, Site d,
                                 int max_len) {
  check_pair(l, layout);
  l.validate(true);
  check_detector(layout, d);
  if (max_len < 0) throw InvalidInput("max_len must be non-negative");
  const int N = l.N();
  LatticeSolution cur = empty_solution(N, d);
  for (int it = 0; it < max_len; ++it) {
    LatticeSolution next = empty_solution(N, d);
    // Boundary values of the previous iterate; the impulse enters here.
    apply_boundary(cur, layout);
    for (int j = 1; j <= N; ++j)
      for (int i = 1; i <= N; ++i) {
        double s = 0.0;
        for (Site st : kSteps) s += cur(i + st.i, j + st.j);
        next(i, j) = l.w(i, j) / 4.0 * s;
      }
    cur = std::move(next);
  }
  apply_boundary(cur, layout);
  return cur;
}

double sweep_determinant(const std::vector<LatticeSolution>& z, int p) {
  if (p < 1 || static_cast<std::size_t>(p) > z.size())
    throw InvalidInput("sweep_determinant needs 1 <= p <= number of detectors");
  const std::size_t n = p;
  std::vector<double> m(n * n);
  for (int q = 1; q <= p; ++q)
    for (int c = 0; c < p; ++c) m[(q - 1) * n + c] = z[c](q, p + 1 - q);
  return DenseLU(std::move(m), n).det();
}

// ---------------------------------------------------------------------------

std::vector<Site> required_sites(int N, int p_prime) {
  if (p_prime < 1 || 2 * p_prime > N + 1)
    throw InvalidInput("diagonal sweep needs 1 <= p' and 2p' <= N + 1");
  std::vector<Site> out;
  for (int k = 1; k <= p_prime; ++k) {
    out.push_back({0, k});
    out.push_back({k, 0});
  }
  out.push_back({1, 1});
  for (int k = 2; k <= p_prime + 1; ++k) {
    out.push_back({1, k});
    out.push_back({k, 1});
  }
  return out;
}

SweepData sweep_data(const Lattice& l, const LatticeLayout& layout, int p_prime) {
  check_pair(l, layout);
  const auto req = required_sites(l.N(), p_prime);
  SweepData data;
  data.N = l.N();
  data.detectors = layout.detectors;
  for (Site d : layout.detectors) {
    const LatticeSolution full = lattice_solve(l, layout, d);
    LatticeSolution part = empty_solution(l.N(), d);
    std::fill(part.z.begin(), part.z.end(), kNaN);
    for (Site s : req) part(s.i, s.j) = full(s.i, s.j);
    data.values.push_back(std::move(part));
  }
  return data;
}

namespace {

Recovery sweep(const SweepData& data, int p_prime) {
  const int N = data.N;
  const auto req = required_sites(N, p_prime);
  if (data.values.size() != data.detectors.size())
    throw InvalidInput("sweep data: one value array per detector expected");
  if (data.detectors.size() < static_cast<std::size_t>(p_prime))
    throw InvalidInput("sweep needs at least p' = " + std::to_string(p_prime) + " detectors");
  for (std::size_t m = 0; m < data.values.size(); ++m) {
    if (data.values[m].N != N) throw InvalidInput("sweep data: lattice size mismatch");
    for (Site s : req)
      if (!std::isfinite(data.values[m](s.i, s.j)))
        throw InvalidInput("sweep data: missing required value at " + site_name(s) +
                           " for detector " + site_name(data.detectors[m]));
  }

  Recovery out;
  out.N = N;
  out.p_prime = p_prime;
  out.Vhat.assign(static_cast<std::size_t>(N) * N, kNaN);
  out.w.assign(out.Vhat.size(), kNaN);
  std::vector<LatticeSolution> z = data.values;
  const std::size_t M = z.size();
  auto vhat = [&](int i, int j) -> double& {
    return out.Vhat[static_cast<std::size_t>(j - 1) * N + (i - 1)];
  };

  for (int p = 1; p <= p_prime; ++p) {
    // Genericity gate on the first p detectors.
    DiagonalReport rep;
    rep.p = p;
    {
      std::vector<LatticeSolution> first(z.begin(), z.begin() + p);
      rep.det = sweep_determinant(first, p);
      // Each detector column scales independently with its distance to the
      // diagonal, so normalize by column norms.
      double hadamard = 1.0;
      for (int c = 0; c < p; ++c) {
        double col = 0.0;
        for (int q = 1; q <= p; ++q) col += std::abs(z[c](q, p + 1 - q));
        hadamard *= col;
      }
      rep.det_tol = 1e-12 * hadamard;
      if (!(std::abs(rep.det) > rep.det_tol))
        throw GenericityError("diagonal sweep: |D_" + std::to_string(p) + "| = " +
                                  std::to_string(std::abs(rep.det)) + " is below tolerance",
                              p, rep.det);
    }

    // Unknowns: V-hat at (q, p+1-q) for q = 1..p, then for each detector
    // m < p the z values at (q+1, p+1-q), q = 1..p-1.
    const std::size_t n = static_cast<std::size_t>(p) * p;
    auto zcol = [&](int m, int q) { return p + static_cast<std::size_t>(m) * (p - 1) + (q - 1); };
    std::vector<double> A(n * n, 0.0), b(n, 0.0);
    for (int m = 0; m < p; ++m)
      for (int q = 1; q <= p; ++q) {
        const int r = p + 1 - q;
        const std::size_t row = static_cast<std::size_t>(m) * p + (q - 1);
        A[row * n + (q - 1)] = z[m](q, r);
        // Right neighbour (q+1, r): unknown unless it is the first-layer site (p+1, 1).
        if (q < p)
          A[row * n + zcol(m, q)] = -1.0;
        else
          b[row] += z[m](q + 1, r);
        // Upper neighbour (q, r+1): first-layer data for q = 1.
        if (q > 1)
          A[row * n + zcol(m, q - 1)] = -1.0;
        else
          b[row] += z[m](q, r + 1);
        b[row] += z[m](q - 1, r) + z[m](q, r - 1);
      }
    const DenseLU lu(A, n);
    if (lu.singular)
      throw GenericityError("diagonal sweep: singular system at diagonal " + std::to_string(p), p,
                            rep.det);
    const std::vector<double> x = lu.solve(b);
    rep.cond = norm_inf(A, n) * lu.inverse_norm_inf();

    for (int q = 1; q <= p; ++q) vhat(q, p + 1 - q) = x[q - 1];
    for (int m = 0; m < p; ++m)
      for (int q = 1; q < p; ++q) z[m](q + 1, p + 1 - q) = x[zcol(m, q)];
    // Remaining detectors: march along the next diagonal.
    for (std::size_t m = p; m < M; ++m)
      for (int q = 1; q < p; ++q) {
        const int r = p + 1 - q;
        z[m](q + 1, r) =
            vhat(q, r) * z[m](q, r) - z[m](q - 1, r) - z[m](q, r - 1) - z[m](q, r + 1);
      }
    out.reports.push_back(rep);
  }
  for (std::size_t k = 0; k < out.Vhat.size(); ++k)
    if (std::isfinite(out.Vhat[k])) out.w[k] = 4.0 / out.Vhat[k];
  return out;
}

}  // namespace

std::vector<Site> measured_sites(int N, int p_prime) {
  std::vector<Site> out;
  for (Site s : required_sites(N, p_prime))
    if (s.i == 1 || s.j == 1) out.push_back(s);
  return out;
}

Recovery recover_diagonals(const SweepData& data, int p_prime) {
  Recovery out = sweep(data, p_prime);
  // Linearized sensitivity of w to the first-layer data by central
  // differences; the sweep is smooth in the data away from D_p = 0.
  const int N = data.N;
  const auto meas = measured_sites(N, p_prime);
  std::vector<double> colsum(out.w.size(), 0.0);
  SweepData probe = data;
  for (std::size_t m = 0; m < data.values.size(); ++m)
    for (Site s : meas) {
      double& v = probe.values[m](s.i, s.j);
      const double v0 = v;
      const double h = 1e-6 * std::abs(v0);
      if (h == 0.0) continue;
      v = v0 + h;
      const Recovery up = sweep(probe, p_prime);
      v = v0 - h;
      const Recovery dn = sweep(probe, p_prime);
      v = v0;
      for (std::size_t k = 0; k < colsum.size(); ++k)
        if (std::isfinite(out.w[k])) colsum[k] += std::abs(up.w[k] - dn.w[k]) / (2.0 * h);
    }
  for (auto& rep : out.reports)
    for (int q = 1; q <= rep.p; ++q)
      rep.amplification = std::max(
          rep.amplification, colsum[static_cast<std::size_t>(rep.p - q) * N + (q - 1)]);
  return out;
}

double recovery_error(const Recovery& r, const Lattice& truth, int p) {
  if (truth.N() != r.N) throw InvalidInput("recovery and truth sizes differ");
  const int last = p > 0 ? p : r.p_prime;
  double err = 0.0;
  for (int j = 1; j <= r.N; ++j)
    for (int i = 1; i <= r.N; ++i) {
      const int diag = i + j - 1;
      if (diag > last || (p > 0 && diag != p)) continue;
      err = std::max(err, std::abs(r.w_at(i, j) - truth.w(i, j)));
    }
  return err;
}

// ---------------------------------------------------------------------------

void write_lattice(std::ostream& os, const Lattice& l) {
  os << std::setprecision(17) << "lattice " << l.N() << ' ' << l.eps() << '\n';
  for (int j = 1; j <= l.N(); ++j) {
    for (int i = 1; i <= l.N(); ++i) os << (i > 1 ? " " : "") << l.w(i, j);
    os << '\n';
  }
}

Lattice read_lattice(std::istream& is) {
  std::string tag;
  int N = 0;
  double eps = 0.0;
  if (!(is >> tag >> N >> eps) || tag != "lattice")
    throw InvalidInput("lattice file: expected header 'lattice <N> <eps>'");
  Lattice l(N, eps);
  for (int j = 1; j <= N; ++j)
    for (int i = 1; i <= N; ++i)
      if (!(is >> l.w(i, j)))
        throw InvalidInput("lattice file: missing weight at " + site_name({i, j}));
  std::string extra;
  if (is >> extra) throw InvalidInput("lattice file: trailing data '" + extra + "'");
  l.validate();
  return l;
}

void write_measurements_csv(std::ostream& os, const std::vector<LatticeSolution>& sols,
                            const LatticeLayout& layout) {
  os << std::setprecision(17) << "detector,site_i,site_j,value\n";
  // Contact sites on either side of a corner share an inward site; list it once.
  std::vector<Site> inner;
  for (Site s : layout.sites(LatticeBoundary::Measure)) {
    const Site in = layout.inward(s);
    if (std::find(inner.begin(), inner.end(), in) == inner.end()) inner.push_back(in);
  }
  for (std::size_t m = 0; m < sols.size(); ++m)
    for (Site in : inner) os << m + 1 << ',' << in.i << ',' << in.j << ',' << sols[m](in.i, in.j) << '\n';
}

void write_recovery_csv(std::ostream& os, const Recovery& r, const Lattice* truth) {
  os << std::setprecision(17) << "p,det_D_p,max_abs_error\n";
  for (const auto& rep : r.reports) {
    os << rep.p << ',' << rep.det << ',';
    if (truth) os << recovery_error(r, *truth, rep.p);
    os << '\n';
  }
}

}  // namespace pnrecon
