#include "pnrecon/grid.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

#include "pnrecon/errors.hpp"

namespace pnrecon {

Grid::Grid(int nx, int ny) : nx_(nx), ny_(ny) {
  if (nx < 3 || ny < 3)
    throw InvalidInput("grid needs at least 3 nodes per direction, got " +
                       std::to_string(nx) + "x" + std::to_string(ny));
  hx_ = 1.0 / (nx - 1);
  hy_ = 1.0 / (ny - 1);
}

BoundaryLabel parse_label(std::string_view name) {
  if (name == "source" || name == "Gamma0") return BoundaryLabel::Source;
  if (name == "measure" || name == "Gamma1") return BoundaryLabel::Measure;
  if (name == "insulating" || name == "neumann") return BoundaryLabel::Insulating;
  throw InvalidInput("unknown boundary label '" + std::string(name) + "'");
}

std::string_view label_name(BoundaryLabel label) {
  switch (label) {
    case BoundaryLabel::Source: return "source";
    case BoundaryLabel::Measure: return "measure";
    case BoundaryLabel::Insulating: return "insulating";
  }
  return "?";
}

Edge parse_edge(std::string_view name) {
  if (name == "bottom") return Edge::Bottom;
  if (name == "right") return Edge::Right;
  if (name == "top") return Edge::Top;
  if (name == "left") return Edge::Left;
  throw InvalidInput("unknown edge '" + std::string(name) + "'");
}

std::string_view edge_name(Edge edge) {
  switch (edge) {
    case Edge::Bottom: return "bottom";
    case Edge::Right: return "right";
    case Edge::Top: return "top";
    case Edge::Left: return "left";
  }
  return "?";
}

BoundarySpec BoundarySpec::standard() {
  BoundarySpec spec;
  spec.set(Edge::Top, BoundaryLabel::Source);
  spec.set(Edge::Bottom, BoundaryLabel::Measure);
  return spec;
}

BoundarySpec& BoundarySpec::set(Edge edge, BoundaryLabel label, double lo, double hi) {
  if (!(lo >= 0.0 && hi <= 1.0 && lo <= hi))
    throw InvalidInput("contact interval must satisfy 0 <= lo <= hi <= 1");
  edges_[static_cast<int>(edge)] = EdgeAssignment{label, lo, hi};
  return *this;
}

namespace {

constexpr std::array<Edge, 4> kEdgeOrder{Edge::Bottom, Edge::Right, Edge::Top, Edge::Left};

int rank(BoundaryLabel label) {
  switch (label) {
    case BoundaryLabel::Measure: return 2;
    case BoundaryLabel::Source: return 1;
    case BoundaryLabel::Insulating: return 0;
  }
  return 0;
}

NodeRole role_of(BoundaryLabel label) {
  switch (label) {
    case BoundaryLabel::Measure: return NodeRole::Measure;
    case BoundaryLabel::Source: return NodeRole::Source;
    case BoundaryLabel::Insulating: return NodeRole::Insulating;
  }
  return NodeRole::Insulating;
}

// Nodes of an edge in increasing parameter order.
std::vector<std::pair<int, int>> edge_nodes(const Grid& g, Edge e) {
  std::vector<std::pair<int, int>> out;
  switch (e) {
    case Edge::Bottom:
      for (int i = 0; i < g.nx(); ++i) out.emplace_back(i, 0);
      break;
    case Edge::Top:
      for (int i = 0; i < g.nx(); ++i) out.emplace_back(i, g.ny() - 1);
      break;
    case Edge::Left:
      for (int j = 0; j < g.ny(); ++j) out.emplace_back(0, j);
      break;
    case Edge::Right:
      for (int j = 0; j < g.ny(); ++j) out.emplace_back(g.nx() - 1, j);
      break;
  }
  return out;
}

bool on_edge(const Grid& g, Edge e, int i, int j) {
  switch (e) {
    case Edge::Bottom: return j == 0;
    case Edge::Top: return j == g.ny() - 1;
    case Edge::Left: return i == 0;
    case Edge::Right: return i == g.nx() - 1;
  }
  return false;
}

// Label that edge `e` assigns to its node (i,j), honoring the contact interval.
BoundaryLabel edge_status(const Grid& g, const BoundarySpec& spec, Edge e, int i, int j) {
  const EdgeAssignment& a = spec.edge(e);
  if (a.label == BoundaryLabel::Insulating) return a.label;
  const bool horizontal = (e == Edge::Bottom || e == Edge::Top);
  const double t = horizontal ? g.x(i) : g.y(j);
  const double slack = 1e-12;
  return (t >= a.lo - slack && t <= a.hi + slack) ? a.label : BoundaryLabel::Insulating;
}

BoundaryLabel resolve(const Grid& g, const BoundarySpec& spec, int i, int j) {
  BoundaryLabel best = BoundaryLabel::Insulating;
  for (Edge e : kEdgeOrder) {
    if (!on_edge(g, e, i, j)) continue;
    const BoundaryLabel s = edge_status(g, spec, e, i, j);
    if (rank(s) > rank(best)) best = s;
  }
  return best;
}

}  // namespace

std::vector<NodeRole> node_roles(const Grid& grid, const BoundarySpec& spec) {
  std::vector<NodeRole> roles(grid.size(), NodeRole::Interior);
  for (int j = 0; j < grid.ny(); ++j)
    for (int i = 0; i < grid.nx(); ++i)
      if (grid.on_boundary(i, j)) roles[grid.index(i, j)] = role_of(resolve(grid, spec, i, j));
  return roles;
}

std::vector<std::size_t> boundary_nodes(const Grid& grid, const BoundarySpec& spec,
                                        BoundaryLabel label) {
  std::vector<std::size_t> out;
  std::vector<bool> seen(grid.size(), false);
  for (Edge e : kEdgeOrder) {
    for (auto [i, j] : edge_nodes(grid, e)) {
      const std::size_t n = grid.index(i, j);
      // A corner is listed with the first edge whose own label matches.
      if (seen[n] || edge_status(grid, spec, e, i, j) != label) continue;
      if (resolve(grid, spec, i, j) != label) continue;
      seen[n] = true;
      out.push_back(n);
    }
  }
  return out;
}

double boundary_segment_length(const Grid& grid, const BoundarySpec& spec, std::size_t n,
                               BoundaryLabel label) {
  const int i = grid.col(n);
  const int j = grid.row(n);
  double len = 0.0;
  for (Edge e : kEdgeOrder) {
    if (!on_edge(grid, e, i, j) || edge_status(grid, spec, e, i, j) != label) continue;
    const bool horizontal = (e == Edge::Bottom || e == Edge::Top);
    len += horizontal ? grid.hx() * grid.cell_fraction_x(i) : grid.hy() * grid.cell_fraction_y(j);
  }
  return len;
}

void BoundarySpec::validate(const Grid& grid) const {
  if (boundary_nodes(grid, *this, BoundaryLabel::Source).empty())
    throw InvalidInput("boundary spec has an empty source contact");
  if (boundary_nodes(grid, *this, BoundaryLabel::Measure).empty())
    throw InvalidInput("boundary spec has an empty measurement contact");
}

// ---------------------------------------------------------------------------

ScalarField::ScalarField(const Grid& grid, double value)
    : grid_(grid), values_(grid.size(), value) {}

ScalarField::ScalarField(const Grid& grid, std::vector<double> values)
    : grid_(grid), values_(std::move(values)) {
  if (values_.size() != grid_.size())
    throw InvalidInput("field size does not match grid");
}

bool ScalarField::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

double ScalarField::min() const { return *std::min_element(values_.begin(), values_.end()); }
double ScalarField::max() const { return *std::max_element(values_.begin(), values_.end()); }

void require_same_grid(const ScalarField& a, const ScalarField& b) {
  if (!(a.grid() == b.grid())) throw InvalidInput("fields live on different grids");
}

ScalarField& ScalarField::operator+=(const ScalarField& o) {
  require_same_grid(*this, o);
  for (std::size_t n = 0; n < values_.size(); ++n) values_[n] += o.values_[n];
  return *this;
}

ScalarField& ScalarField::operator-=(const ScalarField& o) {
  require_same_grid(*this, o);
  for (std::size_t n = 0; n < values_.size(); ++n) values_[n] -= o.values_[n];
  return *this;
}

ScalarField& ScalarField::operator*=(double c) {
  for (double& v : values_) v *= c;
  return *this;
}

ScalarField operator+(ScalarField a, const ScalarField& b) { return a += b; }
ScalarField operator-(ScalarField a, const ScalarField& b) { return a -= b; }
ScalarField operator*(double c, ScalarField a) { return a *= c; }

double inner(const ScalarField& a, const ScalarField& b) {
  require_same_grid(a, b);
  const Grid& g = a.grid();
  double s = 0.0;
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i) s += g.cell_area(i, j) * a(i, j) * b(i, j);
  return s;
}

FieldNorms norms(const ScalarField& f) {
  const Grid& g = f.grid();
  FieldNorms out;
  out.l2 = std::sqrt(inner(f, f));

  double grad2 = 0.0;
  double tv = 0.0;
  // x-differences: each owns a strip of height hy * cell_fraction_y(j).
  for (int j = 0; j < g.ny(); ++j) {
    const double strip = g.hy() * g.cell_fraction_y(j);
    for (int i = 0; i + 1 < g.nx(); ++i) {
      const double d = f(i + 1, j) - f(i, j);
      grad2 += (d / g.hx()) * (d / g.hx()) * g.hx() * strip;
      tv += std::abs(d) * strip;
    }
  }
  for (int j = 0; j + 1 < g.ny(); ++j) {
    for (int i = 0; i < g.nx(); ++i) {
      const double strip = g.hx() * g.cell_fraction_x(i);
      const double d = f(i, j + 1) - f(i, j);
      grad2 += (d / g.hy()) * (d / g.hy()) * g.hy() * strip;
      tv += std::abs(d) * strip;
    }
  }
  out.h1_semi = std::sqrt(grad2);
  out.bv = tv;
  return out;
}

void write_field(std::ostream& os, const ScalarField& f) {
  const Grid& g = f.grid();
  os << "field " << g.nx() << ' ' << g.ny() << '\n';
  os << std::setprecision(17);
  for (int j = 0; j < g.ny(); ++j) {
    for (int i = 0; i < g.nx(); ++i) {
      if (i) os << ' ';
      os << f(i, j);
    }
    os << '\n';
  }
}

ScalarField read_field(std::istream& is) {
  std::string tag;
  int nx = 0, ny = 0;
  if (!(is >> tag >> nx >> ny) || tag != "field")
    throw InvalidInput("field file must start with 'field <nx> <ny>'");
  Grid g(nx, ny);
  ScalarField f(g);
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i)
      if (!(is >> f(i, j))) throw InvalidInput("field file truncated");
  if (!f.all_finite()) throw InvalidInput("field file contains non-finite values");
  return f;
}

void save_field(const std::string& path, const ScalarField& f) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  write_field(os, f);
  if (!os) throw std::runtime_error("write failed: " + path);
}

ScalarField load_field(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  return read_field(is);
}

}  // namespace pnrecon
