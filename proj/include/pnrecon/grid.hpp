#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace pnrecon {

/// Node-centered uniform grid on the unit square. Node (i,j) sits at
/// (i*hx, j*hy); storage is row-major with j outer.
class Grid {
 public:
  Grid() = default;
  Grid(int nx, int ny);

  int nx() const { return nx_; }
  int ny() const { return ny_; }
  double hx() const { return hx_; }
  double hy() const { return hy_; }
  std::size_t size() const { return static_cast<std::size_t>(nx_) * ny_; }

  std::size_t index(int i, int j) const {
    return static_cast<std::size_t>(j) * nx_ + i;
  }
  int col(std::size_t n) const { return static_cast<int>(n % nx_); }
  int row(std::size_t n) const { return static_cast<int>(n / nx_); }
  double x(int i) const { return i * hx_; }
  double y(int j) const { return j * hy_; }

  /// Fraction of a full cell owned by node (i,j): 1/2 per boundary index.
  double cell_fraction_x(int i) const { return (i == 0 || i == nx_ - 1) ? 0.5 : 1.0; }
  double cell_fraction_y(int j) const { return (j == 0 || j == ny_ - 1) ? 0.5 : 1.0; }

  /// Control-volume area of node (i,j); these are the trapezoid weights and
  /// sum to exactly 1 over the grid.
  double cell_area(int i, int j) const {
    return hx_ * hy_ * cell_fraction_x(i) * cell_fraction_y(j);
  }
  double cell_area(std::size_t n) const { return cell_area(col(n), row(n)); }

  bool on_boundary(int i, int j) const {
    return i == 0 || j == 0 || i == nx_ - 1 || j == ny_ - 1;
  }

  bool operator==(const Grid& o) const { return nx_ == o.nx_ && ny_ == o.ny_; }

 private:
  int nx_ = 0;
  int ny_ = 0;
  double hx_ = 0.0;
  double hy_ = 0.0;
};

enum class BoundaryLabel : std::uint8_t { Source, Measure, Insulating };
enum class Edge : std::uint8_t { Bottom, Right, Top, Left };

BoundaryLabel parse_label(std::string_view name);
std::string_view label_name(BoundaryLabel label);
Edge parse_edge(std::string_view name);
std::string_view edge_name(Edge edge);

/// What a single edge carries. A contact may cover only [lo, hi] of the edge
/// (parametrized by x for horizontal edges, y for vertical ones); the rest of
/// that edge is insulating.
struct EdgeAssignment {
  BoundaryLabel label = BoundaryLabel::Insulating;
  double lo = 0.0;
  double hi = 1.0;

  bool operator==(const EdgeAssignment&) const = default;
};

/// Partition of the square's boundary into the source contact, the
/// measurement contact and the insulating part.
///
/// Corner nodes take the strongest label of the two edges meeting there,
/// with precedence Measure > Source > Insulating (Dirichlet beats Neumann,
/// and the grounded contact beats the driven one).
class BoundarySpec {
 public:
  BoundarySpec() = default;

  /// Source contact on y = 1, measurement contact on y = 0, sides insulating.
  static BoundarySpec standard();

  BoundarySpec& set(Edge edge, BoundaryLabel label, double lo = 0.0, double hi = 1.0);
  const EdgeAssignment& edge(Edge e) const { return edges_[static_cast<int>(e)]; }

  /// Throws InvalidInput unless both contacts own at least one node of `grid`.
  void validate(const Grid& grid) const;

  bool operator==(const BoundarySpec&) const = default;

 private:
  std::array<EdgeAssignment, 4> edges_{};
};

/// Per-node classification after corner resolution.
enum class NodeRole : std::uint8_t { Interior, Insulating, Source, Measure };

std::vector<NodeRole> node_roles(const Grid& grid, const BoundarySpec& spec);

/// Ordered node indices carrying `label`. Edges are visited bottom, right,
/// top, left; within an edge nodes follow increasing x (or y). Corners are
/// listed once, under the edge visited first.
std::vector<std::size_t> boundary_nodes(const Grid& grid, const BoundarySpec& spec,
                                        BoundaryLabel label);

/// Length of boundary owned by node `n` on edges whose status at `n` is
/// `label` (half a spacing per incident segment).
double boundary_segment_length(const Grid& grid, const BoundarySpec& spec, std::size_t n,
                               BoundaryLabel label);

/// Real-valued nodal field on a Grid.
class ScalarField {
 public:
  ScalarField() = default;
  explicit ScalarField(const Grid& grid, double value = 0.0);
  ScalarField(const Grid& grid, std::vector<double> values);

  template <class F>
  static ScalarField sample(const Grid& grid, F&& f) {
    ScalarField out(grid);
    for (int j = 0; j < grid.ny(); ++j)
      for (int i = 0; i < grid.nx(); ++i) out(i, j) = f(grid.x(i), grid.y(j));
    return out;
  }

  const Grid& grid() const { return grid_; }
  std::size_t size() const { return values_.size(); }

  double& operator()(int i, int j) { return values_[grid_.index(i, j)]; }
  double operator()(int i, int j) const { return values_[grid_.index(i, j)]; }
  double& operator[](std::size_t n) { return values_[n]; }
  double operator[](std::size_t n) const { return values_[n]; }

  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }

  bool all_finite() const;
  double min() const;
  double max() const;

  ScalarField& operator+=(const ScalarField& o);
  ScalarField& operator-=(const ScalarField& o);
  ScalarField& operator*=(double c);

  bool operator==(const ScalarField& o) const {
    return grid_ == o.grid_ && values_ == o.values_;
  }

 private:
  Grid grid_;
  std::vector<double> values_;
};

ScalarField operator+(ScalarField a, const ScalarField& b);
ScalarField operator-(ScalarField a, const ScalarField& b);
ScalarField operator*(double c, ScalarField a);

/// Throws InvalidInput when the two fields live on different grids.
void require_same_grid(const ScalarField& a, const ScalarField& b);

/// Discrete norms: trapezoid-weighted L2, forward-difference H1 seminorm, and
/// anisotropic (l1) total variation.
struct FieldNorms {
  double l2 = 0.0;
  double h1_semi = 0.0;
  double bv = 0.0;
};

FieldNorms norms(const ScalarField& f);

/// Trapezoid-weighted L2 inner product.
double inner(const ScalarField& a, const ScalarField& b);

// Field file format: "field <nx> <ny>" then ny rows of nx values, bottom row
// first, 17 significant digits.
void write_field(std::ostream& os, const ScalarField& f);
ScalarField read_field(std::istream& is);
void save_field(const std::string& path, const ScalarField& f);
ScalarField load_field(const std::string& path);

}  // namespace pnrecon
