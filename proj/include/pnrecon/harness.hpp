#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "pnrecon/grid.hpp"
#include "pnrecon/kaczmarz.hpp"
#include "pnrecon/lattice.hpp"
#include "pnrecon/levelset.hpp"

namespace pnrecon {

enum class PhantomKind { Linear, Analytic, Custom };
enum class Method { LevelSet, Kaczmarz, Lattice };

/// Junction curve y(x) separating gamma = 1 (below) from gamma = 2 (above).
struct PhantomSpec {
  PhantomKind kind = PhantomKind::Linear;
  double ya = 0.1;
  double yb = 0.4;
  double c0 = 0.5;
  double c1 = 0.15;
  std::string file;

  double curve(double x) const;
  void validate() const;
  bool operator==(const PhantomSpec&) const = default;
};

ScalarField make_phantom(const Grid& grid, const PhantomSpec& p);

/// Flat `key = value` configuration; see config_keys() for the key list.
struct ExperimentConfig {
  int nx = 64;
  int ny = 64;
  Edge source_edge = Edge::Top;
  double source_lo = 0.0;
  double source_hi = 1.0;
  Edge measure_edge = Edge::Bottom;
  double measure_lo = 0.0;
  double measure_hi = 1.0;

  PhantomSpec phantom;
  Method method = Method::LevelSet;

  // Level set.
  double alpha = 1e-3;
  double beta = 1e-5;
  double eps = 0.0;  // 0: two grid spacings
  double tau = 1.0;
  double tau_dp = 1.1;
  int max_iter = 500;
  double init_ya = 0.5;
  double init_yb = 0.5;
  bool pin_measure = false;

  // Landweber-Kaczmarz.
  int lk_n = 9;
  double lk_delta_x = 0.05;
  double omega = 0.0;  // 0: automatic
  int max_cycles = 200;
  int frozen_width = 3;
  bool smooth = false;
  double init_gamma = 1.5;

  // Lattice.
  int lattice_n = 7;
  int p_prime = 3;
  double lattice_eps = 1.0;
  double w_lo = 0.2;
  double w_hi = 0.8;
  std::string lattice_file;

  double noise = 0.0;
  std::optional<std::uint64_t> seed;
  std::string output;

  BoundarySpec boundary() const;
  Grid grid() const { return Grid(nx, ny); }
  /// Throws InvalidInput naming the offending key.
  void validate() const;
  bool operator==(const ExperimentConfig&) const = default;
};

const std::vector<std::string>& config_keys();
/// Sets one key from its text value (throws InvalidInput on unknown keys or
/// malformed values).
void set_config_value(ExperimentConfig& c, const std::string& key, const std::string& value);
ExperimentConfig parse_config(std::istream& is, ExperimentConfig base = {});
ExperimentConfig load_config(const std::string& path, ExperimentConfig base = {});
void write_config(std::ostream& os, const ExperimentConfig& c);
std::string serialize_config(const ExperimentConfig& c);

/// Named presets: exp1-exact, exp1-noisy, exp2-exact, lattice-recovery.
ExperimentConfig preset(const std::string& name);
const std::vector<std::string>& preset_names();

/// mt19937_64 draws mapped to [-1, 1): xi = 2 u - 1 with u = (x >> 11) 2^-53.
class NoiseSource {
 public:
  explicit NoiseSource(std::uint64_t seed) : rng_(seed) {}
  double next() { return 2.0 * static_cast<double>(rng_() >> 11) * 0x1.0p-53 - 1.0; }
  std::uint64_t raw() { return rng_(); }

 private:
  std::mt19937_64 rng_;
};

/// Adds level * ||y||_inf * xi to every entry; returns the sup bound used.
double add_noise(std::vector<double>& y, double level, NoiseSource& rng);

struct Dataset {
  ScalarField truth;
  BoundarySpec spec;
  /// Level set: the single pair driven by U = 1 on the source contact.
  InverseDatum datum;
  /// Landweber-Kaczmarz: one trace per box source.
  DtNDataset traces;
  /// Lattice.
  Lattice lattice;
  LatticeLayout layout;
  SweepData sweep;
};

/// Builds the phantom, runs the forward solves and adds seeded noise. The
/// noise bound delta is level * ||Y||_inf * sqrt(|measurement contact|) (the
/// trace L2 norm of the worst admissible perturbation).
Dataset synthesize(const ExperimentConfig& c);

struct Metrics {
  double misclassified = 0.0;
  double l2_relative = 0.0;
  double jaccard = 0.0;
};

/// Misclassified area fraction, relative L2 error of gamma, and the Jaccard
/// distance of the P regions (gamma < 1.5).
Metrics metrics(const ScalarField& reconstruction, const ScalarField& truth);

struct Report {
  Method method = Method::LevelSet;
  ScalarField initial;
  ScalarField final_gamma;
  ScalarField truth;
  std::string history_csv;
  std::string stop_reason;
  int iterations = 0;
  SolveCounter solves;
  Metrics final_metrics;
  double wall_seconds = 0.0;
  // Lattice runs.
  Recovery recovery;
  double recovery_max_error = 0.0;
};

/// Dispatches on c.method; writes outputs when c.output is non-empty.
Report run_experiment(const ExperimentConfig& c);

/// Writes config.txt, history.csv, fields, PGM images and summary.json.
void write_report(const std::string& dir, const ExperimentConfig& c, const Report& r);
std::string summary_json(const Report& r);

/// Plain PGM (P2): value v maps to round(255 (v - lo) / (hi - lo)) clamped to
/// [0, 255]; first image row is the top row of the grid (y = 1).
void write_pgm(std::ostream& os, const ScalarField& f, double lo = 1.0, double hi = 2.0);
void write_levelset_history(std::ostream& os, const std::vector<LevelSetRecord>& h);
void write_lk_history(std::ostream& os, const std::vector<LkCycleRecord>& h);
void write_traces_csv(std::ostream& os, const std::vector<std::vector<double>>& traces);
std::vector<std::vector<double>> read_traces_csv(std::istream& is);

}  // namespace pnrecon
