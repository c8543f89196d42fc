#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "pnrecon/errors.hpp"
#include "pnrecon/harness.hpp"

using namespace pnrecon;

namespace {

enum Exit { Ok = 0, BadConfig = 2, SolverFailure = 3, Genericity = 4 };

// Every config key doubles as a --flag; flags override the config file.
struct ConfigFlags {
  std::string file;
  std::map<std::string, std::string> values;

  void attach(CLI::App* app) {
    app->add_option("--config", file, "key = value config file");
    for (const auto& key : config_keys())
      app->add_option("--" + key, values[key], "config key " + key);
  }

  ExperimentConfig resolve(ExperimentConfig base = {}) const {
    ExperimentConfig c = file.empty() ? base : load_config(file, base);
    for (const auto& [k, v] : values)
      if (!v.empty()) set_config_value(c, k, v);
    c.validate();
    return c;
  }
};

void write_file(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot write '" + path + "'");
  out << text;
}

void print_summary(const Report& r) { std::cout << summary_json(r); }

int run(int argc, char** argv) {
  CLI::App app{"Doping-profile reconstruction toolkit"};
  app.require_subcommand(1);

  // forward
  auto* forward = app.add_subcommand("forward", "phantom -> exact DtN traces (CSV)");
  ConfigFlags forward_flags;
  forward_flags.attach(forward);
  std::string forward_out;
  forward->add_option("--out", forward_out, "output CSV (default stdout)");

  // synthesize
  auto* synth = app.add_subcommand("synthesize", "write a (noisy) dataset to a directory");
  ConfigFlags synth_flags;
  synth_flags.attach(synth);
  std::string synth_dir;
  synth->add_option("--dir", synth_dir, "output directory")->required();

  // reconstruct
  auto* recon = app.add_subcommand("reconstruct", "synthesize data and run a reconstruction");
  ConfigFlags recon_flags;
  recon_flags.attach(recon);

  // lattice
  auto* lattice = app.add_subcommand("lattice", "discrete lattice model");
  lattice->require_subcommand(1);
  auto* lsolve = lattice->add_subcommand("solve", "solve for every detector, dump measurements");
  ConfigFlags lsolve_flags;
  lsolve_flags.attach(lsolve);
  std::string lsolve_out, lsolve_write;
  lsolve->add_option("--out", lsolve_out, "measurement CSV (default stdout)");
  lsolve->add_option("--write-lattice", lsolve_write, "also write the lattice file");
  auto* lrecover = lattice->add_subcommand("recover", "diagonal sweep recovery report");
  ConfigFlags lrecover_flags;
  lrecover_flags.attach(lrecover);
  std::string lrecover_out;
  lrecover->add_option("--out", lrecover_out, "recovery CSV (default stdout)");

  // metrics
  auto* met = app.add_subcommand("metrics", "compare a reconstruction with the truth");
  std::string rec_path, truth_path;
  met->add_option("reconstruction", rec_path, "field file")->required();
  met->add_option("truth", truth_path, "field file")->required();

  // preset
  auto* pre = app.add_subcommand("preset", "run a named experiment preset");
  std::string preset_name;
  pre->add_option("name", preset_name, "exp1-exact | exp1-noisy | exp2-exact | lattice-recovery")
      ->required();
  ConfigFlags pre_flags;
  pre_flags.attach(pre);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? Ok : BadConfig;
  }

  if (*forward) {
    ExperimentConfig c = forward_flags.resolve();
    c.noise = 0.0;
    const Dataset d = synthesize(c);
    std::ostringstream os;
    if (c.method == Method::Kaczmarz)
      write_traces_csv(os, d.traces.traces);
    else if (c.method == Method::LevelSet)
      write_traces_csv(os, {d.datum.Y});
    else
      throw InvalidInput("forward: use 'lattice solve' for the lattice model");
    write_file(forward_out, os.str());
  } else if (*synth) {
    const ExperimentConfig c = synth_flags.resolve();
    const Dataset d = synthesize(c);
    namespace fs = std::filesystem;
    fs::create_directories(synth_dir);
    const fs::path root(synth_dir);
    write_file((root / "config.txt").string(), serialize_config(c));
    if (c.method == Method::Lattice) {
      std::ostringstream lat, meas;
      write_lattice(lat, d.lattice);
      write_file((root / "lattice.txt").string(), lat.str());
      write_measurements_csv(meas, d.sweep.values, d.layout);
      write_file((root / "measurements.csv").string(), meas.str());
    } else {
      std::ostringstream field, pgm, traces;
      write_field(field, d.truth);
      write_pgm(pgm, d.truth);
      write_file((root / "truth.field").string(), field.str());
      write_file((root / "truth.pgm").string(), pgm.str());
      if (c.method == Method::Kaczmarz)
        write_traces_csv(traces, d.traces.traces);
      else
        write_traces_csv(traces, {d.datum.Y});
      write_file((root / "traces.csv").string(), traces.str());
      std::ostringstream delta;
      delta.precision(17);
      delta << (c.method == Method::Kaczmarz ? d.traces.delta : d.datum.delta) << '\n';
      write_file((root / "delta.txt").string(), delta.str());
    }
  } else if (*recon) {
    const ExperimentConfig c = recon_flags.resolve();
    if (c.method == Method::Lattice) throw InvalidInput("reconstruct: use 'lattice recover'");
    print_summary(run_experiment(c));
  } else if (*lsolve) {
    ExperimentConfig base;
    base.method = Method::Lattice;
    const ExperimentConfig c = lsolve_flags.resolve(base);
    const Dataset d = synthesize(c);
    std::vector<LatticeSolution> sols;
    for (Site s : d.layout.detectors) sols.push_back(lattice_solve(d.lattice, d.layout, s));
    std::ostringstream os;
    write_measurements_csv(os, sols, d.layout);
    write_file(lsolve_out, os.str());
    if (!lsolve_write.empty()) {
      std::ostringstream lat;
      write_lattice(lat, d.lattice);
      write_file(lsolve_write, lat.str());
    }
  } else if (*lrecover) {
    ExperimentConfig base;
    base.method = Method::Lattice;
    const ExperimentConfig c = lrecover_flags.resolve(base);
    const Dataset d = synthesize(c);
    const Recovery r = recover_diagonals(d.sweep, c.p_prime);
    std::ostringstream os;
    write_recovery_csv(os, r, &d.lattice);
    write_file(lrecover_out, os.str());
  } else if (*met) {
    const Metrics m = metrics(load_field(rec_path), load_field(truth_path));
    std::cout.precision(17);
    std::cout << "misclassified," << m.misclassified << "\nl2_relative," << m.l2_relative
              << "\njaccard," << m.jaccard << '\n';
  } else if (*pre) {
    const ExperimentConfig c = pre_flags.resolve(preset(preset_name));
    print_summary(run_experiment(c));
  }
  return Ok;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const GenericityError& e) {
    std::cerr << "genericity failure at diagonal " << e.diagonal() << " (D_p = " << e.determinant()
              << "): " << e.what() << '\n';
    return Genericity;
  } catch (const StagnationError& e) {
    std::cerr << "solver failure at iteration " << e.iteration() << ": " << e.what() << '\n';
    return SolverFailure;
  } catch (const SolverError& e) {
    std::cerr << "solver failure (residual " << e.residual() << "): " << e.what() << '\n';
    return SolverFailure;
  } catch (const InvalidInput& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return BadConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return SolverFailure;
  }
}
