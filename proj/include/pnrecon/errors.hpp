#pragma once

#include <stdexcept>
#include <string>

namespace pnrecon {

/// Input that violates a documented precondition or invariant.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Linear or nonlinear solver did not reach its tolerance.
class SolverError : public std::runtime_error {
 public:
  SolverError(const std::string& what, double residual)
      : std::runtime_error(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

/// Descent iteration could not decrease its objective through the full
/// backtracking schedule.
class StagnationError : public std::runtime_error {
 public:
  StagnationError(const std::string& what, int iteration, double objective)
      : std::runtime_error(what), iteration_(iteration), objective_(objective) {}
  int iteration() const { return iteration_; }
  double objective() const { return objective_; }

 private:
  int iteration_;
  double objective_;
};

/// The diagonal sweep hit a (numerically) vanishing determinant.
class GenericityError : public std::runtime_error {
 public:
  GenericityError(const std::string& what, int diagonal, double determinant)
      : std::runtime_error(what), diagonal_(diagonal), determinant_(determinant) {}
  int diagonal() const { return diagonal_; }
  double determinant() const { return determinant_; }

 private:
  int diagonal_;
  double determinant_;
};

}  // namespace pnrecon
