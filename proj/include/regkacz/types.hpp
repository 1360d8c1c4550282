#pragma once

#include <Eigen/Core>

#include <stdexcept>
#include <string>

namespace regkacz {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Evaluation point left the admissible box of the operator family.
class DomainViolation : public std::runtime_error {
public:
  DomainViolation(Index coordinate, double value, double lower, double upper)
      : std::runtime_error("domain violation at coordinate " + std::to_string(coordinate) +
                           ": value " + std::to_string(value) + " outside [" +
                           std::to_string(lower) + ", " + std::to_string(upper) + "]"),
        coordinate_(coordinate),
        value_(value),
        lower_(lower),
        upper_(upper) {}

  Index coordinate() const noexcept { return coordinate_; }
  double value() const noexcept { return value_; }
  double lower() const noexcept { return lower_; }
  double upper() const noexcept { return upper_; }

private:
  Index coordinate_;
  double value_;
  double lower_;
  double upper_;
};

/// Solver parameters violate a feasibility constraint; the message names
/// the constraint that failed.
class InfeasibleParameters : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace regkacz
