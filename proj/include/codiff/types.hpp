#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace codiff {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Raised when arguments break a documented precondition (dimensions, sizes, ranges).
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when the reparameterization map cannot be inverted at the given outcome.
class SingularMapError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Raised when a row of importance weights carries no finite mass.
class DegenerateWeightsError : public std::runtime_error {
 public:
  DegenerateWeightsError(std::size_t row, const std::string& what)
      : std::runtime_error(what), row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

/// Raised when an optimisation or sampling run produces values it cannot recover from.
class NumericFailure : public std::runtime_error {
 public:
  NumericFailure(std::size_t iteration, const std::string& what)
      : std::runtime_error(what), iteration_(iteration) {}
  std::size_t iteration() const noexcept { return iteration_; }

 private:
  std::size_t iteration_;
};

void require(bool condition, const std::string& message);
inline void require(bool condition, const char* message) {
  if (!condition) throw ContractViolation(message);
}
bool all_finite(const Vec& v);

/// Axis-aligned box used to constrain designs.
struct Box {
  Vec lo;
  Vec hi;

  Box() = default;
  Box(Vec lower, Vec upper);

  Eigen::Index dim() const { return lo.size(); }
  bool contains(const Vec& x) const;
  Vec project(const Vec& x) const;
};

struct Design {
  Vec xi;
  std::optional<Box> bounds;

  Design() = default;
  explicit Design(Vec value, std::optional<Box> box = std::nullopt);
  Eigen::Index dim() const { return xi.size(); }
};

struct Experiment {
  Vec xi;
  Vec y;
};

/// Completed experiments in the order they were run. Entries are append-only.
class History {
 public:
  History() = default;
  explicit History(std::vector<Experiment> entries);

  void append(Vec xi, Vec y);
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::vector<Experiment>& entries() const { return entries_; }
  const Experiment& operator[](std::size_t k) const { return entries_[k]; }
  History prefix(std::size_t k) const;

 private:
  std::vector<Experiment> entries_;
};

}  // namespace codiff
