#pragma once

#include <stdexcept>
#include <string>

namespace milodo {

// Bad user-supplied parameter (shape mismatch, invalid config value, ...).
class ParameterError : public std::invalid_argument {
 public:
  explicit ParameterError(const std::string& what) : std::invalid_argument(what) {}
};

// Dimension / structure mismatch between objects that are otherwise valid.
class ShapeError : public std::invalid_argument {
 public:
  explicit ShapeError(const std::string& what) : std::invalid_argument(what) {}
};

// A rollout produced a non-finite value.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(int iteration, int node, const std::string& what)
      : std::runtime_error(what), iteration(iteration), node(node) {}
  int iteration;
  int node;
};

// An iterative solver ran out of iterations before reaching its tolerance.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(double residual, const std::string& what)
      : std::runtime_error(what), last_residual(residual) {}
  double last_residual;
};

}  // namespace milodo
