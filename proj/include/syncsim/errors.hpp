#pragma once

#include <stdexcept>
#include <string>

namespace syncsim {

// Invalid configuration values or an unparseable config document.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Network generation could not produce a connected topology.
class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A synchronization action that does not select exactly SB peers.
class BudgetError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NodeNotFoundError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Non-finite gradients; the training run that raised it should be aborted.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InsufficientSamplesError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MissingPolicyError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Calling step() on an environment that was never reset or whose episode
// already reached its horizon.
class EpisodeStateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace syncsim
