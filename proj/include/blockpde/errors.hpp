#pragma once

#include <stdexcept>
#include <string>

namespace blockpde {

// Numerical failure carrying a location (sample index, rollout step, ...).
class NumericError : public std::runtime_error {
public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

class TrainingError : public std::runtime_error {
public:
  TrainingError(const std::string& what, int epoch)
      : std::runtime_error(what + " (epoch " + std::to_string(epoch) + ")"),
        epoch_(epoch) {}
  int epoch() const { return epoch_; }

private:
  int epoch_;
};

class IncompatibleBaseplate : public std::runtime_error {
public:
  explicit IncompatibleBaseplate(const std::string& what)
      : std::runtime_error(what) {}
};

class ParseError : public std::runtime_error {
public:
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

}  // namespace blockpde
