#pragma once

#include <atomic>
#include <cstddef>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace ringformer {

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Operand shapes or ranks disagree.
class DimensionError : public Error {
public:
  using Error::Error;
};

// A configuration value violates its constraints.
class ConfigError : public Error {
public:
  using Error::Error;
};

// A non-finite value (NaN/Inf) was produced or detected.
class NumericError : public Error {
public:
  using Error::Error;
};

// An operation was invoked out of protocol order.
class ProtocolError : public Error {
public:
  using Error::Error;
};

// A worker failed while executing a parallel operation.
class ExecutionError : public Error {
public:
  using Error::Error;
};

// A runtime argument (not a config field) is unusable.
class ArgumentError : public Error {
public:
  using Error::Error;
};

class IoError : public Error {
public:
  using Error::Error;
};

inline std::string shape_str(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

// Hooks used by the self-test harness to inject faults on purpose.
namespace testhook {
inline std::atomic<bool> corrupt_matmul{false};
inline std::atomic<int> fail_ring_device{-1};
}  // namespace testhook

}  // namespace ringformer
