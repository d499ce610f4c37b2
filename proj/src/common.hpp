#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>

namespace gusl {

// Error categories surfaced through the C API as stable codes.
enum class ErrorKind {
  InvalidDimension = 1,
  InvalidConfig,
  Shape,
  IdenticalImages,
  InsufficientData,
  NumericalFailure,
  InvalidInput,
  InvalidModel,
  IncompatibleModel,
  Corruption,
  Format,
  Io,
};

const char* error_kind_name(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

// splitmix64-seeded xoshiro256**. Used instead of <random> distributions so
// streams are identical across standard library implementations.
// Standard engine with our own mappings to doubles and ranges: the std
// distributions are implementation-defined, which would break bit-identical
// models across standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed);

  uint64_t next();
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  // Uniform integer in [0, n). n must be > 0.
  uint64_t below(uint64_t n);
  // Standard normal via Box-Muller; caches the second draw.
  double normal();

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Worker count from GUSL_THREADS (0 or unset = hardware concurrency).
unsigned worker_count();

// Runs body(begin, end) over contiguous chunks of [0, n). Chunk boundaries
// depend only on n and the worker count, so per-chunk results merged in
// chunk order are deterministic.
void parallel_for(size_t n, const std::function<void(size_t, size_t)>& body);

}  // namespace gusl
