#include "common.hpp"

#include <cmath>
#include <cstdlib>
#include <exception>
#include <thread>
#include <vector>

namespace gusl {

const char* error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidDimension: return "invalid-dimension";
    case ErrorKind::InvalidConfig: return "invalid-config";
    case ErrorKind::Shape: return "shape";
    case ErrorKind::IdenticalImages: return "identical-images";
    case ErrorKind::InsufficientData: return "insufficient-data";
    case ErrorKind::NumericalFailure: return "numerical-failure";
    case ErrorKind::InvalidInput: return "invalid-input";
    case ErrorKind::InvalidModel: return "invalid-model";
    case ErrorKind::IncompatibleModel: return "incompatible-model";
    case ErrorKind::Corruption: return "corruption";
    case ErrorKind::Format: return "format";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

Rng::Rng(uint64_t seed) : engine_(seed) {}

uint64_t Rng::next() { return engine_(); }

double Rng::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

uint64_t Rng::below(uint64_t n) {
  // Lemire's multiply-shift with rejection.
  uint64_t x = next();
  __uint128_t m = static_cast<__uint128_t>(x) * n;
  auto low = static_cast<uint64_t>(m);
  if (low < n) {
    const uint64_t threshold = (0 - n) % n;
    while (low < threshold) {
      x = next();
      m = static_cast<__uint128_t>(x) * n;
      low = static_cast<uint64_t>(m);
    }
  }
  return static_cast<uint64_t>(m >> 64);
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * M_PI * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

unsigned worker_count() {
  if (const char* env = std::getenv("GUSL_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<unsigned>(v);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

void parallel_for(size_t n, const std::function<void(size_t, size_t)>& body) {
  if (n == 0) return;
  const size_t workers = std::min<size_t>(worker_count(), n);
  if (workers <= 1) {
    body(0, n);
    return;
  }
  const size_t chunk = (n + workers - 1) / workers;
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> failures((n + chunk - 1) / chunk);
  pool.reserve(workers);
  for (size_t begin = 0, slot = 0; begin < n; begin += chunk, ++slot) {
    const size_t end = std::min(n, begin + chunk);
    pool.emplace_back([&body, &failures, begin, end, slot] {
      try {
        body(begin, end);
      } catch (...) {
        failures[slot] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& f : failures)
    if (f) std::rethrow_exception(f);
}

}  // namespace gusl
