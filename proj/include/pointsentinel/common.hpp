#ifndef POINTSENTINEL_COMMON_HPP
#define POINTSENTINEL_COMMON_HPP

#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace ps {

// Error taxonomy. The CLI maps these onto exit codes (validation 1, io 2,
// divergence 3), so library code should pick the matching type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& msg, int epoch) : Error(msg), epoch_(epoch) {}
  int epoch() const { return epoch_; }

 private:
  int epoch_;
};

namespace detail {
inline void format_parts(std::ostringstream&) {}
template <typename T, typename... Rest>
void format_parts(std::ostringstream& os, const T& v, const Rest&... rest) {
  os << v;
  format_parts(os, rest...);
}
}  // namespace detail

template <typename... Parts>
std::string format_msg(const Parts&... parts) {
  std::ostringstream os;
  detail::format_parts(os, parts...);
  return os.str();
}

#define PS_CHECK(cond, ...)                                       \
  do {                                                            \
    if (!(cond)) throw ::ps::ValidationError(::ps::format_msg(__VA_ARGS__)); \
  } while (0)

#define PS_IO_CHECK(cond, ...)                                    \
  do {                                                            \
    if (!(cond)) throw ::ps::IoError(::ps::format_msg(__VA_ARGS__)); \
  } while (0)

// --- deterministic RNG -----------------------------------------------------
//
// Self-contained splitmix64 generator. Every random draw in the project goes
// through this class so results do not depend on the standard library's
// distribution implementations.

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Derives an independent stream seed from (seed, stream). Used for per-scene,
// per-epoch and per-resample generators so that work units can be computed in
// any order (or in parallel) with identical results.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t s = seed ^ 0xA24BAED4963EE407ULL;
  std::uint64_t a = splitmix64(s);
  s ^= stream + 0x9E6C63D0876A9F4BULL;
  std::uint64_t b = splitmix64(s);
  return a ^ (b + 0x165667B19E3779F9ULL + (a << 6) + (a >> 2));
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {
    // Warm up so that small seeds do not produce correlated first draws.
    splitmix64(state_);
    splitmix64(state_);
  }

  std::uint64_t next_u64() { return splitmix64(state_); }

  // Uniform double in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller (no cached spare; one value per call).
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    // Guard against log(0).
    u1 = u1 <= 0.0 ? 0x1.0p-53 : u1;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Uniform index in [0, n).
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(next_u64() % n); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    // Fisher-Yates, hand-rolled for cross-implementation determinism.
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t state_;
};

}  // namespace ps

#endif  // POINTSENTINEL_COMMON_HPP
