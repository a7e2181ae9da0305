#pragma once

#include <cstdint>
#include <random>

namespace tailflow {

/// Seeded random source with library-defined transforms so that draws are
/// reproducible across standard library implementations (the std::
/// distributions are implementation defined). Not thread safe; use one per
/// thread.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on the open interval (0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  /// Standard normal via the Box-Muller transform; the second variate of each
  /// pair is cached.
  double normal();
  /// Gamma(shape, 1) via Marsaglia-Tsang, with the shape < 1 boost
  /// Gamma(a) = Gamma(a + 1) * U^(1/a).
  double gamma(double shape);

  /// Independent child stream; used to give sub-tasks their own sequence.
  Rng split();

 private:
  std::mt19937_64 engine_;
  double cached_normal_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace tailflow
