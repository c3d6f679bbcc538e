#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string_view>

namespace reid {

uint64_t fnv1a64(std::string_view bytes) noexcept;

uint64_t splitmix64(uint64_t x) noexcept;

// Seed for one (query, gallery) pair, independent of evaluation order.
uint64_t pair_seed(uint64_t root_seed, std::string_view image_a,
                   std::string_view image_b) noexcept;

// Seed for the i-th item of a stream rooted at base_seed.
uint64_t derive_seed(uint64_t base_seed, uint64_t index) noexcept;

// Portable draws from mt19937_64; std distributions differ across
// standard libraries and would break cross-platform reproducibility.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next() { return engine_(); }
  // Uniform integer in [0, bound), bound >= 1.
  uint64_t below(uint64_t bound);
  // Uniform real in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0;
};

// Number of worker threads used by parallel_for; 0 selects hardware
// concurrency.
void set_thread_count(unsigned threads);
unsigned thread_count();

// Runs body(i) for i in [0, n). Output placement by index keeps results
// independent of scheduling.
void parallel_for(size_t n, const std::function<void(size_t)>& body);

}  // namespace reid
