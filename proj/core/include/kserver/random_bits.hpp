#pragma once

#include <cstdint>
#include <random>

namespace kserver {

// Deterministic source of random bits with an exact consumption counter.
// Every random decision in the system draws from one of these streams, so
// "how many bits did the algorithm use" is a measurable quantity.
class BitStream {
 public:
  explicit BitStream(std::uint64_t seed) : gen_(seed) {}

  // Next `count` bits (1..64) packed little-endian into the low bits.
  std::uint64_t bits(int count);

  // Uniform draw from [0, n) using ceil(log2 n) bits per attempt.  Rejection
  // sampling with a deterministic fallback: after `max_rejections` failed
  // attempts the final draw is reduced mod n.  Total consumption is bounded
  // by (max_rejections + 1) * ceil(log2 n) bits regardless of outcome.
  std::uint64_t uniform(std::uint64_t n, int max_rejections = 8);

  // Dyadic rational sample from [0, 1) with the given resolution.
  double unit_double(int precision_bits = 32);

  std::uint64_t bits_consumed() const { return consumed_; }

 private:
  std::mt19937_64 gen_;
  std::uint64_t consumed_ = 0;
  std::uint64_t buffer_ = 0;
  int buffered_ = 0;
};

// Number of bits needed to address n outcomes: ceil(log2 n), and 0 for n <= 1.
int bit_width_for(std::uint64_t n);

}  // namespace kserver
