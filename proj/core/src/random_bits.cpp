#include "kserver/random_bits.hpp"

#include "kserver/error.hpp"

namespace kserver {

int bit_width_for(std::uint64_t n) {
  int w = 0;
  while (n > (std::uint64_t{1} << w)) ++w;
  return w;
}

std::uint64_t BitStream::bits(int count) {
  if (count < 1 || count > 64) throw Error("BadBitCount", std::to_string(count));
  std::uint64_t out = 0;
  for (int i = 0; i < count; ++i) {
    if (buffered_ == 0) {
      buffer_ = gen_();
      buffered_ = 64;
    }
    out |= (buffer_ & 1u) << i;
    buffer_ >>= 1;
    --buffered_;
  }
  consumed_ += static_cast<std::uint64_t>(count);
  return out;
}

std::uint64_t BitStream::uniform(std::uint64_t n, int max_rejections) {
  if (n == 0) throw Error("BadRange", "uniform over empty range");
  if (n == 1) return 0;
  const int w = bit_width_for(n);
  std::uint64_t draw = bits(w);
  for (int r = 0; r < max_rejections && draw >= n; ++r) draw = bits(w);
  return draw % n;
}

double BitStream::unit_double(int precision_bits) {
  if (precision_bits < 1 || precision_bits > 53)
    throw Error("BadBitCount", std::to_string(precision_bits));
  const std::uint64_t raw = bits(precision_bits);
  return static_cast<double>(raw) /
         static_cast<double>(std::uint64_t{1} << precision_bits);
}

}  // namespace kserver
