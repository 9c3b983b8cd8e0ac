#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <random>

namespace bpre {

// Philox4x32-10 counter-based generator (Salmon et al. 2011).
//
// Stream layout: the 64-bit key is the user seed; counter words 2..3 hold the
// 64-bit stream id and words 0..1 the within-stream block index. Distinct
// (seed, stream) pairs therefore yield statistically independent sequences by
// construction, and a stream's output depends only on (seed, stream) -- never
// on which thread consumed it.
class Philox {
 public:
  using result_type = std::uint64_t;

  Philox(std::uint64_t seed, std::uint64_t stream) {
    key_[0] = static_cast<std::uint32_t>(seed);
    key_[1] = static_cast<std::uint32_t>(seed >> 32);
    ctr_[0] = 0;
    ctr_[1] = 0;
    ctr_[2] = static_cast<std::uint32_t>(stream);
    ctr_[3] = static_cast<std::uint32_t>(stream >> 32);
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<std::uint64_t>::max(); }

  result_type operator()() {
    if (pos_ == 0) refill();
    const std::uint64_t lo = buf_[pos_ - 2];
    const std::uint64_t hi = buf_[pos_ - 1];
    pos_ -= 2;
    return lo | (hi << 32);
  }

  // Uniform on [0,1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  // One full 4x32 block for a given counter/key; exposed for the known-answer test.
  static std::array<std::uint32_t, 4> block(std::array<std::uint32_t, 4> ctr,
                                            std::array<std::uint32_t, 2> key);

 private:
  void refill() {
    const auto out = block(ctr_, key_);
    for (int i = 0; i < 4; ++i) buf_[i] = out[i];
    pos_ = 4;
    if (++ctr_[0] == 0) ++ctr_[1];  // 2^64 blocks per stream
  }

  std::array<std::uint32_t, 2> key_{};
  std::array<std::uint32_t, 4> ctr_{};
  std::array<std::uint32_t, 4> buf_{};
  int pos_ = 0;
};

// Exact binomial draw. Delegates to the standard library's rejection/inversion
// sampler, which draws from the exact distribution for all (n, p).
inline long long binomial_draw(long long n, double p, Philox& rng) {
  if (n <= 0) return 0;
  if (p <= 0.0) return 0;
  if (p >= 1.0) return n;
  std::binomial_distribution<long long> dist(n, p);
  return dist(rng);
}

}  // namespace bpre
