#pragma once

#include <array>
#include <cstdint>

#include "fedminimax/types.hpp"

namespace fedminimax {

/// Philox4x32 with 10 rounds. Maps (counter, key) to four 32-bit words.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

enum class StreamPurpose : std::uint32_t {
  kGradX = 1,
  kGradY = 2,
  kSharedSample = 3,
  kOutputIndex = 4,
  kProblem = 5,
  kSampling = 6,
};

struct StreamId {
  std::uint32_t client = 0;
  StreamPurpose purpose = StreamPurpose::kGradX;

  friend bool operator==(const StreamId&, const StreamId&) = default;
};

// Counter-based stream: the k-th logical draw is a pure function of
// (seed, stream id, k), so streams never interact and can be consumed in
// any order or from any thread.
class RngStream {
 public:
  RngStream() = default;
  RngStream(std::uint64_t seed, StreamId id, std::uint64_t counter = 0)
      : seed_(seed), id_(id), counter_(counter) {}

  /// Standard normal variate (Box-Muller on one Philox block).
  double next_gaussian();
  /// Uniform variate in (0, 1].
  double next_uniform();
  /// Uniform integer in [0, bound).
  std::uint64_t next_below(std::uint64_t bound);

  void advance(std::uint64_t k) { counter_ += k; }

  std::uint64_t seed() const { return seed_; }
  StreamId id() const { return id_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::array<std::uint32_t, 4> block() const;

  std::uint64_t seed_ = 0;
  StreamId id_{};
  std::uint64_t counter_ = 0;
};

/// i.i.d. zero-mean Gaussian vector scaled so that E||v||^2 = sigma^2.
/// Consumes exactly `dim` draws from the stream.
Vec draw_gaussian(RngStream& stream, int dim, double sigma);

}  // namespace fedminimax
