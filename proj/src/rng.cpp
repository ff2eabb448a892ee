#include "fedminimax/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace fedminimax {

namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi,
                    std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

// 53 random bits -> (0, 1]
inline double to_unit(std::uint32_t hi, std::uint32_t lo) {
  const std::uint64_t bits =
      ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 11;
  return (static_cast<double>(bits) + 1.0) * 0x1.0p-53;
}

}  // namespace

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                        std::array<std::uint32_t, 2> key) {
  for (int round = 0; round < 10; ++round) {
    if (round > 0) {
      key[0] += kPhiloxW0;
      key[1] += kPhiloxW1;
    }
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kPhiloxM0, ctr[0], hi0, lo0);
    mulhilo(kPhiloxM1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
  }
  return ctr;
}

std::array<std::uint32_t, 4> RngStream::block() const {
  return philox4x32(
      {static_cast<std::uint32_t>(counter_),
       static_cast<std::uint32_t>(counter_ >> 32), id_.client,
       static_cast<std::uint32_t>(id_.purpose)},
      {static_cast<std::uint32_t>(seed_),
       static_cast<std::uint32_t>(seed_ >> 32)});
}

double RngStream::next_gaussian() {
  const auto w = block();
  ++counter_;
  const double u1 = to_unit(w[0], w[1]);
  const double u2 = to_unit(w[2], w[3]);
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

double RngStream::next_uniform() {
  const auto w = block();
  ++counter_;
  return to_unit(w[0], w[1]);
}

std::uint64_t RngStream::next_below(std::uint64_t bound) {
  if (bound == 0) throw std::invalid_argument("next_below: bound must be > 0");
  const auto w = block();
  ++counter_;
  const std::uint64_t bits = (static_cast<std::uint64_t>(w[0]) << 32) | w[1];
  // Lemire multiply-shift; bias is < bound / 2^64, irrelevant at our sizes.
  return static_cast<std::uint64_t>(
      (static_cast<unsigned __int128>(bits) * bound) >> 64);
}

Vec draw_gaussian(RngStream& stream, int dim, double sigma) {
  if (dim < 1) throw std::invalid_argument("draw_gaussian: dim must be >= 1");
  if (!(sigma >= 0.0)) throw std::invalid_argument("draw_gaussian: sigma < 0");
  Vec out(dim);
  if (sigma == 0.0) {
    stream.advance(static_cast<std::uint64_t>(dim));
    out.setZero();
    return out;
  }
  const double scale = sigma / std::sqrt(static_cast<double>(dim));
  for (int k = 0; k < dim; ++k) out[k] = scale * stream.next_gaussian();
  return out;
}

}  // namespace fedminimax
