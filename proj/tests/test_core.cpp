#include <doctest.h>

#include <cmath>
#include <set>

#include "fedminimax/rng.hpp"
#include "fedminimax/schedule.hpp"

using namespace fedminimax;

TEST_CASE("philox4x32-10 known answers") {
  using W = std::array<std::uint32_t, 4>;
  CHECK(philox4x32({0, 0, 0, 0}, {0, 0}) == W{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
  CHECK(philox4x32({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff},
                   {0xffffffff, 0xffffffff}) ==
        W{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
  CHECK(philox4x32({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344},
                   {0xa4093822, 0x299f31d0}) ==
        W{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("draw_gaussian with zero sigma is zero") {
  RngStream s(123, {2, StreamPurpose::kGradY}, 17);
  const Vec v = draw_gaussian(s, 3, 0.0);
  CHECK(v.size() == 3);
  CHECK(v.isZero(0.0));
}

TEST_CASE("fresh copies of a stream draw identical vectors") {
  RngStream a(7, {0, StreamPurpose::kGradX}, 0);
  RngStream b(7, {0, StreamPurpose::kGradX}, 0);
  const Vec va = draw_gaussian(a, 2, 1.0);
  const Vec vb = draw_gaussian(b, 2, 1.0);
  CHECK(va == vb);
  CHECK(a.counter() == 2);
}

TEST_CASE("draw_gaussian second moment matches sigma^2") {
  RngStream s(2024, {0, StreamPurpose::kSampling});
  const int draws = 100000;
  double acc = 0.0;
  for (int k = 0; k < draws; ++k) acc += draw_gaussian(s, 10, 0.5).squaredNorm();
  CHECK(acc / draws == doctest::Approx(0.25).epsilon(0.04));
  CHECK(std::abs(acc / draws - 0.25) <= 0.01);
}

TEST_CASE("advance skips exactly k draws") {
  RngStream a(5, {1, StreamPurpose::kGradX});
  RngStream b(5, {1, StreamPurpose::kGradX});
  for (int k = 0; k < 4; ++k) a.next_gaussian();
  b.advance(4);
  CHECK(a.counter() == b.counter());
  CHECK(a.next_gaussian() == b.next_gaussian());
}

TEST_CASE("streams differing in seed, client or purpose are distinct") {
  std::set<double> firsts;
  for (std::uint64_t seed : {0ull, 1ull, 1ull << 40}) {
    for (std::uint32_t client : {0u, 1u, 7u}) {
      for (auto purpose : {StreamPurpose::kGradX, StreamPurpose::kGradY,
                           StreamPurpose::kOutputIndex}) {
        RngStream s(seed, {client, purpose});
        firsts.insert(s.next_gaussian());
      }
    }
  }
  CHECK(firsts.size() == 27);
}

TEST_CASE("uniform helpers stay in range") {
  RngStream s(9, {0, StreamPurpose::kSampling});
  for (int k = 0; k < 10000; ++k) {
    const double u = s.next_uniform();
    CHECK((u > 0.0 && u <= 1.0));
    CHECK(s.next_below(5) < 5u);
  }
  CHECK_THROWS_AS(s.next_below(0), std::invalid_argument);
}

TEST_CASE("T1 schedule") {
  const auto s = schedule_from_theorem(TheoremId::kT1, 4, 10000, 1.0, 2.0);
  CHECK(s.step.eta_y == doctest::Approx(0.02).epsilon(1e-14));
  CHECK(s.step.eta_x == doctest::Approx(0.000625).epsilon(1e-14));
  // floor(10 / 4^0.75) = 3, lowered to the divisor 2 of 10000.
  CHECK(s.sync.tau == 2);
  CHECK(s.sync.horizon_T % s.sync.tau == 0);
  CHECK_FALSE(s.warnings.empty());
}

TEST_CASE("T2 schedule at unit arguments") {
  const auto s = schedule_from_theorem(TheoremId::kT2, 1, 1, 1.0, 1.0);
  CHECK(s.step.alpha == 1.0);
  CHECK(s.step.beta_x == 3.0);
  CHECK(s.step.beta_y == 3.0);
  CHECK(s.sync.tau == 1);
}

TEST_CASE("T2 effective step matches T1") {
  const auto t1 = schedule_from_theorem(TheoremId::kT1, 8, 64000, 2.0, 3.0);
  const auto t2 = schedule_from_theorem(TheoremId::kT2, 8, 64000, 2.0, 3.0);
  CHECK(t2.step.alpha * t2.step.eta_y == doctest::Approx(t1.step.eta_y));
  CHECK(t2.step.alpha * t2.step.eta_x == doctest::Approx(t1.step.eta_x));
  CHECK(t1.sync.tau == t2.sync.tau);
}

TEST_CASE("T3 snapshot interval") {
  const auto s = schedule_from_theorem(TheoremId::kT3, 4, 4096, 1.0, 1.0);
  REQUIRE(s.sync.s_interval.has_value());
  CHECK(*s.sync.s_interval == 32);
  CHECK(*s.sync.s_interval % s.sync.tau == 0);
  CHECK(s.step.eta_y <= 1.0 / (8.0 * s.sync.tau) + 1e-15);
  CHECK(s.step.eta_x <= s.step.eta_y);
}

TEST_CASE("schedule validation") {
  StepSchedule st;
  st.eta_x = -1.0;
  CHECK_THROWS_AS(st.validate(false), std::invalid_argument);
  st.eta_x = 0.1;
  st.alpha = 0.5;
  st.beta_x = st.beta_y = 3.0;
  CHECK_THROWS_AS(st.validate(true), std::invalid_argument);
  st.beta_x = st.beta_y = 1.5;
  CHECK_NOTHROW(st.validate(true));

  SyncSchedule sy;
  sy.tau = 3;
  sy.horizon_T = 10;
  CHECK_THROWS_AS(sy.validate(), std::invalid_argument);
  sy.horizon_T = 12;
  sy.s_interval = 4;
  CHECK_THROWS_AS(sy.validate(), std::invalid_argument);
  sy.s_interval = 6;
  CHECK_NOTHROW(sy.validate());
  CHECK(sy.communication_rounds() == 4);

  CHECK_THROWS_AS(schedule_from_theorem(TheoremId::kT1, 0, 100, 1.0, 1.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(schedule_from_theorem(TheoremId::kT1, 4, 100, 1.0, 0.5),
                  std::invalid_argument);
  CHECK_THROWS_AS(theorem_from_string("T9"), std::invalid_argument);
  CHECK(theorem_from_string(to_string(TheoremId::kT3)) == TheoremId::kT3);
}
