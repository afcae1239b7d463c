#include <doctest.h>

#include <cmath>

#include "dualenkf/rng.hpp"

using namespace dualenkf;

TEST_CASE("Philox4x32-10 known-answer vectors") {
  using W = std::array<std::uint32_t, 4>;
  CHECK(philox4x32({0, 0, 0, 0}, {0, 0}) == W{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
  CHECK(philox4x32({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}) ==
        W{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
  CHECK(philox4x32({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
        W{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("streams are reproducible and keyed by every coordinate") {
  RandomStream a(42, Channel::Process, 3, 7), b(42, Channel::Process, 3, 7);
  for (int i = 0; i < 10; ++i) CHECK(a.next_u64() == b.next_u64());
  const auto first = [](RandomStream s) { return s.next_u64(); };
  const auto base = first(RandomStream(42, Channel::Process, 3, 7));
  CHECK(first(RandomStream(43, Channel::Process, 3, 7)) != base);
  CHECK(first(RandomStream(42, Channel::Exploration, 3, 7)) != base);
  CHECK(first(RandomStream(42, Channel::Process, 4, 7)) != base);
  CHECK(first(RandomStream(42, Channel::Process, 3, 8)) != base);
  CHECK(derive_seed(1, 2, 3) == derive_seed(1, 2, 3));
  CHECK(derive_seed(1, 2, 3) != derive_seed(1, 3, 2));
}

TEST_CASE("uniform and normal moments") {
  RandomStream s(7, Channel::Generator, 0, 0);
  const int n = 200000;
  double su = 0, sn = 0, sn2 = 0, sn4 = 0;
  double umin = 1, umax = 0;
  for (int i = 0; i < n; ++i) {
    const double u = s.uniform();
    umin = std::min(umin, u);
    umax = std::max(umax, u);
    su += u;
  }
  CHECK(umin > 0.0);
  CHECK(umax < 1.0);
  CHECK(std::abs(su / n - 0.5) < 4 * std::sqrt(1.0 / 12 / n));
  for (int i = 0; i < n; ++i) {
    const double z = s.normal();
    sn += z;
    sn2 += z * z;
    sn4 += z * z * z * z;
  }
  CHECK(std::abs(sn / n) < 4 / std::sqrt(n));
  CHECK(std::abs(sn2 / n - 1.0) < 4 * std::sqrt(2.0 / n));
  CHECK(std::abs(sn4 / n - 3.0) < 4 * std::sqrt(96.0 / n));
}

TEST_CASE("normal_vector matches repeated normal() draws") {
  RandomStream a(9, Channel::Terminal, 1, 2), b(9, Channel::Terminal, 1, 2);
  const Vector v = a.normal_vector(5);
  for (int i = 0; i < 5; ++i) CHECK(v(i) == b.normal());
}
