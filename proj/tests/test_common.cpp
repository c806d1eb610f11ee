#include <doctest.h>

#include <cmath>
#include <set>

#include "nomto/common.hpp"

using namespace nomto;

TEST_CASE("rng reproduces the same stream for the same seed") {
  Rng a(1234), b(1234);
  for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("different seeds give different streams") {
  Rng a(1), b(2);
  int same = 0;
  for (int i = 0; i < 64; ++i) same += (a.next_u64() == b.next_u64());
  CHECK(same == 0);
}

TEST_CASE("uniform stays inside its interval") {
  Rng r(7);
  for (int i = 0; i < 10000; ++i) {
    const double v = r.uniform(-3.0, 5.0);
    CHECK(v >= -3.0);
    CHECK(v < 5.0);
  }
}

TEST_CASE("uniform_int covers an inclusive range") {
  Rng r(42);
  std::set<std::int64_t> seen;
  for (int i = 0; i < 2000; ++i) {
    const auto v = r.uniform_int(10, 13);
    CHECK(v >= 10);
    CHECK(v <= 13);
    seen.insert(v);
  }
  CHECK(seen.size() == 4);
  CHECK_THROWS_AS(r.uniform_int(5, 4), ConfigError);
}

TEST_CASE("normal has roughly standard moments") {
  Rng r(99);
  const int n = 200000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double v = r.normal();
    sum += v;
    sq += v * v;
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  CHECK(std::abs(mean) < 0.01);
  CHECK(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("scaled normal applies mean and stddev") {
  Rng r(5);
  const int n = 100000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double v = r.normal(2.0, 0.5);
    sum += v;
    sq += v * v;
  }
  const double mean = sum / n;
  CHECK(std::abs(mean - 2.0) < 0.01);
  CHECK(std::abs(std::sqrt(sq / n - mean * mean) - 0.5) < 0.01);
}

TEST_CASE("child streams are independent of the parent and each other") {
  Rng root(77);
  Rng c0 = root.child(0);
  Rng c1 = root.child(1);
  CHECK(c0.next_u64() != c1.next_u64());
  // Deriving a child does not perturb the parent stream.
  Rng root2(77);
  (void)root2.child(0);
  Rng root3(77);
  CHECK(root2.next_u64() == root3.next_u64());
}

TEST_CASE("hashes are stable and sensitive") {
  CHECK(hash_str("abc") == hash_str("abc"));
  CHECK(hash_str("abc") != hash_str("abd"));
  CHECK(mix64(0) != mix64(1));
}
