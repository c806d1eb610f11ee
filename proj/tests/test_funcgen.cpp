#include <doctest.h>

#include <cmath>

#include "nomto/funcgen.hpp"

using namespace nomto;

TEST_CASE("default 1-d grid: 100 points spanning [-10, 10]") {
  const Grid1D g = make_grid_1d(-10.0, 10.0, 100);
  const auto pts = g.points();
  CHECK(pts.size() == 100);
  CHECK(pts.front() == -10.0);
  CHECK(pts.back() == 10.0);
  CHECK(g.spacing() == doctest::Approx(20.0 / 99.0).epsilon(1e-14));
}

TEST_CASE("grid construction rejects degenerate arguments") {
  CHECK_THROWS_AS(make_grid_1d(-1.0, 1.0, 1), ConfigError);
  CHECK_THROWS_AS(make_grid_1d(2.0, 2.0, 10), ConfigError);
  CHECK_THROWS_AS(make_grid_1d(3.0, -3.0, 10), ConfigError);
}

TEST_CASE("1-d mixtures are finite, non-trivial and deterministic per seed") {
  const Grid1D g = make_grid_1d(-10.0, 10.0, 100);
  Rng r1(2024), r2(2024), r3(2025);
  const Mixture1DParams params;
  const auto f1 = sample_mixture_1d(g, params, r1);
  const auto f2 = sample_mixture_1d(g, params, r2);
  const auto f3 = sample_mixture_1d(g, params, r3);
  REQUIRE(f1.values.numel() == 100);
  CHECK(f1.values.all_finite());
  CHECK(f1.values.max_abs() > 0.0);
  CHECK(f1.values.flat() == f2.values.flat());
  CHECK(f1.values.flat() != f3.values.flat());
  CHECK(f1.defined.all_true());
}

TEST_CASE("zero components produce the zero field") {
  const Grid1D g = make_grid_1d(-10.0, 10.0, 50);
  Mixture1DParams params;
  params.min_components = 0;
  params.max_components = 0;
  Rng r(1);
  const auto f = sample_mixture_1d(g, params, r);
  CHECK(f.values.max_abs() == 0.0);
}

TEST_CASE("a single bell peaks near its amplitude") {
  const Grid1D g = make_grid_1d(-10.0, 10.0, 2001);
  Mixture1DParams params;
  params.min_components = 1;
  params.max_components = 1;
  params.amplitude = {2.0, 2.0};
  Rng r(9);
  const auto f = sample_mixture_1d(g, params, r);
  CHECK(f.values.max_abs() == doctest::Approx(2.0).epsilon(1e-3));
}

TEST_CASE("mixture amplitude bounds the field sup via the component count") {
  const Grid1D g = make_grid_1d(-10.0, 10.0, 100);
  Mixture1DParams params;  // k <= 50, |amp| <= 2
  Rng r(31);
  for (int i = 0; i < 50; ++i) {
    const auto f = sample_mixture_1d(g, params, r);
    CHECK(f.values.max_abs() <= 100.0);
  }
}

TEST_CASE("mixture parameter validation") {
  const Grid1D g = make_grid_1d(-10.0, 10.0, 10);
  Rng r(3);
  Mixture1DParams bad_k;
  bad_k.min_components = 5;
  bad_k.max_components = 2;
  CHECK_THROWS_AS(sample_mixture_1d(g, bad_k, r), ConfigError);
  Mixture1DParams bad_sigma;
  bad_sigma.sigma = {0.0, 1.0};
  CHECK_THROWS_AS(sample_mixture_1d(g, bad_sigma, r), ConfigError);
  Mixture1DParams neg_sigma;
  neg_sigma.sigma = {-2.0, -1.0};
  CHECK_THROWS_AS(sample_mixture_1d(g, neg_sigma, r), ConfigError);
}

TEST_CASE("2-d initial-condition presets") {
  const Grid3D g = make_grid_3d(50, 50, 50, 20.0, 20.0, 0.1);
  Rng r(11);
  const auto heat = sample_mixture_2d(g, Mixture2DParams::heat_default(), r);
  REQUIRE(heat.shape() == std::vector<std::int64_t>{50, 50});
  CHECK(heat.all_finite());
  CHECK(heat.max_abs() > 0.0);

  Rng rb1(12), rb2(12);
  auto base = Mixture2DParams::burgers_default();
  const auto scaled = sample_mixture_2d(g, base, rb1);
  base.scale = 1.0;
  const auto unscaled = sample_mixture_2d(g, base, rb2);
  for (std::int64_t i = 0; i < scaled.numel(); ++i)
    CHECK(scaled[i] == doctest::Approx(0.1 * unscaled[i]).epsilon(1e-12));
}

TEST_CASE("non-positive spread interval is rejected") {
  const Grid3D g = make_grid_3d(10, 10, 10, 20.0, 20.0, 0.1);
  Rng r(4);
  Mixture2DParams p;
  p.spread = {0.0, 10.0};
  CHECK_THROWS_AS(sample_mixture_2d(g, p, r), ConfigError);
}

TEST_CASE("3-d mixtures fill the space-time grid deterministically") {
  const Grid3D g = make_grid_3d(12, 14, 16, 20.0, 20.0, 0.1);
  Mixture3DParams params;
  params.components = 20;
  Rng r1(500), r2(500);
  const auto f1 = sample_mixture_3d(g, params, r1);
  const auto f2 = sample_mixture_3d(g, params, r2);
  REQUIRE(f1.values.shape() == std::vector<std::int64_t>{12, 14, 16});
  CHECK(f1.values.all_finite());
  CHECK(f1.values.max_abs() > 0.0);
  CHECK(f1.values.flat() == f2.values.flat());
}
