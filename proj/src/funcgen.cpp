#include "nomto/funcgen.hpp"

#include <Eigen/Core>
#include <cmath>

namespace nomto {

namespace {

void check_interval(const Interval& iv, const char* what,
                    bool require_positive) {
  if (iv.first > iv.second)
    throw ConfigError(std::string(what) + ": interval is empty");
  if (require_positive && !(iv.first > 0.0))
    throw ConfigError(std::string(what) + ": interval must be positive");
}

// Uniform draw of a standard deviation given the configured interpretation.
double draw_spread(Rng& rng, const Interval& iv, SpreadKind kind) {
  const double v = rng.uniform(iv.first, iv.second);
  return kind == SpreadKind::Variance ? std::sqrt(v) : v;
}

void gauss_profile(const std::vector<double>& pts, double mu, double sigma,
                   std::vector<double>& out) {
  out.resize(pts.size());
  const double inv = 1.0 / (2.0 * sigma * sigma);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double d = pts[i] - mu;
    out[i] = std::exp(-d * d * inv);
  }
}

}  // namespace

Mixture2DParams Mixture2DParams::heat_default() {
  return Mixture2DParams{100, {5.0, 10.0}, SpreadKind::Variance, {-1.0, 1.0},
                         1.0};
}

Mixture2DParams Mixture2DParams::burgers_default() {
  return Mixture2DParams{100, {1.0, 3.0}, SpreadKind::Stddev, {-1.0, 1.0},
                         0.1};
}

DiscretizedFunction sample_mixture_1d(const Grid1D& grid,
                                      const Mixture1DParams& params,
                                      Rng& rng) {
  if (params.min_components < 0 || params.max_components < params.min_components)
    throw ConfigError("mixture: bad component-count range");
  check_interval(params.sigma, "mixture sigma", true);
  check_interval(params.amplitude, "mixture amplitude", false);

  DiscretizedFunction f{Grid{grid}};
  const auto pts = grid.points();
  const std::int64_t k =
      rng.uniform_int(params.min_components, params.max_components);
  std::vector<double> prof;
  for (std::int64_t c = 0; c < k; ++c) {
    const double mu = rng.uniform(grid.lo, grid.hi);
    const double sigma = rng.uniform(params.sigma.first, params.sigma.second);
    const double amp =
        rng.uniform(params.amplitude.first, params.amplitude.second);
    gauss_profile(pts, mu, sigma, prof);
    for (std::int64_t i = 0; i < grid.n; ++i) f.values[i] += amp * prof[i];
  }
  return f;
}

NdArray sample_mixture_2d(const Grid3D& grid, const Mixture2DParams& params,
                          Rng& rng) {
  if (params.components < 0)
    throw ConfigError("mixture: component count must be >= 0");
  check_interval(params.spread, "mixture spread", true);
  check_interval(params.amplitude, "mixture amplitude", false);

  NdArray out({grid.nx, grid.ny});
  const auto xs = grid.xs();
  const auto ys = grid.ys();
  std::vector<double> ex, ey;
  for (std::int64_t c = 0; c < params.components; ++c) {
    const double mx = rng.uniform(-grid.lx / 2.0, grid.lx / 2.0);
    const double my = rng.uniform(-grid.ly / 2.0, grid.ly / 2.0);
    const double sx = draw_spread(rng, params.spread, params.spread_kind);
    const double sy = draw_spread(rng, params.spread, params.spread_kind);
    const double amp =
        rng.uniform(params.amplitude.first, params.amplitude.second);
    gauss_profile(xs, mx, sx, ex);
    gauss_profile(ys, my, sy, ey);
    for (std::int64_t i = 0; i < grid.nx; ++i) {
      const double ai = amp * ex[i];
      Eigen::Map<Eigen::ArrayXd> row(out.data() + i * grid.ny, grid.ny);
      row += ai * Eigen::Map<const Eigen::ArrayXd>(ey.data(), grid.ny);
    }
  }
  if (params.scale != 1.0)
    for (auto& v : out.flat()) v *= params.scale;
  return out;
}

DiscretizedFunction sample_mixture_3d(const Grid3D& grid,
                                      const Mixture3DParams& params,
                                      Rng& rng) {
  if (params.components < 0)
    throw ConfigError("mixture: component count must be >= 0");
  check_interval(params.sigma_xy, "mixture sigma_xy", true);
  check_interval(params.sigma_t, "mixture sigma_t", true);
  check_interval(params.amplitude, "mixture amplitude", false);

  DiscretizedFunction f{Grid{grid}};
  const auto xs = grid.xs();
  const auto ys = grid.ys();
  const auto ts = grid.ts();
  const double t_end = ts.back();
  std::vector<double> ex, ey, et;
  for (std::int64_t c = 0; c < params.components; ++c) {
    const double mx = rng.uniform(-grid.lx / 2.0, grid.lx / 2.0);
    const double my = rng.uniform(-grid.ly / 2.0, grid.ly / 2.0);
    const double mt = rng.uniform(0.0, t_end);
    const double sx = rng.uniform(params.sigma_xy.first, params.sigma_xy.second);
    const double sy = rng.uniform(params.sigma_xy.first, params.sigma_xy.second);
    const double st = rng.uniform(params.sigma_t.first, params.sigma_t.second);
    const double amp =
        rng.uniform(params.amplitude.first, params.amplitude.second);
    gauss_profile(xs, mx, sx, ex);
    gauss_profile(ys, my, sy, ey);
    gauss_profile(ts, mt, st, et);
    Eigen::Map<const Eigen::ArrayXd> etv(et.data(), grid.nt);
    for (std::int64_t i = 0; i < grid.nx; ++i) {
      const double ai = amp * ex[i];
      for (std::int64_t j = 0; j < grid.ny; ++j) {
        Eigen::Map<Eigen::ArrayXd> line(
            f.values.data() + (i * grid.ny + j) * grid.nt, grid.nt);
        line += (ai * ey[j]) * etv;
      }
    }
  }
  return f;
}

}  // namespace nomto
