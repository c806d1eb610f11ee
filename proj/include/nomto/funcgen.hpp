#pragma once

#include "nomto/grid.hpp"

namespace nomto {

// How the per-axis spread interval of a mixture component is interpreted:
// uniform draw of the standard deviation, or of the variance.
enum class SpreadKind { Stddev, Variance };

struct Mixture1DParams {
  std::int64_t min_components = 10;
  std::int64_t max_components = 50;
  Interval sigma{0.5, 3.0};
  Interval amplitude{-2.0, 2.0};
};

// Spatial (x,y) mixtures used as PDE initial conditions.
struct Mixture2DParams {
  std::int64_t components = 100;
  Interval spread{5.0, 10.0};
  SpreadKind spread_kind = SpreadKind::Variance;
  Interval amplitude{-1.0, 1.0};
  double scale = 1.0;

  static Mixture2DParams heat_default();
  static Mixture2DParams burgers_default();
};

// Space-time (x,y,t) mixtures used as operator training inputs.
struct Mixture3DParams {
  std::int64_t components = 100;
  Interval sigma_xy{1.0, 3.5};
  Interval sigma_t{0.5, 2.0};
  Interval amplitude{-1.0, 1.0};
};

// Sum of k Gaussian bells a*exp(-(t-mu)^2/(2 sigma^2)) with k uniform in
// [min_components, max_components], means uniform over the grid interval.
DiscretizedFunction sample_mixture_1d(const Grid1D& grid,
                                      const Mixture1DParams& params, Rng& rng);

// (nx, ny) array; component means uniform over the spatial domain.
NdArray sample_mixture_2d(const Grid3D& grid, const Mixture2DParams& params,
                          Rng& rng);

DiscretizedFunction sample_mixture_3d(const Grid3D& grid,
                                      const Mixture3DParams& params, Rng& rng);

}  // namespace nomto
