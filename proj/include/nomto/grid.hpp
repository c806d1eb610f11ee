#pragma once

#include <string>
#include <variant>
#include <vector>

#include "nomto/array.hpp"

namespace nomto {

enum class Axis { T, X, Y };

std::string axis_name(Axis a);
Axis axis_from_name(const std::string& s);

// Uniform 1-d sample grid with both endpoints included.
struct Grid1D {
  double lo = -10.0;
  double hi = 10.0;
  std::int64_t n = 100;

  double spacing() const { return (hi - lo) / static_cast<double>(n - 1); }
  std::vector<double> points() const;
  bool operator==(const Grid1D&) const = default;
};

// Space-time grid for the PDE experiments: nx-by-ny spatial cells covering
// [-lx/2, lx/2] x [-ly/2, ly/2] with nodes at cell centers (so zero-flux
// boundaries sit on cell faces), nt saved frames spaced dt_save apart
// starting at t = 0.
struct Grid3D {
  std::int64_t nx = 50;
  std::int64_t ny = 50;
  std::int64_t nt = 50;
  double lx = 20.0;
  double ly = 20.0;
  double dt_save = 0.1;

  double dx() const { return lx / static_cast<double>(nx); }
  double dy() const { return ly / static_cast<double>(ny); }
  std::vector<double> xs() const;
  std::vector<double> ys() const;
  std::vector<double> ts() const;
  bool operator==(const Grid3D&) const = default;
};

using Grid = std::variant<Grid1D, Grid3D>;

Grid1D make_grid_1d(double lo, double hi, std::int64_t n);
Grid3D make_grid_3d(std::int64_t nx, std::int64_t ny, std::int64_t nt,
                    double lx, double ly, double dt_save);

std::vector<std::int64_t> grid_shape(const Grid& g);
double grid_spacing(const Grid& g, Axis axis);
bool grid_equal(const Grid& a, const Grid& b);
// Short stable identifier used to key cached artifacts.
std::string grid_signature(const Grid& g);
// Lossless JSON round trip for artifact files.
std::string grid_to_json(const Grid& g);
Grid grid_from_json(const std::string& text);

// A field sampled on a grid, together with a validity mask (all-true unless
// the producer marked points undefined).
struct DiscretizedFunction {
  Grid grid;
  NdArray values;
  Mask defined;

  DiscretizedFunction() = default;
  explicit DiscretizedFunction(const Grid& g);
  DiscretizedFunction(const Grid& g, NdArray v);

  std::int64_t numel() const { return values.numel(); }
};

}  // namespace nomto
