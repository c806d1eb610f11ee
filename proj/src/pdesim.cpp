#include "nomto/pdesim.hpp"

#include <cmath>

#include "nomto/oplib.hpp"

namespace nomto {

namespace {

void check_spatial(const NdArray& u, const Grid3D& g, const char* who) {
  if (u.rank() != 2 || u.dim(0) != g.nx || u.dim(1) != g.ny)
    throw ConfigError(std::string(who) + ": field shape " + u.shape_str() +
                      " does not match grid spatial layout");
}

// Ghost cells mirror across the boundary face of the cell-centered grid:
// -1 -> 0, n -> n-1. Zero flux through the face, so the discrete total is
// conserved exactly, and the even reflection keeps second order.
inline std::int64_t mirror(std::int64_t i, std::int64_t n) {
  if (i < 0) return 0;
  if (i >= n) return n - 1;
  return i;
}

void laplacian_neumann(const NdArray& u, NdArray& out, double dx, double dy) {
  const std::int64_t nx = u.dim(0), ny = u.dim(1);
  const double cx = 1.0 / (dx * dx), cy = 1.0 / (dy * dy);
  for (std::int64_t i = 0; i < nx; ++i) {
    const std::int64_t im = mirror(i - 1, nx), ip = mirror(i + 1, nx);
    for (std::int64_t j = 0; j < ny; ++j) {
      const std::int64_t jm = mirror(j - 1, ny), jp = mirror(j + 1, ny);
      out.at(i, j) = cx * (u.at(ip, j) - 2.0 * u.at(i, j) + u.at(im, j)) +
                     cy * (u.at(i, jp) - 2.0 * u.at(i, j) + u.at(i, jm));
    }
  }
}

std::int64_t frame_stride(const Grid3D& g, double dt) {
  const double ratio = g.dt_save / dt;
  const auto steps = static_cast<std::int64_t>(std::llround(ratio));
  if (steps < 1 || std::abs(ratio - static_cast<double>(steps)) > 1e-9)
    throw ConfigError("frame spacing must be an integer multiple of dt");
  return steps;
}

void store_frame(DiscretizedFunction& field, const NdArray& u,
                 std::int64_t frame) {
  const auto& g = std::get<Grid3D>(field.grid);
  for (std::int64_t i = 0; i < g.nx; ++i)
    for (std::int64_t j = 0; j < g.ny; ++j)
      field.values.at(i, j, frame) = u.at(i, j);
}

}  // namespace

void check_diffusive_cfl(double coeff, double dt, double dx, double dy) {
  const double number = coeff * dt * (1.0 / (dx * dx) + 1.0 / (dy * dy));
  if (number > 0.5)
    throw NumericalError("diffusive CFL violated: coeff*dt*(1/dx^2+1/dy^2) = " +
                         std::to_string(number) + " > 0.5");
}

double field_total(const NdArray& u) {
  double total = 0.0;
  for (std::int64_t i = 0; i < u.numel(); ++i) total += u[i];
  return total;
}

NdArray heat_step(const NdArray& u, const HeatConfig& cfg) {
  check_spatial(u, cfg.grid, "heat_step");
  const double dx = cfg.grid.dx(), dy = cfg.grid.dy();
  NdArray lap(u.shape());
  laplacian_neumann(u, lap, dx, dy);
  NdArray next = u;
  const double a = cfg.alpha * cfg.dt;
  for (std::int64_t i = 0; i < u.numel(); ++i) next[i] += a * lap[i];
  return next;
}

void burgers_step(const NdArray& u, const NdArray& v, const BurgersConfig& cfg,
                  NdArray& u_next, NdArray& v_next) {
  check_spatial(u, cfg.grid, "burgers_step");
  check_spatial(v, cfg.grid, "burgers_step");
  const std::int64_t nx = cfg.grid.nx, ny = cfg.grid.ny;
  const double dx = cfg.grid.dx(), dy = cfg.grid.dy();
  const double dt = cfg.dt, nu = cfg.nu;

  NdArray lap_u(u.shape()), lap_v(v.shape());
  laplacian_neumann(u, lap_u, dx, dy);
  laplacian_neumann(v, lap_v, dx, dy);

  if (u_next.shape() != u.shape()) u_next = NdArray(u.shape());
  if (v_next.shape() != v.shape()) v_next = NdArray(v.shape());

  for (std::int64_t i = 0; i < nx; ++i) {
    const std::int64_t im = mirror(i - 1, nx);
    for (std::int64_t j = 0; j < ny; ++j) {
      const std::int64_t jm = mirror(j - 1, ny);
      double conv_u = 0.0, conv_v = 0.0;
      if (cfg.convection) {
        const double ux = (u.at(i, j) - u.at(im, j)) / dx;
        const double uy = (u.at(i, j) - u.at(i, jm)) / dy;
        const double vx = (v.at(i, j) - v.at(im, j)) / dx;
        const double vy = (v.at(i, j) - v.at(i, jm)) / dy;
        conv_u = u.at(i, j) * ux + v.at(i, j) * uy;
        conv_v = u.at(i, j) * vx + v.at(i, j) * vy;
      }
      u_next.at(i, j) = u.at(i, j) + dt * (nu * lap_u.at(i, j) - conv_u);
      v_next.at(i, j) = v.at(i, j) + dt * (nu * lap_v.at(i, j) - conv_v);
    }
  }
}

DiscretizedFunction simulate_heat(const NdArray& u0, const HeatConfig& cfg) {
  check_spatial(u0, cfg.grid, "simulate_heat");
  check_diffusive_cfl(cfg.alpha, cfg.dt, cfg.grid.dx(), cfg.grid.dy());
  const std::int64_t stride = frame_stride(cfg.grid, cfg.dt);

  DiscretizedFunction field{Grid{cfg.grid}};
  NdArray u = u0;
  store_frame(field, u, 0);
  for (std::int64_t f = 1; f < cfg.grid.nt; ++f) {
    for (std::int64_t s = 0; s < stride; ++s) u = heat_step(u, cfg);
    if (!u.all_finite())
      throw NumericalError("heat solver produced non-finite values");
    store_frame(field, u, f);
  }
  return field;
}

BurgersSolution simulate_burgers(const NdArray& u0, const NdArray& v0,
                                 const BurgersConfig& cfg) {
  check_spatial(u0, cfg.grid, "simulate_burgers");
  check_spatial(v0, cfg.grid, "simulate_burgers");
  check_diffusive_cfl(cfg.nu, cfg.dt, cfg.grid.dx(), cfg.grid.dy());
  const std::int64_t stride = frame_stride(cfg.grid, cfg.dt);
  const double adv_limit = std::min(cfg.grid.dx(), cfg.grid.dy()) / cfg.dt;

  BurgersSolution sol{DiscretizedFunction{Grid{cfg.grid}},
                      DiscretizedFunction{Grid{cfg.grid}}};
  NdArray u = u0, v = v0, un(u0.shape()), vn(v0.shape());
  store_frame(sol.u, u, 0);
  store_frame(sol.v, v, 0);
  for (std::int64_t f = 1; f < cfg.grid.nt; ++f) {
    for (std::int64_t s = 0; s < stride; ++s) {
      const double speed = std::max(u.max_abs(), v.max_abs());
      if (cfg.convection && speed > adv_limit)
        throw NumericalError("advective CFL violated: max|u| = " +
                             std::to_string(speed));
      burgers_step(u, v, cfg, un, vn);
      std::swap(u, un);
      std::swap(v, vn);
    }
    if (!u.all_finite() || !v.all_finite())
      throw NumericalError("burgers solver produced non-finite values");
    store_frame(sol.u, u, f);
    store_frame(sol.v, v, f);
  }
  return sol;
}

DiscretizedFunction time_derivative(const DiscretizedFunction& field) {
  return numeric_derivative(field, Axis::T, 1);
}

}  // namespace nomto
