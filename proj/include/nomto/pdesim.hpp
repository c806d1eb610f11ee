#pragma once

#include "nomto/grid.hpp"

namespace nomto {

// Explicit finite-difference integrators on the spatial part of a Grid3D.
// Nodes sit at cell centers; zero-flux (Neumann) boundaries are realized with
// ghost cells mirrored across the boundary faces (u[-1] = u[0]). No flux
// crosses a face, so the lattice sum is conserved exactly, and the mirror is
// the even reflection of the solution, which keeps the stencil second-order
// up to the boundary.

struct HeatConfig {
  Grid3D grid;         // frame layout; dx/dy and frame spacing come from here
  double alpha = 1.0;  // diffusivity
  double dt = 1e-3;    // integrator step; frames every round(dt_save/dt) steps
};

struct BurgersConfig {
  Grid3D grid{50, 50, 50, 20.0, 20.0, 0.01};
  double nu = 2.0;  // viscosity
  double dt = 1e-3;
  bool convection = true;  // disabled -> pure diffusion (heat with alpha=nu)
};

// One explicit Euler step of the heat equation; u has shape (nx, ny).
NdArray heat_step(const NdArray& u, const HeatConfig& cfg);

// One explicit step of coupled 2-d Burgers: backward-difference convection,
// central-difference diffusion.
void burgers_step(const NdArray& u, const NdArray& v, const BurgersConfig& cfg,
                  NdArray& u_next, NdArray& v_next);

// Integrate from an initial condition, saving grid.nt frames spaced
// grid.dt_save apart (the initial condition is frame 0). Throws
// NumericalError on a CFL violation or non-finite state.
DiscretizedFunction simulate_heat(const NdArray& u0, const HeatConfig& cfg);

struct BurgersSolution {
  DiscretizedFunction u;
  DiscretizedFunction v;
};
BurgersSolution simulate_burgers(const NdArray& u0, const NdArray& v0,
                                 const BurgersConfig& cfg);

// d/dt of a saved space-time field (second-order stencils along the frame
// axis).
DiscretizedFunction time_derivative(const DiscretizedFunction& field);

// Diffusive stability bound: alpha*dt*(1/dx^2 + 1/dy^2) <= 1/2.
void check_diffusive_cfl(double coeff, double dt, double dx, double dy);

// Lattice sum of a spatial field, the invariant of the Neumann stencil.
double field_total(const NdArray& u);

}  // namespace nomto
