#pragma once

#include <vector>

#include "nomto/grid.hpp"

namespace nomto {

enum class OpKind {
  Id,
  Const,
  Square,
  Sin,
  Cos,
  Ln,
  Sqrt,
  Airy,
  Gamma,
  DDt,
  DDx,
  DDy,
  Mul,
  Div,
};

struct OpSpec {
  std::string name;
  int arity = 1;
  OpKind kind = OpKind::Id;
  bool is_derivative = false;
  int derivative_order = 0;
  Axis axis = Axis::T;  // meaningful only for derivative ops
};

const OpSpec& op_by_name(const std::string& name);
const std::vector<OpSpec>& all_ops();

// Ordered op-name lists; duplicates are distinct graph nodes.
struct LibraryPreset {
  std::string name;
  std::vector<std::string> ops;
};
const LibraryPreset& library_preset(const std::string& name);
const std::vector<LibraryPreset>& all_library_presets();

// Specs for a list of op names; duplicates stay duplicated.
std::vector<OpSpec> resolve_ops(const std::vector<std::string>& names);

// Saturating value projection used for operator training. Values are clipped
// to [-clip_limit, clip_limit] and mapped through tanh; the inverse clamps
// back. tanh(clip_limit) rounds to 1.0 in double precision, so crop() is a
// clamp to [-1, 1] and unproject(+/-1.0) = +/-clip_limit exactly.
struct ProjectionSpec {
  double clip_limit = 1000.0;

  double project(double v) const;
  double unproject(double y) const;
  double crop(double y) const;
  double crop_hi() const { return std::tanh(clip_limit); }
};

// Replace NaN by 0 and +/-inf by +/-clip_limit. Applied to raw op outputs so
// that no non-finite value escapes; finite values pass through untouched.
double finite_or_saturate(double v, double clip_limit = 1000.0);

// The transfer function of a graph node built from an op: raw op output
// clamped to [-clip_limit, clip_limit] (this is what a trained block computes
// by construction: crop to tanh range, then inverse projection).
double saturate_node(double v, double clip_limit = 1000.0);

// Redefined point semantics (total functions):
//   ln    -> ln|x|, with ln 0 = -clip_limit
//   sqrt  -> 0 for x <= 0
//   gamma -> saturates at poles / overflow
//   div   -> saturates for zero denominator
double eval_point_unary(OpKind kind, double x, double clip_limit = 1000.0);
double eval_point_binary(OpKind kind, double x, double y,
                         double clip_limit = 1000.0);

// Strided view of one grid axis: `bases.size()` independent lines of n points
// spaced `stride` apart, with sample spacing h. Shared by the numeric
// differentiator and the autodiff stencil node.
struct StencilPlan {
  std::int64_t n = 0;
  std::int64_t stride = 0;
  std::vector<std::int64_t> bases;
  double h = 1.0;
};
StencilPlan make_stencil_plan(const Grid& grid, Axis axis);

// First/second derivative along a grid axis; second-order central stencil
// inside, second-order one-sided at the ends. order == 2 applies the
// first-derivative stencil twice (matching how composed derivative nodes
// evaluate). Undefined input points poison every output point whose stencil
// touches them.
DiscretizedFunction numeric_derivative(const DiscretizedFunction& f, Axis axis,
                                       int order = 1);

// Point-wise ops map masks through unchanged; derivative ops erode them.
DiscretizedFunction eval_exact_unary(const OpSpec& op,
                                     const DiscretizedFunction& x);
DiscretizedFunction eval_exact_binary(const OpSpec& op,
                                      const DiscretizedFunction& x,
                                      const DiscretizedFunction& y);

struct TrainingPair {
  std::vector<NdArray> inputs;  // raw function values
  NdArray target;               // projected
};

// Raw inputs and the projected exact output for one operator sample. Only the
// target passes through tanh; surrogates consume the original function space.
TrainingPair make_training_pair(const OpSpec& op,
                                const std::vector<DiscretizedFunction>& inputs,
                                const ProjectionSpec& proj);

}  // namespace nomto
