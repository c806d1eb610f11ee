#pragma once

#include <Eigen/Core>
#include <functional>
#include <vector>

#include "nomto/oplib.hpp"

namespace nomto::ad {

using Vec = Eigen::ArrayXd;
using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Var {
  std::int32_t id = -1;
  bool valid() const { return id >= 0; }
};

// Contiguous row-major [nblocks, rows, cols] view of a flat buffer; the unit
// the blocked matrix products below operate on.
struct BlockSpec {
  std::int64_t nblocks = 1;
  std::int64_t rows = 0;
  std::int64_t cols = 0;
  std::int64_t numel() const { return nblocks * rows * cols; }
};

enum class Side { Left, Right };  // M*block or block*M

// Reverse-mode tape. Nodes are created in SSA order; backward() walks them in
// reverse. Gradients propagate only into subgraphs that contain a leaf with
// requires_grad, so frozen-parameter forwards skip all weight-gradient work.
class Tape {
public:
  Var leaf(std::vector<std::int64_t> shape, const double* data,
           bool requires_grad);
  Var leaf_scalar(double v, bool requires_grad);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var hadamard(Var a, Var b);
  Var scale(Var a, double c);
  Var gelu(Var a);
  Var leaky_relu(Var a, double slope);
  Var tanh_fn(Var a);
  // Hard clamp; gradient passes only strictly inside (lo, hi).
  Var clamp(Var a, double lo, double hi);

  // Redefined operator semantics (same totalization as eval_point_*), with
  // zero gradient wherever the raw value was saturated or undefined.
  Var pointwise_unary(Var a, OpKind kind, double clip_limit = 1000.0);
  Var pointwise_binary(Var a, Var b, OpKind kind, double clip_limit = 1000.0);
  // clamp(x, +/-limit) with NaN already excluded upstream.
  Var saturate(Var a, double limit = 1000.0);
  // Fused crop + inverse projection (ProjectionSpec::unproject): clamp to
  // [-tanh(limit), tanh(limit)], then atanh clamped to [-limit, limit].
  // Gradient 1/(1-y^2) strictly inside the crop range, zero at saturation.
  Var unproject(Var a, double limit = 1000.0);

  // W [m,k] x X [k,n] -> [m,n]; all row-major.
  Var matmul(Var w, Var x);
  // X [m,n] + b [m] broadcast across columns.
  Var add_col_bias(Var x, Var b);
  // Fused gelu(pw + sp + bias-broadcast); saves two intermediates per layer.
  Var add2_bias_gelu(Var pw, Var sp, Var b);

  // Complex tensors travel packed as [2, ...] (re plane, then im plane).
  // Analysis stage: multiply blocks by (C - iS); real input allowed.
  Var dft_analysis(Var in, bool in_real, const RowMat* c, const RowMat* s,
                   Side side, BlockSpec blocks);
  // Synthesis stage: multiply blocks by (C + iS); optionally emit only the
  // real plane (the final stage, where Hermitian doubling weights live inside
  // the matrices).
  Var dft_synthesis(Var in, const RowMat* c, const RowMat* s, Side side,
                    BlockSpec blocks, bool real_out);
  // Per-mode complex channel mixing: packed [2, ci, b, k] with weights
  // [k, co, ci] -> packed [2, co, b, k] (b = batch of independent samples).
  Var mode_mix(Var packed, Var wre, Var wim, std::int64_t co, std::int64_t ci,
               std::int64_t k, std::int64_t b = 1);

  // First-derivative stencil along a grid axis (plan from make_stencil_plan).
  Var stencil_derivative(Var a, const StencilPlan* plan);

  // X [ci, n] conv K [co, ci, kw] with zero padding, stride 1, odd kw.
  Var conv1d(Var x, Var k, std::int64_t co, std::int64_t ci, std::int64_t kw);
  // X [ci, nx*ny*nt] conv K [co, ci, 3, 3, 3] with zero padding; returns
  // [co, nx*ny*nt].
  Var conv3d(Var x, Var k, std::int64_t co, std::int64_t ci, std::int64_t nx,
             std::int64_t ny, std::int64_t nt);

  // y = sum_i w_i * x_i with scalar weights.
  Var weighted_sum(const std::vector<Var>& xs, const std::vector<Var>& ws);

  // Mean absolute deviation over masked points (mask may be null = all).
  Var masked_l1(Var pred, const double* target, const std::uint8_t* mask);
  // Mean over nbatch contiguous groups of ||p_b - t_b|| / ||t_b||.
  Var relative_l2(Var pred, const double* target, std::int64_t nbatch = 1);
  Var add_scalars(const std::vector<Var>& xs);
  // Stack inputs (each with size divisible by ncols) as rows of [R, ncols].
  Var concat_rows(const std::vector<Var>& xs, std::int64_t ncols);

  void backward(Var root);
  // Reverse pass from a non-scalar root with an externally supplied
  // d(objective)/d(root) of the root's size.
  void backward(Var root, const double* seed);

  const Vec& val(Var v) const { return nodes_[v.id].value; }
  const std::vector<std::int64_t>& shape(Var v) const {
    return nodes_[v.id].shape;
  }
  double scalar(Var v) const { return nodes_[v.id].value[0]; }
  // Gradient of the last backward() w.r.t. a leaf (zero vector if untouched).
  Vec grad(Var v) const;

  std::size_t size() const { return nodes_.size(); }

private:
  struct Node {
    std::vector<std::int64_t> shape;
    Vec value;
    Vec grad;
    bool needs_grad = false;
    std::function<void(Tape&)> back;
  };

  std::vector<Node> nodes_;

  Var push(std::vector<std::int64_t> shape, Vec value, bool needs,
           std::function<void(Tape&)> back);
  bool needs(Var v) const { return nodes_[v.id].needs_grad; }
  Vec& gref(Var v);
  void acc(Var v, const Vec& g);
  void run_backward(Var root);
};

}  // namespace nomto::ad
