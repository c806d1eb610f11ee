#pragma once

#include <string>
#include <utility>
#include <vector>

#include "nomto/ad.hpp"
#include "nomto/grid.hpp"

namespace nomto {

// Named parameter tensor; models are flat lists of these, in a fixed order.
struct ParamTensor {
  std::string name;
  std::vector<std::int64_t> shape;
  std::vector<double> value;

  std::int64_t numel() const { return static_cast<std::int64_t>(value.size()); }
};
using Params = std::vector<ParamTensor>;

std::int64_t params_numel(const Params& p);
bool params_equal(const Params& a, const Params& b);

// Create tape leaves for every tensor, in order.
std::vector<ad::Var> bind_params(ad::Tape& t, const Params& p, bool trainable);

// Adam with bias correction. State is positional: construct against the
// Params it will update and keep the layout fixed.
class Adam {
public:
  explicit Adam(const Params& params, double lr = 1e-3, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-8);
  // grads aligned with params (one Vec per tensor).
  void step(Params& params, const std::vector<ad::Vec>& grads);
  double lr;

private:
  double beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  std::vector<ad::Vec> m_, v_;
};

// Truncated-spectrum transform of a grid: per-axis cosine/sine contraction
// matrices with 1/n folded into analysis and Hermitian doubling folded into
// the final synthesis stage. Stages are listed in analysis order (t, then y,
// then x for space-time grids); synthesis applies them reversed.
struct SpectralStage {
  ad::RowMat c_an, s_an;
  ad::RowMat c_syn, s_syn;
  ad::Side side = ad::Side::Right;
  std::int64_t n = 0;
  std::int64_t k = 0;
};

struct SpectralPlan {
  std::vector<SpectralStage> stages;
  std::vector<std::int64_t> dims;  // spatial extents in memory order
  std::int64_t k_total = 1;
  std::int64_t npoints = 1;
};

// modes = kept non-negative frequencies on the trailing (half-spectrum) axis;
// full axes keep 2*modes-1 frequencies (positive and negative).
SpectralPlan make_spectral_plan(const Grid& grid, std::int64_t modes);

// Band-limited spectral convolution: analysis, per-mode channel mixing,
// synthesis back to the grid. x is [channels, batch * npoints]; weights are
// flat [k_total * channels * channels] re/im parts.
ad::Var spectral_conv(ad::Tape& t, ad::Var x, const SpectralPlan& plan,
                      std::int64_t channels, std::int64_t batch, ad::Var wre,
                      ad::Var wim);

// Coordinate channels appended to model inputs, normalized to [0, 1].
std::int64_t coord_dims(const Grid& g);
std::vector<double> coord_rows(const Grid& g);  // [coord_dims, npoints]

// Architecture description; covers both variants so configs stay uniform.
struct NetSpec {
  std::string variant = "spectral";  // spectral | convolutional
  std::int64_t arity = 1;            // input field channels
  std::int64_t layers = 3;
  std::int64_t width = 32;    // hidden channels (spectral) / multiplier (conv)
  std::int64_t modes = 4;     // spectral only
  std::int64_t head_hidden = 64;  // spectral projection head
  std::int64_t res_blocks = 4;    // convolutional only
  std::int64_t kernel = 5;        // convolutional 1-d kernel width
};

// The pinned experiment architectures: spectral 3 layers / 4 modes / width 32
// on space-time grids (16 modes on 1-d grids), convolutional 4 layers / 4
// residual blocks / multiplier 32.
NetSpec spectral_preset(std::int64_t arity, const Grid& grid);
NetSpec convolutional_preset(std::int64_t arity, const Grid& grid);

// A neural operator bound to a grid: holds the architecture and (for the
// spectral variant) the transform plan. Parameters live outside the model so
// the same net can run frozen or trainable.
class OperatorNet {
public:
  OperatorNet(NetSpec spec, Grid grid);

  Params init_params(std::uint64_t seed) const;
  // x: [in_channels, batch * npoints] leaf or tape value. Returns
  // [batch * npoints]. The convolutional variant requires batch == 1.
  ad::Var forward(ad::Tape& t, const std::vector<ad::Var>& params, ad::Var x,
                  std::int64_t batch = 1) const;

  const NetSpec& spec() const { return spec_; }
  const Grid& grid() const { return grid_; }
  const SpectralPlan& plan() const { return plan_; }
  std::int64_t npoints() const { return npoints_; }
  std::int64_t in_channels() const { return spec_.arity + coord_dims(grid_); }

private:
  NetSpec spec_;
  Grid grid_;
  SpectralPlan plan_;  // empty for the convolutional variant
  std::int64_t npoints_ = 0;
};

// Binary container for a parameter list plus a caller-supplied JSON metadata
// string (architecture, grid signature, training report and the like).
void save_params(const std::string& path, const Params& p,
                 const std::string& meta_json);
std::pair<Params, std::string> load_params(const std::string& path);

// NetSpec <-> JSON (used inside model files and manifests).
std::string net_spec_to_json(const NetSpec& spec);
NetSpec net_spec_from_json(const std::string& json);

}  // namespace nomto
