#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "nomto/funcgen.hpp"
#include "nomto/nn.hpp"
#include "nomto/oplib.hpp"

namespace nomto {

// Operator-fitting dataset in projected space, flat and channel-major:
// inputs [nsamples, arity, npoints], targets [nsamples, npoints].
struct OpDataset {
  Grid grid;
  std::int64_t arity = 1;
  std::int64_t nsamples = 0;
  std::int64_t npoints = 0;
  std::vector<double> inputs;
  std::vector<double> targets;
};

// Random mixture inputs with exact-op projected targets; deterministic for a
// given rng state.
OpDataset build_training_set(const OpSpec& op, std::int64_t n_samples,
                             const Grid& grid, Rng& rng);

struct OptSettings {
  double lr = 1e-3;
  std::int64_t batch = 64;       // samples per optimizer step
  std::int64_t micro_batch = 0;  // samples per tape; 0 = whole batch at once
  std::int64_t max_epochs = 200;
  std::int64_t patience = 10;    // epochs without held-out improvement
  double min_improvement = 1e-5;
  double holdout_fraction = 0.1;
  // Progress hook (epoch, mean train loss, holdout error); may be empty.
  std::function<void(std::int64_t, double, double)> on_epoch;
};

struct TrainReport {
  std::vector<double> train_loss;     // per epoch
  std::vector<double> holdout_error;  // per epoch, relative L2, projected
  double best_holdout = 0.0;
  std::int64_t train_samples = 0;
  std::int64_t holdout_samples = 0;
  std::int64_t epochs_run = 0;
  std::uint64_t seed = 0;
  double wall_seconds = 0.0;
};

// Adam fit of the net to the dataset. The tail holdout_fraction of the
// samples is never fit; training stops when its error stops improving by
// min_improvement for `patience` epochs, and the best parameters are
// returned. Predictions are clamped to the crop range before the loss.
std::pair<Params, TrainReport> train_surrogate(const OperatorNet& net,
                                               const OpDataset& data,
                                               const OptSettings& opt,
                                               std::uint64_t seed);

// A trained operator behind the output projection: raw inputs feed the
// frozen net directly, the net output is cropped and inverse-projected back,
// so block outputs always land in [-limit, limit]. Parameters are immutable;
// gradients flow only to the block inputs.
class SurrogateBlock {
public:
  SurrogateBlock(OpSpec op, OperatorNet net, Params params,
                 ProjectionSpec proj = {});

  // Raw-space inputs (one Var per channel) on the caller's tape.
  ad::Var tape_forward(ad::Tape& t, const std::vector<ad::Var>& inputs) const;
  // Field convenience wrapper; output mask is the AND of the input masks.
  DiscretizedFunction forward_field(
      const std::vector<DiscretizedFunction>& inputs) const;

  const OpSpec& op() const { return op_; }
  const OperatorNet& net() const { return net_; }
  const Params& params() const { return params_; }
  const ProjectionSpec& projection() const { return proj_; }

private:
  OpSpec op_;
  OperatorNet net_;
  Params params_;
  ProjectionSpec proj_;
  std::vector<double> coords_;
};

// On-disk collection of trained surrogates: one model file per
// (op, variant, grid, seed) key plus a manifest listing what is available.
class SurrogateStore {
public:
  explicit SurrogateStore(std::string dir);

  static std::string key(const std::string& op_name,
                         const std::string& variant, const Grid& grid,
                         std::uint64_t seed);

  bool has(const std::string& op_name, const std::string& variant,
           const Grid& grid, std::uint64_t seed) const;
  // Refuses to overwrite an existing model unless force is set.
  void save(const OpSpec& op, const OperatorNet& net, const Params& params,
            std::uint64_t seed, const TrainReport& report, bool force) const;
  SurrogateBlock load(const std::string& op_name, const std::string& variant,
                      const Grid& grid, std::uint64_t seed) const;

  // Manifest entries as a JSON array string (empty array if none).
  std::string manifest() const;
  const std::string& dir() const { return dir_; }

private:
  std::string model_path(const std::string& key) const;
  std::string manifest_path() const;

  std::string dir_;
};

}  // namespace nomto
