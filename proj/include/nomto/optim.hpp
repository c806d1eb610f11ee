#pragma once

#include <functional>

#include "nomto/graph.hpp"

namespace nomto {

// Smoothed l_1/2 sparsity penalty: exact |w|^(1/2) outside [-a, a], a C^1
// polynomial-under-root patch inside, so the gradient stays bounded at 0.
struct PenaltyConfig {
  double a = 0.01;
  double lambda = 1e-3;
};

double l_half_star(double w, double a);
double l_half_star_grad(double w, double a);

// Energy-ranked magnitude pruning on a fixed epoch schedule.
struct PruneConfig {
  std::int64_t start_epoch = 100;  // first prune; must be >= window
  std::int64_t period = 50;
  double fraction = 0.10;          // of the active weights, rounded down
  std::int64_t min_nonzero = 1;    // never prune below this many
  std::int64_t window = 50;        // energy comparison span in epochs
};

// One training sample: one field per graph input plus the masked target.
struct FitSample {
  std::vector<DiscretizedFunction> inputs;
  DiscretizedFunction target;
};
using FitDataset = std::vector<FitSample>;

// Mean absolute error over every defined target point in the dataset.
// Throws NumericalError when no point is defined at all.
double data_loss(const SymbolicGraph& g, const FitDataset& data);

// lambda * sum of l_half_star over the live weights, and its gradient in
// active_weights order.
double penalty_value(const SymbolicGraph& g, const PenaltyConfig& pen);
std::vector<double> penalty_grad(const SymbolicGraph& g,
                                 const PenaltyConfig& pen);

double total_loss(const SymbolicGraph& g, const FitDataset& data,
                  const PenaltyConfig& pen);

inline double weight_energy(double w, double grad) { return w * grad; }

// Masks the active weights with the smallest |e_now - e_then|, fraction of
// the active count rounded down but at least one, never dropping the live
// count below min_nonzero. Ties break toward smaller |w|, then the earlier
// coordinate. Energies align with `coords`. Returns what was masked.
std::vector<WeightCoord> prune_step(SymbolicGraph& g,
                                    const std::vector<WeightCoord>& coords,
                                    const std::vector<double>& e_now,
                                    const std::vector<double>& e_then,
                                    const PruneConfig& pc);

struct OptimSettings {
  double lr = 1e-3;
  double decay = 0.9;  // RMSProp squared-gradient decay
  double eps = 1e-8;
  std::int64_t max_epochs = 500;
  std::int64_t batch = 0;  // samples per step; 0 = full batch
  std::int64_t patience = 200;  // epochs without a new best (or a prune)
  double min_improvement = 0.0;
  std::uint64_t seed = 0;  // batch order shuffling
  // progress hook: epoch, total loss, active weights
  std::function<void(std::int64_t, double, std::int64_t)> on_epoch;
};

// Everything an identical rerun must reproduce bit for bit. Energies are
// indexed by the weight order at fit start; masked entries go to zero.
struct FitHistory {
  std::vector<double> loss;              // total, per epoch
  std::vector<double> data_term;         // per epoch
  std::vector<std::int64_t> active;      // live weights after the epoch
  std::vector<std::int64_t> prune_epochs;
  std::vector<std::vector<double>> energy;  // [epoch][initial weight]
  std::int64_t best_epoch = 0;           // 1-based; 0 = never improved
  double best_loss = 0.0;
};

// Weight state frozen at one epoch (prune events and completion).
struct WeightsSnapshot {
  std::int64_t epoch = 0;
  std::vector<EdgeMatrix> layers;
  std::vector<double> out_w;
  std::vector<std::uint8_t> out_live;
};

struct FitResult {
  SymbolicGraph graph;  // final state; last good state when aborted
  FitHistory history;
  std::vector<WeightsSnapshot> checkpoints;
  bool aborted = false;  // non-finite loss or gradient hit
};

// RMSProp on the live weights against pooled masked L1 plus the sparsity
// penalty, pruning on the PruneConfig schedule. Deterministic for a fixed
// (graph, data, settings) triple.
FitResult fit(const SymbolicGraph& start, const FitDataset& data,
              const PenaltyConfig& pen, const PruneConfig& prune,
              const OptimSettings& opt);

std::string history_to_json(const FitHistory& h);
FitHistory history_from_json(const std::string& text);

}  // namespace nomto
