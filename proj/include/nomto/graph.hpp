#pragma once

#include <map>
#include <memory>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "nomto/surrogate.hpp"

namespace nomto {

// Layer layout: unary nodes first (library order), then binary nodes.
// Unary node k reads slot k; binary node k reads slots m+2k and m+2k+1
// (0-based throughout).
struct SlotMap {
  std::int64_t m = 0;  // unary nodes per layer
  std::int64_t n = 0;  // binary nodes per layer

  std::int64_t slots() const { return m + 2 * n; }
  std::int64_t width() const { return m + n; }
  bool operator==(const SlotMap&) const = default;
};

SlotMap make_slot_map(const std::vector<OpSpec>& library);

// (node index in the layer, input position 0 or 1) for slot j.
std::pair<std::int64_t, int> slot_target(const SlotMap& sm, std::int64_t j);

// One node of a layer: either a frozen surrogate or the exact evaluator.
struct GraphNode {
  OpSpec op;
  std::shared_ptr<const SurrogateBlock> block;  // null -> exact op
};

// Dense edges from every previous-layer node to every slot. Pruned entries
// have live = 0 and weight exactly 0, and stay that way.
struct EdgeMatrix {
  std::int64_t slots = 0;
  std::int64_t prev = 0;
  std::vector<double> w;           // [slots, prev] row-major
  std::vector<std::uint8_t> live;  // parallel to w

  double& at(std::int64_t j, std::int64_t i) { return w[j * prev + i]; }
  double at(std::int64_t j, std::int64_t i) const { return w[j * prev + i]; }
  bool is_live(std::int64_t j, std::int64_t i) const {
    return live[j * prev + i] != 0;
  }
};

struct SymbolicGraph {
  Grid grid;
  std::vector<std::string> inputs;   // variable names, the layer-0 outputs
  std::vector<std::string> library;  // op names as declared (duplicates ok)
  std::vector<GraphNode> nodes;      // per-layer nodes, unary before binary
  SlotMap sm;
  std::int64_t depth = 0;
  std::vector<EdgeMatrix> layers;  // [depth]; layers[0].prev = inputs.size()
  std::vector<double> out_w;       // last layer -> output node
  std::vector<std::uint8_t> out_live;

  // Serialization provenance for reloading surrogate blocks.
  std::string variant = "spectral";
  std::uint64_t surrogate_seed = 0;

  // Stencil plans for exact derivative nodes; stable addresses for tapes.
  std::map<Axis, std::shared_ptr<const StencilPlan>> plans;

  std::int64_t total_weights() const;
  std::int64_t active_count() const;
};

struct GraphConfig {
  std::int64_t depth = 2;
  std::vector<std::string> inputs = {"x"};
  std::set<std::string> exact_overrides;  // op names evaluated exactly
  std::string variant = "spectral";
  std::uint64_t surrogate_seed = 0;
};

using BlockMap = std::map<std::string, std::shared_ptr<const SurrogateBlock>>;

// Layered graph over the library with weights drawn from N(0, 0.1) in a
// fixed order (edge layers first, output weights last; each matrix row-major
// slot-by-slot). Every op must come with a block or be named in
// exact_overrides.
SymbolicGraph build_graph(const std::vector<OpSpec>& library,
                          const GraphConfig& cfg, const BlockMap& blocks,
                          const Grid& grid, Rng& rng);

// Identifies one weight: edge layers 0..depth-1, and layer == depth for the
// output weights (slot 0, prev = last-layer node index).
struct WeightCoord {
  std::int64_t layer = 0;
  std::int64_t slot = 0;
  std::int64_t prev = 0;
  bool operator==(const WeightCoord&) const = default;
};

// Live weights in the canonical order (layer, slot, prev ascending).
std::vector<WeightCoord> active_weights(const SymbolicGraph& g);
double get_weight(const SymbolicGraph& g, const WeightCoord& c);
void set_weight(SymbolicGraph& g, const WeightCoord& c, double v);
// Permanently zeroes the weight and marks it pruned.
void mask_weight(SymbolicGraph& g, const WeightCoord& c);

// Whole-graph forward on one tape: weight leaves carry gradients unless
// frozen. Node outputs are saturated to the projection range, matching what
// surrogate blocks produce by construction.
struct TapeWiring {
  ad::Var prediction;
  std::vector<std::pair<WeightCoord, ad::Var>> weights;  // live weights
  std::vector<std::vector<ad::Var>> node_outs;           // [layer][node]
};
TapeWiring graph_tape_forward(ad::Tape& t, const SymbolicGraph& g,
                              const std::vector<DiscretizedFunction>& fields,
                              bool frozen = false);

// Streamed evaluation: plain-array node cache, one block tape alive at a
// time, so 3-d graphs fit in memory.
struct NodeCache {
  std::vector<NdArray> input_values;        // layer-0 outputs
  std::vector<std::vector<NdArray>> slots;  // [layer][slot]
  std::vector<std::vector<NdArray>> outs;   // [layer][node]
  NdArray prediction;
};
NodeCache graph_eval(const SymbolicGraph& g,
                     const std::vector<DiscretizedFunction>& fields);

// d(objective)/d(live weight), in active_weights() order, from the cached
// forward pass and d(objective)/d(prediction). Same per-block streaming.
std::vector<double> graph_backprop(const SymbolicGraph& g,
                                   const NodeCache& cache,
                                   const NdArray& dpred);

// Spec-level forward: prediction plus per-node fields with undefined-point
// masks propagated through (union of undefined inputs; derivative nodes
// erode like the exact evaluators).
struct ForwardResult {
  DiscretizedFunction prediction;
  std::vector<std::vector<DiscretizedFunction>> nodes;  // [layer][node]
};
ForwardResult graph_forward(const SymbolicGraph& g,
                            const std::vector<DiscretizedFunction>& fields);

// Round trip: topology, weights, masks, and surrogate provenance. Blocks are
// reloaded from the store; exact-only graphs pass store = nullptr.
std::string graph_to_json(const SymbolicGraph& g);
SymbolicGraph graph_from_json(const std::string& text,
                              const SurrogateStore* store);

}  // namespace nomto
