#include "nomto/graph.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <nlohmann/json.hpp>

namespace nomto {

using ad::Tape;
using ad::Var;

SlotMap make_slot_map(const std::vector<OpSpec>& library) {
  SlotMap sm;
  for (const OpSpec& op : library) {
    if (op.arity == 1)
      ++sm.m;
    else
      ++sm.n;
  }
  if (sm.width() == 0) throw ConfigError("graph: empty library");
  return sm;
}

std::pair<std::int64_t, int> slot_target(const SlotMap& sm, std::int64_t j) {
  if (j < 0 || j >= sm.slots())
    throw ConfigError("slot_target: slot index out of range");
  if (j < sm.m) return {j, 0};
  const std::int64_t b = j - sm.m;
  return {sm.m + b / 2, static_cast<int>(b % 2)};
}

std::int64_t SymbolicGraph::total_weights() const {
  std::int64_t n = static_cast<std::int64_t>(out_w.size());
  for (const EdgeMatrix& em : layers) n += em.slots * em.prev;
  return n;
}

std::int64_t SymbolicGraph::active_count() const {
  std::int64_t n = std::count(out_live.begin(), out_live.end(), 1);
  for (const EdgeMatrix& em : layers)
    n += std::count(em.live.begin(), em.live.end(), 1);
  return n;
}

SymbolicGraph build_graph(const std::vector<OpSpec>& library,
                          const GraphConfig& cfg, const BlockMap& blocks,
                          const Grid& grid, Rng& rng) {
  if (cfg.depth < 1) throw ConfigError("graph: depth must be at least 1");
  if (cfg.inputs.empty()) throw ConfigError("graph: needs an input variable");

  SymbolicGraph g;
  g.grid = grid;
  g.inputs = cfg.inputs;
  g.sm = make_slot_map(library);
  g.depth = cfg.depth;
  g.variant = cfg.variant;
  g.surrogate_seed = cfg.surrogate_seed;

  auto place = [&](const OpSpec& op) {
    g.library.push_back(op.name);
    GraphNode node;
    node.op = op;
    if (!cfg.exact_overrides.count(op.name)) {
      auto it = blocks.find(op.name);
      if (it == blocks.end() || !it->second)
        throw ConfigError("graph: no surrogate for op " + op.name);
      if (!grid_equal(it->second->net().grid(), grid))
        throw ConfigError("graph: surrogate grid mismatch for op " + op.name);
      node.block = it->second;
    }
    return node;
  };
  g.library.reserve(library.size());
  for (const OpSpec& op : library)  // unary nodes first, then binary
    if (op.arity == 1) g.nodes.push_back(place(op));
  for (const OpSpec& op : library)
    if (op.arity == 2) g.nodes.push_back(place(op));

  for (const OpSpec& op : library)
    if (op.is_derivative && !g.plans.count(op.axis))
      g.plans[op.axis] = std::make_shared<const StencilPlan>(
          make_stencil_plan(grid, op.axis));

  std::int64_t prev = static_cast<std::int64_t>(cfg.inputs.size());
  for (std::int64_t l = 0; l < cfg.depth; ++l) {
    EdgeMatrix em;
    em.slots = g.sm.slots();
    em.prev = prev;
    em.w.resize(em.slots * em.prev);
    em.live.assign(em.w.size(), 1);
    for (double& w : em.w) w = rng.normal(0.0, 0.1);
    g.layers.push_back(std::move(em));
    prev = g.sm.width();
  }
  g.out_w.resize(g.sm.width());
  g.out_live.assign(g.out_w.size(), 1);
  for (double& w : g.out_w) w = rng.normal(0.0, 0.1);
  return g;
}

std::vector<WeightCoord> active_weights(const SymbolicGraph& g) {
  std::vector<WeightCoord> coords;
  for (std::int64_t l = 0; l < g.depth; ++l) {
    const EdgeMatrix& em = g.layers[l];
    for (std::int64_t j = 0; j < em.slots; ++j)
      for (std::int64_t i = 0; i < em.prev; ++i)
        if (em.is_live(j, i)) coords.push_back({l, j, i});
  }
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(g.out_w.size()); ++i)
    if (g.out_live[i]) coords.push_back({g.depth, 0, i});
  return coords;
}

double get_weight(const SymbolicGraph& g, const WeightCoord& c) {
  if (c.layer == g.depth) return g.out_w.at(c.prev);
  return g.layers.at(c.layer).at(c.slot, c.prev);
}

void set_weight(SymbolicGraph& g, const WeightCoord& c, double v) {
  if (c.layer == g.depth)
    g.out_w.at(c.prev) = v;
  else
    g.layers.at(c.layer).at(c.slot, c.prev) = v;
}

void mask_weight(SymbolicGraph& g, const WeightCoord& c) {
  if (c.layer == g.depth) {
    g.out_w.at(c.prev) = 0.0;
    g.out_live.at(c.prev) = 0;
  } else {
    EdgeMatrix& em = g.layers.at(c.layer);
    em.at(c.slot, c.prev) = 0.0;
    em.live.at(c.slot * em.prev + c.prev) = 0;
  }
}

namespace {

void check_fields(const SymbolicGraph& g,
                  const std::vector<DiscretizedFunction>& fields) {
  if (fields.size() != g.inputs.size())
    throw ConfigError("graph forward: wrong input count");
  for (const auto& f : fields)
    if (!grid_equal(f.grid, g.grid))
      throw ConfigError("graph forward: input grid mismatch");
}

// Applies one node to its slot values on the given tape. Exact nodes clamp
// to the projection range so they and surrogate blocks share one output
// contract.
Var node_tape_out(Tape& t, const SymbolicGraph& g, const GraphNode& node,
                  const std::vector<Var>& ins) {
  if (node.block) return node.block->tape_forward(t, ins);
  const ProjectionSpec proj;
  Var raw = ins[0];
  if (node.op.arity == 1) {
    if (node.op.is_derivative) {
      const StencilPlan* plan = g.plans.at(node.op.axis).get();
      for (int k = 0; k < node.op.derivative_order; ++k)
        raw = t.stencil_derivative(raw, plan);
    } else {
      raw = t.pointwise_unary(raw, node.op.kind, proj.clip_limit);
    }
  } else {
    raw = t.pointwise_binary(ins[0], ins[1], node.op.kind, proj.clip_limit);
  }
  return t.saturate(raw, proj.clip_limit);
}

std::vector<Var> node_inputs(const SymbolicGraph& g, std::int64_t k,
                             const std::vector<Var>& slot_vars) {
  if (k < g.sm.m) return {slot_vars[k]};
  const std::int64_t b = k - g.sm.m;
  return {slot_vars[g.sm.m + 2 * b], slot_vars[g.sm.m + 2 * b + 1]};
}

}  // namespace

TapeWiring graph_tape_forward(Tape& t, const SymbolicGraph& g,
                              const std::vector<DiscretizedFunction>& fields,
                              bool frozen) {
  check_fields(g, fields);
  const std::int64_t np = shape_numel(grid_shape(g.grid));
  const std::vector<double> zeros(np, 0.0);
  const std::vector<std::int64_t> fshape = grid_shape(g.grid);

  TapeWiring wiring;
  std::vector<Var> prev;
  prev.reserve(fields.size());
  for (const auto& f : fields)
    prev.push_back(t.leaf(fshape, f.values.data(), false));

  for (std::int64_t l = 0; l < g.depth; ++l) {
    const EdgeMatrix& em = g.layers[l];
    std::vector<Var> slot_vars(em.slots);
    for (std::int64_t j = 0; j < em.slots; ++j) {
      std::vector<Var> xs, ws;
      for (std::int64_t i = 0; i < em.prev; ++i) {
        if (!em.is_live(j, i)) continue;
        xs.push_back(prev[i]);
        Var wv = t.leaf_scalar(em.at(j, i), !frozen);
        ws.push_back(wv);
        wiring.weights.push_back({{l, j, i}, wv});
      }
      slot_vars[j] = xs.empty() ? t.leaf(fshape, zeros.data(), false)
                                : t.weighted_sum(xs, ws);
    }
    std::vector<Var> outs(g.sm.width());
    for (std::int64_t k = 0; k < g.sm.width(); ++k)
      outs[k] = node_tape_out(t, g, g.nodes[k], node_inputs(g, k, slot_vars));
    wiring.node_outs.push_back(outs);
    prev = std::move(outs);
  }

  std::vector<Var> xs, ws;
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(g.out_w.size());
       ++i) {
    if (!g.out_live[i]) continue;
    xs.push_back(prev[i]);
    Var wv = t.leaf_scalar(g.out_w[i], !frozen);
    ws.push_back(wv);
    wiring.weights.push_back({{g.depth, 0, i}, wv});
  }
  wiring.prediction = xs.empty() ? t.leaf(fshape, zeros.data(), false)
                                 : t.weighted_sum(xs, ws);
  return wiring;
}

namespace {

// Accumulation mirrors Tape::weighted_sum exactly (ascending index order) so
// the streamed and whole-tape paths agree bitwise.
NdArray slot_sum(const EdgeMatrix& em, std::int64_t j,
                 const std::vector<const NdArray*>& prev,
                 const std::vector<std::int64_t>& fshape) {
  NdArray s(fshape);
  Eigen::Map<Eigen::ArrayXd> acc(s.data(), s.numel());
  for (std::int64_t i = 0; i < em.prev; ++i) {
    if (!em.is_live(j, i)) continue;
    acc += em.at(j, i) *
           Eigen::Map<const Eigen::ArrayXd>(prev[i]->data(), s.numel());
  }
  return s;
}

NdArray eval_node(const SymbolicGraph& g, std::int64_t k,
                  const std::vector<NdArray>& slots) {
  Tape t;
  const std::vector<std::int64_t> fshape = grid_shape(g.grid);
  std::vector<Var> ins;
  if (k < g.sm.m) {
    ins.push_back(t.leaf(fshape, slots[k].data(), false));
  } else {
    const std::int64_t b = k - g.sm.m;
    ins.push_back(t.leaf(fshape, slots[g.sm.m + 2 * b].data(), false));
    ins.push_back(t.leaf(fshape, slots[g.sm.m + 2 * b + 1].data(), false));
  }
  Var out = node_tape_out(t, g, g.nodes[k], ins);
  NdArray r(fshape);
  const ad::Vec& v = t.val(out);
  std::copy(v.data(), v.data() + v.size(), r.data());
  return r;
}

}  // namespace

NodeCache graph_eval(const SymbolicGraph& g,
                     const std::vector<DiscretizedFunction>& fields) {
  check_fields(g, fields);
  const std::vector<std::int64_t> fshape = grid_shape(g.grid);
  NodeCache cache;
  for (const auto& f : fields) cache.input_values.push_back(f.values);

  std::vector<const NdArray*> prev;
  for (const NdArray& a : cache.input_values) prev.push_back(&a);

  for (std::int64_t l = 0; l < g.depth; ++l) {
    const EdgeMatrix& em = g.layers[l];
    std::vector<NdArray> slots(em.slots);
    for (std::int64_t j = 0; j < em.slots; ++j)
      slots[j] = slot_sum(em, j, prev, fshape);
    std::vector<NdArray> outs(g.sm.width());
    for (std::int64_t k = 0; k < g.sm.width(); ++k)
      outs[k] = eval_node(g, k, slots);
    cache.slots.push_back(std::move(slots));
    cache.outs.push_back(std::move(outs));
    prev.clear();
    for (const NdArray& a : cache.outs.back()) prev.push_back(&a);
  }

  NdArray pred(fshape);
  Eigen::Map<Eigen::ArrayXd> acc(pred.data(), pred.numel());
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(g.out_w.size()); ++i)
    if (g.out_live[i])
      acc += g.out_w[i] * Eigen::Map<const Eigen::ArrayXd>(prev[i]->data(),
                                                           pred.numel());
  cache.prediction = std::move(pred);
  return cache;
}

std::vector<double> graph_backprop(const SymbolicGraph& g,
                                   const NodeCache& cache,
                                   const NdArray& dpred) {
  const std::vector<std::int64_t> fshape = grid_shape(g.grid);
  const std::int64_t np = shape_numel(fshape);
  if (dpred.numel() != np)
    throw ConfigError("graph backprop: seed shape mismatch");
  if (static_cast<std::int64_t>(cache.outs.size()) != g.depth)
    throw ConfigError("graph backprop: cache does not match graph");

  // Positions of live weights in the canonical active_weights() order.
  std::vector<std::vector<std::int64_t>> pos(g.depth + 1);
  std::int64_t next = 0;
  for (std::int64_t l = 0; l < g.depth; ++l) {
    const EdgeMatrix& em = g.layers[l];
    pos[l].assign(em.w.size(), -1);
    for (std::int64_t j = 0; j < em.slots; ++j)
      for (std::int64_t i = 0; i < em.prev; ++i)
        if (em.is_live(j, i)) pos[l][j * em.prev + i] = next++;
  }
  pos[g.depth].assign(g.out_w.size(), -1);
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(g.out_w.size()); ++i)
    if (g.out_live[i]) pos[g.depth][i] = next++;
  std::vector<double> grads(next, 0.0);

  auto dot = [np](const NdArray& a, const NdArray& b) {
    return Eigen::Map<const Eigen::ArrayXd>(a.data(), np)
        .cwiseProduct(Eigen::Map<const Eigen::ArrayXd>(b.data(), np))
        .sum();
  };

  std::vector<NdArray> d_out(g.sm.width());
  for (auto& a : d_out) a = NdArray(fshape);
  const auto& last = cache.outs[g.depth - 1];
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(g.out_w.size());
       ++i) {
    if (!g.out_live[i]) continue;
    grads[pos[g.depth][i]] = dot(dpred, last[i]);
    Eigen::Map<Eigen::ArrayXd>(d_out[i].data(), np) +=
        g.out_w[i] * Eigen::Map<const Eigen::ArrayXd>(dpred.data(), np);
  }

  for (std::int64_t l = g.depth - 1; l >= 0; --l) {
    const EdgeMatrix& em = g.layers[l];
    const std::int64_t nprev = em.prev;
    std::vector<NdArray> d_slot(em.slots);

    for (std::int64_t k = 0; k < g.sm.width(); ++k) {
      const bool dead =
          Eigen::Map<const Eigen::ArrayXd>(d_out[k].data(), np).cwiseAbs()
              .maxCoeff() == 0.0;
      std::vector<std::int64_t> sids;
      if (k < g.sm.m) {
        sids = {k};
      } else {
        const std::int64_t b = k - g.sm.m;
        sids = {g.sm.m + 2 * b, g.sm.m + 2 * b + 1};
      }
      if (dead) {
        for (std::int64_t s : sids) d_slot[s] = NdArray(fshape);
        continue;
      }
      Tape t;
      std::vector<Var> ins;
      for (std::int64_t s : sids)
        ins.push_back(t.leaf(fshape, cache.slots[l][s].data(), true));
      Var out = node_tape_out(t, g, g.nodes[k], ins);
      t.backward(out, d_out[k].data());
      for (std::size_t q = 0; q < sids.size(); ++q) {
        const ad::Vec gv = t.grad(ins[q]);
        NdArray a(fshape);
        std::copy(gv.data(), gv.data() + gv.size(), a.data());
        d_slot[sids[q]] = std::move(a);
      }
    }

    std::vector<NdArray> d_prev(nprev);
    for (auto& a : d_prev) a = NdArray(fshape);
    for (std::int64_t j = 0; j < em.slots; ++j) {
      for (std::int64_t i = 0; i < nprev; ++i) {
        if (!em.is_live(j, i)) continue;
        const NdArray& prev_out =
            l == 0 ? cache.input_values[i] : cache.outs[l - 1][i];
        grads[pos[l][j * nprev + i]] += dot(d_slot[j], prev_out);
        if (l > 0)
          Eigen::Map<Eigen::ArrayXd>(d_prev[i].data(), np) +=
              em.at(j, i) *
              Eigen::Map<const Eigen::ArrayXd>(d_slot[j].data(), np);
      }
    }
    d_out = std::move(d_prev);
  }
  return grads;
}

namespace {

Mask and_masks(const Mask& a, const Mask& b) {
  Mask out = a;
  for (std::int64_t i = 0; i < out.numel(); ++i)
    out[i] = out[i] && b[i] ? 1 : 0;
  return out;
}

}  // namespace

ForwardResult graph_forward(const SymbolicGraph& g,
                            const std::vector<DiscretizedFunction>& fields) {
  NodeCache cache = graph_eval(g, fields);
  const std::vector<std::int64_t> fshape = grid_shape(g.grid);

  std::vector<Mask> prev_masks;
  for (const auto& f : fields) prev_masks.push_back(f.defined);

  ForwardResult res;
  for (std::int64_t l = 0; l < g.depth; ++l) {
    const EdgeMatrix& em = g.layers[l];
    std::vector<Mask> slot_masks(em.slots, Mask(fshape, true));
    for (std::int64_t j = 0; j < em.slots; ++j)
      for (std::int64_t i = 0; i < em.prev; ++i)
        if (em.is_live(j, i))
          slot_masks[j] = and_masks(slot_masks[j], prev_masks[i]);

    std::vector<DiscretizedFunction> layer;
    std::vector<Mask> out_masks;
    for (std::int64_t k = 0; k < g.sm.width(); ++k) {
      Mask m(fshape, true);
      if (k < g.sm.m) {
        m = slot_masks[k];
      } else {
        const std::int64_t b = k - g.sm.m;
        m = and_masks(slot_masks[g.sm.m + 2 * b],
                      slot_masks[g.sm.m + 2 * b + 1]);
      }
      const GraphNode& node = g.nodes[k];
      if (!node.block && node.op.is_derivative && !m.all_true()) {
        DiscretizedFunction probe(g.grid);  // mask-only erosion pass
        probe.defined = m;
        m = numeric_derivative(probe, node.op.axis, node.op.derivative_order)
                .defined;
      }
      DiscretizedFunction f(g.grid, cache.outs[l][k]);
      f.defined = m;
      out_masks.push_back(std::move(m));
      layer.push_back(std::move(f));
    }
    res.nodes.push_back(std::move(layer));
    prev_masks = std::move(out_masks);
  }

  DiscretizedFunction pred(g.grid, cache.prediction);
  Mask pm(fshape, true);
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(g.out_w.size()); ++i)
    if (g.out_live[i]) pm = and_masks(pm, prev_masks[i]);
  pred.defined = std::move(pm);
  res.prediction = std::move(pred);
  return res;
}

std::string graph_to_json(const SymbolicGraph& g) {
  nlohmann::json j;
  j["grid"] = nlohmann::json::parse(grid_to_json(g.grid));
  j["inputs"] = g.inputs;
  j["library"] = g.library;
  j["depth"] = g.depth;
  j["variant"] = g.variant;
  j["surrogate_seed"] = g.surrogate_seed;
  nlohmann::json exact = nlohmann::json::array();
  for (const GraphNode& n : g.nodes)
    if (!n.block) exact.push_back(n.op.name);
  j["exact"] = exact;
  nlohmann::json layers = nlohmann::json::array();
  for (const EdgeMatrix& em : g.layers) {
    nlohmann::json lj;
    lj["slots"] = em.slots;
    lj["prev"] = em.prev;
    lj["w"] = em.w;
    lj["live"] = em.live;
    layers.push_back(std::move(lj));
  }
  j["layers"] = std::move(layers);
  j["out_w"] = g.out_w;
  j["out_live"] = g.out_live;
  return j.dump(2);
}

SymbolicGraph graph_from_json(const std::string& text,
                              const SurrogateStore* store) {
  nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
  if (!j.is_object()) throw IoError("graph json: not an object");
  try {
    const Grid grid = grid_from_json(j.at("grid").dump());
    GraphConfig cfg;
    cfg.depth = j.at("depth").get<std::int64_t>();
    cfg.inputs = j.at("inputs").get<std::vector<std::string>>();
    cfg.variant = j.at("variant").get<std::string>();
    cfg.surrogate_seed = j.at("surrogate_seed").get<std::uint64_t>();
    for (const auto& name : j.at("exact"))
      cfg.exact_overrides.insert(name.get<std::string>());

    // Node order in g.library is already unary-first; feeding it back through
    // build_graph keeps that order.
    std::vector<OpSpec> library;
    for (const auto& name : j.at("library").get<std::vector<std::string>>())
      library.push_back(op_by_name(name));

    BlockMap blocks;
    for (const OpSpec& op : library) {
      if (cfg.exact_overrides.count(op.name) || blocks.count(op.name))
        continue;
      if (!store)
        throw ConfigError("graph json: op " + op.name +
                          " needs a surrogate store to reload");
      blocks[op.name] = std::make_shared<SurrogateBlock>(
          store->load(op.name, cfg.variant, grid, cfg.surrogate_seed));
    }

    Rng rng(0);  // weights are overwritten below
    SymbolicGraph g = build_graph(library, cfg, blocks, grid, rng);

    const auto& layers = j.at("layers");
    if (layers.size() != static_cast<std::size_t>(g.depth))
      throw IoError("graph json: layer count mismatch");
    for (std::int64_t l = 0; l < g.depth; ++l) {
      EdgeMatrix& em = g.layers[l];
      const auto& lj = layers[l];
      if (lj.at("slots").get<std::int64_t>() != em.slots ||
          lj.at("prev").get<std::int64_t>() != em.prev)
        throw IoError("graph json: edge matrix shape mismatch");
      em.w = lj.at("w").get<std::vector<double>>();
      em.live = lj.at("live").get<std::vector<std::uint8_t>>();
      if (em.w.size() != static_cast<std::size_t>(em.slots * em.prev) ||
          em.live.size() != em.w.size())
        throw IoError("graph json: edge matrix size mismatch");
    }
    g.out_w = j.at("out_w").get<std::vector<double>>();
    g.out_live = j.at("out_live").get<std::vector<std::uint8_t>>();
    if (g.out_w.size() != static_cast<std::size_t>(g.sm.width()) ||
        g.out_live.size() != g.out_w.size())
      throw IoError("graph json: output weight size mismatch");
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("graph json: ") + e.what());
  }
}

}  // namespace nomto
