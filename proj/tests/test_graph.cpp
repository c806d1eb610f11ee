#include <doctest.h>

#include <cmath>
#include <set>
#include <vector>

#include "nomto/funcgen.hpp"
#include "nomto/graph.hpp"

using namespace nomto;

namespace {

// Reference model, written independently of the graph code: recursive
// composition of the exact operator evaluators, every node clamped to the
// projection range. No caching, no tapes, plain loops.
DiscretizedFunction oracle_node(const SymbolicGraph& g, std::int64_t layer,
                                std::int64_t k,
                                const std::vector<DiscretizedFunction>& fields);

DiscretizedFunction oracle_slot(const SymbolicGraph& g, std::int64_t layer,
                                std::int64_t j,
                                const std::vector<DiscretizedFunction>& fields) {
  const EdgeMatrix& em = g.layers[layer];
  DiscretizedFunction s(g.grid);
  for (std::int64_t i = 0; i < em.prev; ++i) {
    if (!em.is_live(j, i)) continue;
    DiscretizedFunction prev =
        layer == 0 ? fields[i] : oracle_node(g, layer - 1, i, fields);
    for (std::int64_t p = 0; p < s.values.numel(); ++p)
      s.values.flat()[p] += em.at(j, i) * prev.values.flat()[p];
  }
  return s;
}

DiscretizedFunction oracle_node(const SymbolicGraph& g, std::int64_t layer,
                                std::int64_t k,
                                const std::vector<DiscretizedFunction>& fields) {
  const GraphNode& node = g.nodes[k];
  DiscretizedFunction r(g.grid);
  if (node.op.arity == 1) {
    r = eval_exact_unary(node.op, oracle_slot(g, layer, k, fields));
  } else {
    const std::int64_t b = k - g.sm.m;
    r = eval_exact_binary(node.op,
                          oracle_slot(g, layer, g.sm.m + 2 * b, fields),
                          oracle_slot(g, layer, g.sm.m + 2 * b + 1, fields));
  }
  for (auto& v : r.values.flat()) v = saturate_node(v);
  return r;
}

DiscretizedFunction oracle_predict(
    const SymbolicGraph& g, const std::vector<DiscretizedFunction>& fields) {
  DiscretizedFunction p(g.grid);
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(g.out_w.size());
       ++i) {
    if (!g.out_live[i]) continue;
    DiscretizedFunction node = oracle_node(g, g.depth - 1, i, fields);
    for (std::int64_t q = 0; q < p.values.numel(); ++q)
      p.values.flat()[q] += g.out_w[i] * node.values.flat()[q];
  }
  return p;
}

const Grid1D kGrid{-3.0, 3.0, 40};

std::vector<OpSpec> sr_ops() {
  return resolve_ops(library_preset("sr_benchmark").ops);
}

GraphConfig exact_cfg(const std::vector<OpSpec>& lib, std::int64_t depth) {
  GraphConfig cfg;
  cfg.depth = depth;
  for (const OpSpec& op : lib) cfg.exact_overrides.insert(op.name);
  return cfg;
}

DiscretizedFunction ramp_field(const Grid1D& grid, double lo, double hi) {
  DiscretizedFunction f{Grid{grid}};
  for (std::int64_t i = 0; i < f.values.numel(); ++i)
    f.values.flat()[i] = lo + (hi - lo) * double(i) / double(f.values.numel() - 1);
  return f;
}

}  // namespace

TEST_CASE("slot map splits a library into unary and binary nodes") {
  SlotMap sm = make_slot_map(sr_ops());
  CHECK(sm.m == 7);
  CHECK(sm.n == 2);
  CHECK(sm.slots() == 11);
  CHECK(sm.width() == 9);

  SlotMap heat = make_slot_map(resolve_ops(library_preset("heat").ops));
  CHECK(heat.m == 2);
  CHECK(heat.n == 0);
  CHECK(heat.slots() == 2);

  CHECK_THROWS_AS(make_slot_map({}), ConfigError);
}

TEST_CASE("slot_target maps slots to node inputs") {
  SlotMap sm{7, 2};
  for (std::int64_t j = 0; j < 7; ++j) {
    auto [node, pos] = slot_target(sm, j);
    CHECK(node == j);
    CHECK(pos == 0);
  }
  CHECK(slot_target(sm, 7) == std::pair<std::int64_t, int>{7, 0});
  CHECK(slot_target(sm, 8) == std::pair<std::int64_t, int>{7, 1});
  CHECK(slot_target(sm, 9) == std::pair<std::int64_t, int>{8, 0});
  CHECK(slot_target(sm, 10) == std::pair<std::int64_t, int>{8, 1});
  CHECK_THROWS_AS(slot_target(sm, 11), ConfigError);
  CHECK_THROWS_AS(slot_target(sm, -1), ConfigError);
}

TEST_CASE("build_graph wires the documented weight counts") {
  Rng rng(7);
  SymbolicGraph g =
      build_graph(sr_ops(), exact_cfg(sr_ops(), 2), {}, Grid{kGrid}, rng);
  // 11 slots * 1 input + 11 * 9 + 9 output weights
  CHECK(g.total_weights() == 119);
  CHECK(g.active_count() == 119);
  CHECK(active_weights(g).size() == 119);

  auto heat_lib = resolve_ops(library_preset("heat").ops);
  Rng rng2(7);
  SymbolicGraph h = build_graph(heat_lib, exact_cfg(heat_lib, 2), {},
                                Grid{Grid3D{8, 8, 4, 2.0, 2.0, 0.1}}, rng2);
  CHECK(h.total_weights() == 8);
}

TEST_CASE("build_graph validates inputs and is deterministic") {
  Rng rng(3);
  CHECK_THROWS_AS(
      build_graph(sr_ops(), exact_cfg(sr_ops(), 0), {}, Grid{kGrid}, rng),
      ConfigError);

  GraphConfig no_blocks;  // nothing exact, no surrogates supplied
  no_blocks.depth = 2;
  CHECK_THROWS_AS(build_graph(sr_ops(), no_blocks, {}, Grid{kGrid}, rng),
                  ConfigError);

  Rng a(11), b(11);
  SymbolicGraph ga =
      build_graph(sr_ops(), exact_cfg(sr_ops(), 2), {}, Grid{kGrid}, a);
  SymbolicGraph gb =
      build_graph(sr_ops(), exact_cfg(sr_ops(), 2), {}, Grid{kGrid}, b);
  for (const WeightCoord& c : active_weights(ga))
    CHECK(get_weight(ga, c) == get_weight(gb, c));

  // draws look like the intended scale, not all equal and inside a few sigma
  double mx = 0.0;
  std::set<double> distinct;
  for (const WeightCoord& c : active_weights(ga)) {
    mx = std::max(mx, std::abs(get_weight(ga, c)));
    distinct.insert(get_weight(ga, c));
  }
  CHECK(distinct.size() > 100);
  CHECK(mx < 0.6);
  CHECK(mx > 0.05);
}

TEST_CASE("hand-wired weights reproduce x^2 + x") {
  auto lib = sr_ops();
  Rng rng(1);
  SymbolicGraph g =
      build_graph(lib, exact_cfg(lib, 1), {}, Grid{kGrid}, rng);
  for (const WeightCoord& c : active_weights(g)) set_weight(g, c, 0.0);
  // node order: id const square sin cos ln sqrt | mul div
  set_weight(g, {0, 0, 0}, 1.0);  // id gets x
  set_weight(g, {0, 2, 0}, 1.0);  // square gets x
  set_weight(g, {1, 0, 0}, 1.0);  // out_w[id]
  set_weight(g, {1, 0, 2}, 1.0);  // out_w[square]

  DiscretizedFunction x = ramp_field(kGrid, -3.0, 3.0);
  ForwardResult r = graph_forward(g, {x});
  for (std::int64_t i = 0; i < x.values.numel(); ++i) {
    const double xi = x.values.flat()[i];
    CHECK(r.prediction.values.flat()[i] ==
          doctest::Approx(xi * xi + xi).epsilon(1e-9));
  }
  CHECK(r.prediction.defined.all_true());
}

TEST_CASE("random exact graphs match the recursive oracle at depths 1 to 3") {
  auto lib = sr_ops();
  Mixture1DParams mix;
  std::int64_t checked = 0;
  for (std::int64_t depth = 1; depth <= 3; ++depth) {
    for (std::uint64_t seed = 0; seed < 12; ++seed) {
      Rng rng(900 + 100 * depth + seed);
      SymbolicGraph g =
          build_graph(lib, exact_cfg(lib, depth), {}, Grid{kGrid}, rng);
      // knock out a third of the weights to exercise masking
      auto coords = active_weights(g);
      for (std::size_t i = 0; i < coords.size(); i += 3)
        mask_weight(g, coords[i]);

      DiscretizedFunction x = sample_mixture_1d(kGrid, mix, rng);
      DiscretizedFunction want = oracle_predict(g, {x});

      NodeCache cache = graph_eval(g, {x});
      ForwardResult full = graph_forward(g, {x});
      ad::Tape t;
      TapeWiring w = graph_tape_forward(t, g, {x});
      const ad::Vec& tv = t.val(w.prediction);

      for (std::int64_t p = 0; p < want.values.numel(); ++p) {
        const double ref = want.values.flat()[p];
        const double tol = 1e-9 * std::max(1.0, std::abs(ref));
        CHECK(std::abs(cache.prediction.flat()[p] - ref) <= tol);
        CHECK(std::abs(full.prediction.values.flat()[p] - ref) <= tol);
        CHECK(std::abs(tv[p] - ref) <= tol);
        // the two production paths are built from the same kernels
        CHECK(cache.prediction.flat()[p] == tv[p]);
      }
      ++checked;
    }
  }
  CHECK(checked == 36);
}

TEST_CASE("masked weights cannot influence the forward pass") {
  auto lib = sr_ops();
  Rng rng(42);
  SymbolicGraph g = build_graph(lib, exact_cfg(lib, 2), {}, Grid{kGrid}, rng);
  DiscretizedFunction x = ramp_field(kGrid, -2.0, 2.5);

  auto coords = active_weights(g);
  std::vector<WeightCoord> victims = {coords[5], coords[40], coords[115]};
  for (const WeightCoord& c : victims) mask_weight(g, c);
  CHECK(g.active_count() == 116);
  NodeCache base = graph_eval(g, {x});

  // writing through a masked coordinate must leave the output untouched
  for (const WeightCoord& c : victims) set_weight(g, c, 123.0);
  NodeCache after = graph_eval(g, {x});
  for (std::int64_t p = 0; p < base.prediction.numel(); ++p)
    CHECK(base.prediction.flat()[p] == after.prediction.flat()[p]);

  // and masked coordinates drop out of the active list
  for (const WeightCoord& c : active_weights(g)) {
    for (const WeightCoord& v : victims) CHECK(!(c == v));
  }
}

TEST_CASE("graph_backprop matches the whole-graph tape") {
  auto lib = sr_ops();
  Rng rng(19);
  SymbolicGraph g = build_graph(lib, exact_cfg(lib, 2), {}, Grid{kGrid}, rng);
  auto coords = active_weights(g);
  for (std::size_t i = 0; i < coords.size(); i += 5) mask_weight(g, coords[i]);

  Mixture1DParams mix;
  DiscretizedFunction x = sample_mixture_1d(kGrid, mix, rng);
  NdArray seed(grid_shape(Grid{kGrid}));
  for (auto& v : seed.flat()) v = rng.normal();

  NodeCache cache = graph_eval(g, {x});
  std::vector<double> got = graph_backprop(g, cache, seed);

  ad::Tape t;
  TapeWiring w = graph_tape_forward(t, g, {x});
  t.backward(w.prediction, seed.data());
  REQUIRE(w.weights.size() == got.size());
  for (std::size_t i = 0; i < got.size(); ++i) {
    const double ref = t.grad(w.weights[i].second)[0];
    CHECK(std::abs(got[i] - ref) <=
          1e-10 * std::max(1.0, std::abs(ref)));
  }
}

TEST_CASE("weight gradients agree with central differences") {
  auto lib = sr_ops();
  Rng rng(23);
  SymbolicGraph g = build_graph(lib, exact_cfg(lib, 2), {}, Grid{kGrid}, rng);

  Mixture1DParams mix;
  DiscretizedFunction x = sample_mixture_1d(kGrid, mix, rng);
  NdArray seed(grid_shape(Grid{kGrid}));
  for (auto& v : seed.flat()) v = rng.normal();

  auto objective = [&](const SymbolicGraph& gg) {
    NodeCache c = graph_eval(gg, {x});
    double s = 0.0;
    for (std::int64_t p = 0; p < c.prediction.numel(); ++p)
      s += seed.flat()[p] * c.prediction.flat()[p];
    return s;
  };

  NodeCache cache = graph_eval(g, {x});
  std::vector<double> grads = graph_backprop(g, cache, seed);
  auto coords = active_weights(g);
  REQUIRE(coords.size() == grads.size());

  const double h = 1e-5;
  std::int64_t tested = 0;
  for (std::size_t i = 0; i < coords.size(); ++i) {
    SymbolicGraph gp = g;
    const double w0 = get_weight(g, coords[i]);
    set_weight(gp, coords[i], w0 + h);
    const double up = objective(gp);
    set_weight(gp, coords[i], w0 - h);
    const double dn = objective(gp);
    const double fd = (up - dn) / (2 * h);
    const double scale = std::max({1e-6, std::abs(fd), std::abs(grads[i])});
    CHECK(std::abs(fd - grads[i]) / scale <= 1e-4);
    ++tested;
  }
  CHECK(tested >= 100);
}

TEST_CASE("surrogate-backed nodes run through both forward paths") {
  // tiny untrained nets stand in for trained blocks; shapes and wiring are
  // what matters here
  NetSpec spec;
  spec.layers = 1;
  spec.width = 4;
  spec.modes = 3;
  spec.head_hidden = 8;

  auto lib = resolve_ops({"id", "square", "mul"});
  BlockMap blocks;
  for (const OpSpec& op : lib) {
    NetSpec s = spec;
    s.arity = op.arity;
    OperatorNet net(s, Grid{kGrid});
    Params params = net.init_params(17 + op.arity);
    blocks[op.name] =
        std::make_shared<SurrogateBlock>(op, net, std::move(params));
  }

  GraphConfig cfg;
  cfg.depth = 2;
  Rng rng(5);
  SymbolicGraph g = build_graph(lib, cfg, blocks, Grid{kGrid}, rng);
  CHECK(g.total_weights() == 4 * 1 + 4 * 3 + 3);

  DiscretizedFunction x = ramp_field(kGrid, -1.0, 1.0);
  NodeCache cache = graph_eval(g, {x});
  ad::Tape t;
  TapeWiring w = graph_tape_forward(t, g, {x});
  const ad::Vec& tv = t.val(w.prediction);
  for (std::int64_t p = 0; p < cache.prediction.numel(); ++p)
    CHECK(cache.prediction.flat()[p] == tv[p]);

  NdArray seed(grid_shape(Grid{kGrid}), 1.0);
  std::vector<double> got = graph_backprop(g, cache, seed);
  t.backward(w.prediction, seed.data());
  for (std::size_t i = 0; i < got.size(); ++i) {
    const double ref = t.grad(w.weights[i].second)[0];
    CHECK(std::abs(got[i] - ref) <= 1e-10 * std::max(1.0, std::abs(ref)));
  }

  // block grid must match the graph grid
  Rng rng2(5);
  CHECK_THROWS_AS(
      build_graph(lib, cfg, blocks, Grid{Grid1D{-3.0, 3.0, 64}}, rng2),
      ConfigError);
}

TEST_CASE("derivative nodes erode masks like the exact evaluator") {
  auto lib = resolve_ops(library_preset("heat").ops);
  Rng rng(31);
  Grid3D g3{10, 10, 6, 2.0, 2.0, 0.1};
  SymbolicGraph g =
      build_graph(lib, exact_cfg(lib, 2), {}, Grid{g3}, rng);

  DiscretizedFunction u{Grid{g3}};
  for (std::int64_t i = 0; i < u.values.numel(); ++i)
    u.values.flat()[i] = std::sin(0.1 * double(i));
  u.defined[u.defined.numel() / 2] = 0;  // one bad point

  ForwardResult r = graph_forward(g, {u});
  CHECK(!r.prediction.defined.all_true());

  // compare against the exact evaluator's erosion of the same point
  DiscretizedFunction probe{Grid{g3}};
  probe.defined = u.defined;
  DiscretizedFunction step1 =
      eval_exact_unary(op_by_name("ddx"), probe);  // layer 1 ddx
  DiscretizedFunction step2 = eval_exact_unary(op_by_name("ddy"), probe);
  // prediction mask folds both second-layer nodes, each fed by both
  // first-layer nodes
  DiscretizedFunction both{Grid{g3}};
  both.defined = step1.defined;
  for (std::int64_t i = 0; i < both.defined.numel(); ++i)
    both.defined[i] = step1.defined[i] && step2.defined[i];
  DiscretizedFunction xx = eval_exact_unary(op_by_name("ddx"), both);
  DiscretizedFunction yy = eval_exact_unary(op_by_name("ddy"), both);
  for (std::int64_t i = 0; i < r.prediction.defined.numel(); ++i)
    CHECK(r.prediction.defined[i] == (xx.defined[i] && yy.defined[i]));
}

TEST_CASE("graphs serialize and reload bit-exactly") {
  auto lib = sr_ops();
  Rng rng(77);
  GraphConfig cfg = exact_cfg(lib, 2);
  cfg.inputs = {"x"};
  SymbolicGraph g = build_graph(lib, cfg, {}, Grid{kGrid}, rng);
  auto coords = active_weights(g);
  mask_weight(g, coords[10]);
  mask_weight(g, coords[60]);

  const std::string text = graph_to_json(g);
  SymbolicGraph back = graph_from_json(text, nullptr);

  CHECK(back.depth == g.depth);
  CHECK(back.sm == g.sm);
  CHECK(back.inputs == g.inputs);
  CHECK(back.library == g.library);
  CHECK(back.active_count() == g.active_count());
  for (std::int64_t l = 0; l < g.depth; ++l) {
    CHECK(back.layers[l].w == g.layers[l].w);
    CHECK(back.layers[l].live == g.layers[l].live);
  }
  CHECK(back.out_w == g.out_w);
  CHECK(back.out_live == g.out_live);

  DiscretizedFunction x = ramp_field(kGrid, -2.0, 2.0);
  NodeCache a = graph_eval(g, {x});
  NodeCache b = graph_eval(back, {x});
  for (std::int64_t p = 0; p < a.prediction.numel(); ++p)
    CHECK(a.prediction.flat()[p] == b.prediction.flat()[p]);

  CHECK_THROWS_AS(graph_from_json("{\"depth\": 2}", nullptr), IoError);
  CHECK_THROWS_AS(graph_from_json("not json", nullptr), IoError);
}
