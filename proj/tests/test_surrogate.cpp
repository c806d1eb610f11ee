#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <limits>

#include "nomto/surrogate.hpp"

using namespace nomto;
using ad::Tape;
using ad::Var;

namespace {

// Small/fast training setup shared by the fitting tests.
struct TinyFit {
  Grid grid = make_grid_1d(-10.0, 10.0, 24);
  NetSpec spec;
  TinyFit() {
    spec.arity = 1;
    spec.layers = 2;
    spec.width = 8;
    spec.modes = 4;
    spec.head_hidden = 8;
  }
};

}  // namespace

TEST_CASE("training sets are deterministic with projected targets") {
  Grid grid = make_grid_1d(-10.0, 10.0, 30);
  const OpSpec& sin_op = op_by_name("sin");

  Rng r1(5), r2(5), r3(6);
  OpDataset a = build_training_set(sin_op, 7, grid, r1);
  OpDataset b = build_training_set(sin_op, 7, grid, r2);
  OpDataset c = build_training_set(sin_op, 7, grid, r3);
  CHECK(a.nsamples == 7);
  CHECK(a.npoints == 30);
  CHECK(a.arity == 1);
  CHECK(a.inputs == b.inputs);
  CHECK(a.targets == b.targets);
  CHECK(a.inputs != c.inputs);
  bool raw_seen = false;  // raw mixture inputs routinely exceed the tanh range
  for (double v : a.inputs) {
    CHECK(std::isfinite(v));
    if (std::abs(v) > 1.0) raw_seen = true;
  }
  CHECK(raw_seen);
  for (double v : a.targets) CHECK(std::abs(v) <= 1.0);

  const OpSpec& mul_op = op_by_name("mul");
  Rng r4(5);
  OpDataset m = build_training_set(mul_op, 3, grid, r4);
  CHECK(m.arity == 2);
  CHECK(static_cast<std::int64_t>(m.inputs.size()) == 3 * 2 * 30);

  Rng r5(5);
  CHECK_THROWS_AS(build_training_set(sin_op, 0, grid, r5), ConfigError);
}

TEST_CASE("identity targets are the projected inputs") {
  Grid grid = make_grid_1d(-10.0, 10.0, 30);
  Rng rng(9);
  OpDataset d = build_training_set(op_by_name("id"), 4, grid, rng);
  ProjectionSpec proj;
  REQUIRE(d.inputs.size() == d.targets.size());
  for (std::size_t i = 0; i < d.inputs.size(); ++i)
    CHECK(d.targets[i] == proj.project(d.inputs[i]));
}

TEST_CASE("surrogate fit reaches low held-out error on the identity op") {
  TinyFit f;
  Rng rng(31);
  OpDataset data = build_training_set(op_by_name("id"), 80, f.grid, rng);
  OperatorNet net(f.spec, f.grid);
  OptSettings opt;
  opt.batch = 16;
  opt.max_epochs = 150;
  opt.patience = 15;
  auto [params, rep] = train_surrogate(net, data, opt, 7);

  CHECK(rep.train_samples == 72);
  CHECK(rep.holdout_samples == 8);
  CHECK(rep.epochs_run >= 1);
  CHECK(static_cast<std::int64_t>(rep.holdout_error.size()) == rep.epochs_run);
  CHECK(rep.best_holdout < 0.1);
  CHECK(rep.wall_seconds > 0.0);

  auto [params2, rep2] = train_surrogate(net, data, opt, 7);
  CHECK(params_equal(params, params2));
  CHECK(rep2.best_holdout == rep.best_holdout);
}

TEST_CASE("micro batched steps match whole batch steps") {
  TinyFit f;
  Rng rng(33);
  OpDataset data = build_training_set(op_by_name("id"), 24, f.grid, rng);
  OperatorNet net(f.spec, f.grid);
  OptSettings whole;
  whole.batch = 8;
  whole.max_epochs = 3;
  OptSettings micro = whole;
  micro.micro_batch = 3;  // does not divide the batch
  auto [pw, rw] = train_surrogate(net, data, whole, 11);
  auto [pm, rm] = train_surrogate(net, data, micro, 11);
  for (std::size_t i = 0; i < pw.size(); ++i)
    for (std::size_t j = 0; j < pw[i].value.size(); ++j)
      CHECK(pw[i].value[j] == doctest::Approx(pm[i].value[j]).epsilon(1e-9));
  CHECK(rw.train_loss.back() ==
        doctest::Approx(rm.train_loss.back()).epsilon(1e-9));
}

TEST_CASE("training rejects bad inputs and diverging runs") {
  TinyFit f;
  OperatorNet net(f.spec, f.grid);
  OpDataset empty;
  empty.grid = f.grid;
  empty.arity = 1;
  empty.npoints = 24;
  CHECK_THROWS_AS(train_surrogate(net, empty, OptSettings{}, 1), ConfigError);

  Rng rng(35);
  OpDataset data = build_training_set(op_by_name("id"), 8, f.grid, rng);
  OptSettings hot;
  hot.batch = 8;
  hot.max_epochs = 60;
  hot.patience = 60;
  hot.lr = 1e200;  // one step this size overflows the next forward pass
  CHECK_THROWS_AS(train_surrogate(net, data, hot, 1), NumericalError);

  OpDataset poisoned = data;
  poisoned.inputs[3] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(train_surrogate(net, poisoned, OptSettings{}, 1),
                  NumericalError);
}

TEST_CASE("block outputs stay inside the saturation range") {
  TinyFit f;
  OperatorNet net(f.spec, f.grid);
  SurrogateBlock block(op_by_name("sin"), net, net.init_params(3));

  DiscretizedFunction wild(f.grid);
  for (std::int64_t i = 0; i < wild.numel(); ++i)
    wild.values[i] = (i % 2 ? 1.0 : -1.0) * 5000.0;
  DiscretizedFunction out = block.forward_field({wild});
  for (std::int64_t i = 0; i < out.numel(); ++i) {
    CHECK(std::isfinite(out.values[i]));
    CHECK(std::abs(out.values[i]) <= 1000.0);
  }
}

TEST_CASE("trained identity block approximates its input field") {
  TinyFit f;
  Rng rng(41);
  OpDataset data = build_training_set(op_by_name("id"), 80, f.grid, rng);
  OperatorNet net(f.spec, f.grid);
  OptSettings opt;
  opt.batch = 16;
  opt.max_epochs = 150;
  opt.patience = 15;
  auto [params, rep] = train_surrogate(net, data, opt, 13);
  SurrogateBlock block(op_by_name("id"), net, params);

  // Moderate amplitudes keep the probe away from tanh saturation, where the
  // inverse projector amplifies any surrogate error by 1/(1-y^2).
  Mixture1DParams mild;
  mild.max_components = 20;
  mild.amplitude = {-0.75, 0.75};
  Rng frng(42);
  DiscretizedFunction fld =
      sample_mixture_1d(std::get<Grid1D>(f.grid), mild, frng);
  DiscretizedFunction out = block.forward_field({fld});
  double num = 0.0, den = 0.0;
  for (std::int64_t i = 0; i < fld.numel(); ++i) {
    num += (out.values[i] - fld.values[i]) * (out.values[i] - fld.values[i]);
    den += fld.values[i] * fld.values[i];
  }
  CHECK(std::sqrt(num / den) < 0.25);
}

TEST_CASE("block input gradients match finite differences") {
  TinyFit f;
  OperatorNet net(f.spec, f.grid);
  SurrogateBlock block(op_by_name("sin"), net, net.init_params(17));
  const std::int64_t np = net.npoints();

  std::vector<double> x(np);
  Rng rng(43);
  for (auto& v : x) v = rng.uniform(-3.0, 3.0);

  Tape t;
  Var xv = t.leaf({np}, x.data(), true);
  Var y = block.tape_forward(t, {xv});
  const std::vector<double> zeros(static_cast<std::size_t>(np), 0.0);
  Var loss = t.masked_l1(y, zeros.data(), nullptr);
  t.backward(loss);
  const auto g = t.grad(xv);

  auto eval = [&](const std::vector<double>& xs) {
    Tape tt;
    Var xvv = tt.leaf({np}, xs.data(), false);
    Var yy = block.tape_forward(tt, {xvv});
    return tt.val(yy).abs().mean();
  };
  const double h = 1e-4;
  Rng pick(44);
  for (int q = 0; q < 6; ++q) {
    const auto j = static_cast<std::size_t>(pick.uniform_int(0, np - 1));
    auto xp = x, xm = x;
    xp[j] += h;
    xm[j] -= h;
    const double fd = (eval(xp) - eval(xm)) / (2.0 * h);
    const double scale = std::max({1e-3, std::abs(fd), std::abs(g[j])});
    INFO("coord ", j, " fd=", fd, " ad=", g[j]);
    CHECK(std::abs(fd - g[j]) / scale < 1e-3);
  }
}

TEST_CASE("blocks reject arity and grid mismatches") {
  TinyFit f;
  OperatorNet net(f.spec, f.grid);
  SurrogateBlock block(op_by_name("sin"), net, net.init_params(1));

  DiscretizedFunction fld(f.grid);
  CHECK_THROWS_AS(block.forward_field({fld, fld}), ConfigError);
  DiscretizedFunction other(Grid{make_grid_1d(-10.0, 10.0, 25)});
  CHECK_THROWS_AS(block.forward_field({other}), ConfigError);
  CHECK_THROWS_AS(
      SurrogateBlock(op_by_name("mul"), net, net.init_params(1)), ConfigError);
}

TEST_CASE("store round trips models and protects existing files") {
  TinyFit f;
  OperatorNet net(f.spec, f.grid);
  Params params = net.init_params(23);
  TrainReport rep;
  rep.best_holdout = 0.03;
  rep.epochs_run = 12;

  const std::string dir = "test_surrogate_store";
  std::filesystem::remove_all(dir);
  SurrogateStore store(dir);
  const OpSpec& op = op_by_name("sin");

  CHECK(!store.has("sin", "spectral", f.grid, 23));
  store.save(op, net, params, 23, rep, false);
  CHECK(store.has("sin", "spectral", f.grid, 23));
  CHECK_THROWS_AS(store.save(op, net, params, 23, rep, false), IoError);
  store.save(op, net, params, 23, rep, true);

  SurrogateBlock block = store.load("sin", "spectral", f.grid, 23);
  CHECK(params_equal(block.params(), params));
  CHECK(block.net().spec().width == f.spec.width);

  DiscretizedFunction fld(f.grid);
  for (std::int64_t i = 0; i < fld.numel(); ++i)
    fld.values[i] = 0.1 * static_cast<double>(i);
  SurrogateBlock direct(op, net, params);
  DiscretizedFunction a = direct.forward_field({fld});
  DiscretizedFunction b = block.forward_field({fld});
  for (std::int64_t i = 0; i < a.numel(); ++i)
    CHECK(a.values[i] == b.values[i]);

  CHECK(store.manifest().find("\"op\": \"sin\"") != std::string::npos);
  CHECK_THROWS_AS(store.load("cos", "spectral", f.grid, 23), IoError);
  std::filesystem::remove_all(dir);
}
