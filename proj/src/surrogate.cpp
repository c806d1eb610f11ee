#include "nomto/surrogate.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

namespace nomto {

using ad::Tape;
using ad::Var;
using ad::Vec;

OpDataset build_training_set(const OpSpec& op, std::int64_t n_samples,
                             const Grid& grid, Rng& rng) {
  if (n_samples < 1)
    throw ConfigError("training set needs at least one sample");
  OpDataset d;
  d.grid = grid;
  d.arity = op.arity;
  d.nsamples = n_samples;
  d.npoints = shape_numel(grid_shape(grid));
  d.inputs.resize(static_cast<std::size_t>(n_samples * op.arity * d.npoints));
  d.targets.resize(static_cast<std::size_t>(n_samples * d.npoints));
  const ProjectionSpec proj;
  const std::int64_t np = d.npoints;
  for (std::int64_t s = 0; s < n_samples; ++s) {
    std::vector<DiscretizedFunction> ins;
    ins.reserve(op.arity);
    for (int a = 0; a < op.arity; ++a) {
      if (const auto* g1 = std::get_if<Grid1D>(&grid))
        ins.push_back(sample_mixture_1d(*g1, Mixture1DParams{}, rng));
      else
        ins.push_back(sample_mixture_3d(std::get<Grid3D>(grid),
                                        Mixture3DParams{}, rng));
    }
    TrainingPair pair = make_training_pair(op, ins, proj);
    for (int a = 0; a < op.arity; ++a)
      std::copy_n(pair.inputs[a].data(), np,
                  d.inputs.data() + (s * op.arity + a) * np);
    std::copy_n(pair.target.data(), np, d.targets.data() + s * np);
  }
  return d;
}

namespace {

// One tape pass over `count` samples starting at idx[first]: assembles the
// channel-major input (fields then coordinate rows), clamps predictions to
// the crop range, and returns the relative L2 loss. In training mode the
// scaled parameter gradients are accumulated into `grads`.
double surrogate_pass(const OperatorNet& net, const Params& params,
                      const OpDataset& data, const std::vector<double>& coords,
                      const std::vector<std::int64_t>& idx, std::int64_t first,
                      std::int64_t count, bool train_mode,
                      std::vector<Vec>* grads, double scale) {
  const std::int64_t np = data.npoints;
  const std::int64_t ic = net.in_channels();
  const std::int64_t cd = coord_dims(data.grid);
  std::vector<double> xbuf(static_cast<std::size_t>(ic * count * np));
  std::vector<double> tbuf(static_cast<std::size_t>(count * np));
  for (std::int64_t b = 0; b < count; ++b) {
    const std::int64_t s = idx[static_cast<std::size_t>(first + b)];
    for (std::int64_t a = 0; a < data.arity; ++a)
      std::copy_n(data.inputs.data() + (s * data.arity + a) * np, np,
                  xbuf.data() + (a * count + b) * np);
    std::copy_n(data.targets.data() + s * np, np, tbuf.data() + b * np);
  }
  for (std::int64_t d2 = 0; d2 < cd; ++d2)
    for (std::int64_t b = 0; b < count; ++b)
      std::copy_n(coords.data() + d2 * np, np,
                  xbuf.data() + ((data.arity + d2) * count + b) * np);

  const ProjectionSpec proj;
  Tape t;
  auto pv = bind_params(t, params, train_mode);
  Var xv = t.leaf({ic, count * np}, xbuf.data(), false);
  Var y = net.forward(t, pv, xv, count);
  if (!t.val(y).allFinite())
    throw NumericalError("surrogate training diverged: non-finite prediction");
  y = t.clamp(y, -proj.crop_hi(), proj.crop_hi());
  Var loss = t.relative_l2(y, tbuf.data(), count);
  const double lv = t.scalar(loss);
  if (!std::isfinite(lv))
    throw NumericalError("surrogate training diverged: non-finite loss");
  if (train_mode) {
    t.backward(loss);
    for (std::size_t i = 0; i < pv.size(); ++i)
      (*grads)[i] += t.grad(pv[i]) * scale;
  }
  return lv;
}

}  // namespace

std::pair<Params, TrainReport> train_surrogate(const OperatorNet& net,
                                               const OpDataset& data,
                                               const OptSettings& opt,
                                               std::uint64_t seed) {
  const auto t0 = std::chrono::steady_clock::now();
  if (data.nsamples < 1) throw ConfigError("train_surrogate: empty dataset");
  if (net.spec().arity != data.arity)
    throw ConfigError("train_surrogate: dataset arity does not match net");
  if (net.npoints() != data.npoints)
    throw ConfigError("train_surrogate: dataset grid does not match net");
  if (opt.batch < 1 || opt.max_epochs < 1 || opt.patience < 1)
    throw ConfigError("train_surrogate: bad optimizer settings");

  const std::int64_t n = data.nsamples;
  std::int64_t nhold =
      static_cast<std::int64_t>(opt.holdout_fraction * static_cast<double>(n));
  nhold = std::min(nhold, n - 1);
  const std::int64_t ntrain = n - nhold;

  std::int64_t mb = opt.micro_batch > 0 ? opt.micro_batch : opt.batch;
  if (net.spec().variant == "convolutional") mb = 1;
  mb = std::min(mb, opt.batch);

  const auto coords = coord_rows(data.grid);
  Params params = net.init_params(seed);
  Adam adam(params, opt.lr);
  Rng shuffle_rng = Rng(seed).child(0x7261696eULL);

  std::vector<std::int64_t> order(static_cast<std::size_t>(ntrain));
  std::iota(order.begin(), order.end(), 0);
  std::vector<std::int64_t> hold(static_cast<std::size_t>(nhold));
  std::iota(hold.begin(), hold.end(), ntrain);

  TrainReport rep;
  rep.seed = seed;
  rep.train_samples = ntrain;
  rep.holdout_samples = nhold;

  Params best = params;
  double best_err = std::numeric_limits<double>::infinity();
  std::int64_t wait = 0;

  for (std::int64_t epoch = 0; epoch < opt.max_epochs; ++epoch) {
    for (std::int64_t i = ntrain - 1; i > 0; --i) {
      const std::int64_t j = shuffle_rng.uniform_int(0, i);
      std::swap(order[static_cast<std::size_t>(i)],
                order[static_cast<std::size_t>(j)]);
    }
    double ep_loss = 0.0;
    std::int64_t nsteps = 0;
    for (std::int64_t s0 = 0; s0 < ntrain; s0 += opt.batch) {
      const std::int64_t bs = std::min(opt.batch, ntrain - s0);
      std::vector<Vec> grads(params.size());
      for (std::size_t i = 0; i < params.size(); ++i)
        grads[i] = Vec::Zero(params[i].numel());
      double step_loss = 0.0;
      for (std::int64_t m0 = 0; m0 < bs; m0 += mb) {
        const std::int64_t ms = std::min(mb, bs - m0);
        const double scale =
            static_cast<double>(ms) / static_cast<double>(bs);
        step_loss += scale * surrogate_pass(net, params, data, coords, order,
                                            s0 + m0, ms, true, &grads, scale);
      }
      adam.step(params, grads);
      ep_loss += step_loss;
      ++nsteps;
    }
    rep.train_loss.push_back(ep_loss / static_cast<double>(nsteps));

    double herr = 0.0;
    if (nhold > 0) {
      for (std::int64_t h0 = 0; h0 < nhold; h0 += mb) {
        const std::int64_t hs = std::min(mb, nhold - h0);
        herr += surrogate_pass(net, params, data, coords, hold, h0, hs, false,
                               nullptr, 0.0) *
                (static_cast<double>(hs) / static_cast<double>(nhold));
      }
    } else {
      herr = rep.train_loss.back();
    }
    rep.holdout_error.push_back(herr);
    rep.epochs_run = epoch + 1;
    if (opt.on_epoch) opt.on_epoch(epoch + 1, rep.train_loss.back(), herr);

    if (herr < best_err - opt.min_improvement) {
      best_err = herr;
      best = params;
      wait = 0;
    } else if (++wait >= opt.patience) {
      break;
    }
  }

  rep.best_holdout = best_err;
  rep.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return {std::move(best), std::move(rep)};
}

SurrogateBlock::SurrogateBlock(OpSpec op, OperatorNet net, Params params,
                               ProjectionSpec proj)
    : op_(std::move(op)),
      net_(std::move(net)),
      params_(std::move(params)),
      proj_(proj),
      coords_(coord_rows(net_.grid())) {
  if (net_.spec().arity != op_.arity)
    throw ConfigError("surrogate block: op arity does not match net");
}

Var SurrogateBlock::tape_forward(Tape& t,
                                 const std::vector<Var>& inputs) const {
  if (static_cast<int>(inputs.size()) != op_.arity)
    throw ConfigError("surrogate block: wrong input count for " + op_.name);
  const std::int64_t np = net_.npoints();
  std::vector<Var> rows;
  rows.reserve(inputs.size() + 1);
  for (Var x : inputs) {
    if (t.val(x).size() != np)
      throw ConfigError("surrogate block: input does not match training grid");
    rows.push_back(x);  // raw function values, same space the net trained on
  }
  rows.push_back(t.leaf({coord_dims(net_.grid()), np}, coords_.data(), false));
  Var stacked = t.concat_rows(rows, np);
  auto pv = bind_params(t, params_, false);
  Var y = net_.forward(t, pv, stacked, 1);
  return t.unproject(y, proj_.clip_limit);
}

DiscretizedFunction SurrogateBlock::forward_field(
    const std::vector<DiscretizedFunction>& inputs) const {
  if (static_cast<int>(inputs.size()) != op_.arity)
    throw ConfigError("surrogate block: wrong input count for " + op_.name);
  Tape t;
  std::vector<Var> vars;
  vars.reserve(inputs.size());
  for (const auto& f : inputs) {
    if (!grid_equal(f.grid, net_.grid()))
      throw ConfigError("surrogate block: field grid mismatch");
    vars.push_back(t.leaf({f.numel()}, f.values.data(), false));
  }
  Var y = tape_forward(t, vars);
  DiscretizedFunction out(net_.grid());
  const Vec& v = t.val(y);
  std::copy_n(v.data(), v.size(), out.values.data());
  for (std::int64_t i = 0; i < out.defined.numel(); ++i) {
    std::uint8_t ok = 1;
    for (const auto& f : inputs) ok &= f.defined[i];
    out.defined[i] = ok;
  }
  return out;
}

SurrogateStore::SurrogateStore(std::string dir) : dir_(std::move(dir)) {}

std::string SurrogateStore::key(const std::string& op_name,
                                const std::string& variant, const Grid& grid,
                                std::uint64_t seed) {
  return op_name + "-" + variant + "-" + grid_signature(grid) + "-s" +
         std::to_string(seed);
}

std::string SurrogateStore::model_path(const std::string& k) const {
  return dir_ + "/" + k + ".nnb";
}

std::string SurrogateStore::manifest_path() const {
  return dir_ + "/surrogates.json";
}

bool SurrogateStore::has(const std::string& op_name, const std::string& variant,
                         const Grid& grid, std::uint64_t seed) const {
  return std::filesystem::exists(model_path(key(op_name, variant, grid, seed)));
}

void SurrogateStore::save(const OpSpec& op, const OperatorNet& net,
                          const Params& params, std::uint64_t seed,
                          const TrainReport& report, bool force) const {
  std::filesystem::create_directories(dir_);
  const std::string k = key(op.name, net.spec().variant, net.grid(), seed);
  const std::string path = model_path(k);
  if (std::filesystem::exists(path) && !force)
    throw IoError("surrogate model exists: " + path +
                  " (pass force to retrain)");

  nlohmann::json meta{
      {"key", k},
      {"op", op.name},
      {"variant", net.spec().variant},
      {"grid", grid_signature(net.grid())},
      {"seed", seed},
      {"spec", nlohmann::json::parse(net_spec_to_json(net.spec()))},
      {"best_holdout", report.best_holdout},
      {"epochs", report.epochs_run},
      {"train_samples", report.train_samples},
      {"wall_seconds", report.wall_seconds},
  };
  save_params(path, params, meta.dump());

  nlohmann::json manifest = nlohmann::json::array();
  {
    std::ifstream f(manifest_path());
    if (f) {
      nlohmann::json prev = nlohmann::json::parse(f, nullptr, false);
      if (prev.is_array()) manifest = std::move(prev);
    }
  }
  nlohmann::json entry{{"key", k},
                       {"op", op.name},
                       {"variant", net.spec().variant},
                       {"grid", grid_signature(net.grid())},
                       {"seed", seed},
                       {"file", k + ".nnb"},
                       {"best_holdout", report.best_holdout},
                       {"epochs", report.epochs_run}};
  nlohmann::json next = nlohmann::json::array();
  for (auto& e : manifest)
    if (!(e.is_object() && e.value("key", "") == k)) next.push_back(e);
  next.push_back(entry);
  std::ofstream out(manifest_path(), std::ios::trunc);
  if (!out) throw IoError("cannot write manifest: " + manifest_path());
  out << next.dump(2) << "\n";
}

std::string SurrogateStore::manifest() const {
  std::ifstream f(manifest_path());
  if (!f) return "[]";
  std::string s((std::istreambuf_iterator<char>(f)),
                std::istreambuf_iterator<char>());
  return s.empty() ? "[]" : s;
}

SurrogateBlock SurrogateStore::load(const std::string& op_name,
                                    const std::string& variant,
                                    const Grid& grid,
                                    std::uint64_t seed) const {
  const std::string path = model_path(key(op_name, variant, grid, seed));
  if (!std::filesystem::exists(path))
    throw IoError("surrogate model not trained yet: " + path);
  auto [params, meta_json] = load_params(path);
  nlohmann::json meta = nlohmann::json::parse(meta_json);
  NetSpec spec = net_spec_from_json(meta.at("spec").dump());
  OperatorNet net(spec, grid);
  return SurrogateBlock(op_by_name(op_name), std::move(net),
                        std::move(params));
}

}  // namespace nomto
