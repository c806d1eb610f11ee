#include "nomto/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <nlohmann/json.hpp>
#include <numeric>

namespace nomto {

double l_half_star(double w, double a) {
  if (a <= 0.0) throw ConfigError("l_half_star: a must be positive");
  const double x = std::abs(w);
  if (x >= a) return std::sqrt(x);
  const double x2 = x * x;
  return std::sqrt(-x2 * x2 / (8 * a * a * a) + 3 * x2 / (4 * a) + 3 * a / 8);
}

double l_half_star_grad(double w, double a) {
  if (a <= 0.0) throw ConfigError("l_half_star: a must be positive");
  const double x = std::abs(w);
  const double s = w < 0.0 ? -1.0 : (w > 0.0 ? 1.0 : 0.0);
  if (x >= a) return s / (2 * std::sqrt(x));
  const double inner = -x * x * x / (2 * a * a * a) + 3 * x / (2 * a);
  return s * inner / (2 * l_half_star(w, a));
}

double data_loss(const SymbolicGraph& g, const FitDataset& data) {
  double acc = 0.0;
  std::int64_t points = 0;
  for (const FitSample& s : data) {
    NodeCache c = graph_eval(g, s.inputs);
    for (std::int64_t p = 0; p < c.prediction.numel(); ++p) {
      if (!s.target.defined[p]) continue;
      acc += std::abs(c.prediction.flat()[p] - s.target.values.flat()[p]);
      ++points;
    }
  }
  if (points == 0)
    throw NumericalError("data_loss: every target point is masked");
  return acc / double(points);
}

double penalty_value(const SymbolicGraph& g, const PenaltyConfig& pen) {
  double acc = 0.0;
  for (const WeightCoord& c : active_weights(g))
    acc += l_half_star(get_weight(g, c), pen.a);
  return pen.lambda * acc;
}

std::vector<double> penalty_grad(const SymbolicGraph& g,
                                 const PenaltyConfig& pen) {
  std::vector<double> grads;
  for (const WeightCoord& c : active_weights(g))
    grads.push_back(pen.lambda * l_half_star_grad(get_weight(g, c), pen.a));
  return grads;
}

double total_loss(const SymbolicGraph& g, const FitDataset& data,
                  const PenaltyConfig& pen) {
  return data_loss(g, data) + penalty_value(g, pen);
}

std::vector<WeightCoord> prune_step(SymbolicGraph& g,
                                    const std::vector<WeightCoord>& coords,
                                    const std::vector<double>& e_now,
                                    const std::vector<double>& e_then,
                                    const PruneConfig& pc) {
  if (coords.size() != e_now.size() || coords.size() != e_then.size())
    throw ConfigError("prune_step: energies do not match the weight list");
  const std::int64_t active = static_cast<std::int64_t>(coords.size());
  const std::int64_t room = active - pc.min_nonzero;
  if (room <= 0) return {};

  std::int64_t count =
      static_cast<std::int64_t>(std::floor(pc.fraction * double(active)));
  count = std::clamp<std::int64_t>(std::max<std::int64_t>(count, 1), 0, room);

  std::vector<std::size_t> order(coords.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) {
                     const double dx = std::abs(e_now[x] - e_then[x]);
                     const double dy = std::abs(e_now[y] - e_then[y]);
                     if (dx != dy) return dx < dy;
                     const double wx = std::abs(get_weight(g, coords[x]));
                     const double wy = std::abs(get_weight(g, coords[y]));
                     if (wx != wy) return wx < wy;
                     return x < y;
                   });

  std::vector<WeightCoord> masked;
  for (std::int64_t i = 0; i < count; ++i) {
    mask_weight(g, coords[order[i]]);
    masked.push_back(coords[order[i]]);
  }
  return masked;
}

namespace {

WeightsSnapshot snapshot(const SymbolicGraph& g, std::int64_t epoch) {
  return {epoch, g.layers, g.out_w, g.out_live};
}

void restore(SymbolicGraph& g, const WeightsSnapshot& s) {
  g.layers = s.layers;
  g.out_w = s.out_w;
  g.out_live = s.out_live;
}

}  // namespace

FitResult fit(const SymbolicGraph& start, const FitDataset& data,
              const PenaltyConfig& pen, const PruneConfig& prune,
              const OptimSettings& opt) {
  if (data.empty()) throw ConfigError("fit: empty dataset");
  if (prune.start_epoch < prune.window)
    throw ConfigError("fit: prune start_epoch must be >= window");
  if (prune.fraction <= 0.0 || prune.fraction >= 1.0)
    throw ConfigError("fit: prune fraction must be in (0, 1)");
  if (prune.period < 1 || prune.window < 1)
    throw ConfigError("fit: prune period and window must be positive");
  if (prune.min_nonzero < 1)
    throw ConfigError("fit: min_nonzero must be at least 1");

  FitResult res;
  res.graph = start;
  SymbolicGraph& g = res.graph;
  FitHistory& hist = res.history;

  // All bookkeeping is indexed by the weight list at fit start.
  const std::vector<WeightCoord> init = active_weights(g);
  const std::int64_t nw = static_cast<std::int64_t>(init.size());
  if (nw == 0) throw ConfigError("fit: graph has no live weights");
  auto init_index = [&](const WeightCoord& c) {
    const auto it = std::lower_bound(
        init.begin(), init.end(), c, [](const WeightCoord& a, const WeightCoord& b) {
          if (a.layer != b.layer) return a.layer < b.layer;
          if (a.slot != b.slot) return a.slot < b.slot;
          return a.prev < b.prev;
        });
    return static_cast<std::int64_t>(it - init.begin());
  };

  std::vector<double> rms(nw, 0.0);
  hist.best_loss = std::numeric_limits<double>::infinity();
  std::int64_t last_event = 0;  // best epoch or prune epoch, for patience
  WeightsSnapshot good = snapshot(g, 0);
  Rng shuffle_rng(opt.seed);

  const std::int64_t nsamples = static_cast<std::int64_t>(data.size());
  const std::int64_t bsz = opt.batch <= 0 ? nsamples : opt.batch;

  for (std::int64_t epoch = 1; epoch <= opt.max_epochs; ++epoch) {
    std::vector<std::int64_t> order(nsamples);
    std::iota(order.begin(), order.end(), 0);
    if (bsz < nsamples) {
      for (std::int64_t i = nsamples - 1; i > 0; --i)
        std::swap(order[i], order[shuffle_rng.uniform_int(0, i)]);
    }

    std::vector<WeightCoord> cur = active_weights(g);
    std::vector<std::int64_t> cur2init(cur.size());
    for (std::size_t i = 0; i < cur.size(); ++i)
      cur2init[i] = init_index(cur[i]);

    // One epoch: stochastic steps over batches, plus pooled bookkeeping of
    // the data term and the epoch-mean data gradient for the energies.
    double epoch_abs = 0.0;
    std::int64_t epoch_points = 0;
    std::vector<double> epoch_grad(nw, 0.0);
    std::int64_t batches = 0;
    bool finite = true;

    for (std::int64_t b0 = 0; b0 < nsamples && finite; b0 += bsz) {
      const std::int64_t b1 = std::min(nsamples, b0 + bsz);
      std::vector<double> bgrad(cur.size(), 0.0);
      double batch_abs = 0.0;
      std::int64_t batch_points = 0;

      std::vector<NodeCache> caches;
      std::vector<std::int64_t> sample_ids;
      for (std::int64_t q = b0; q < b1; ++q) {
        const FitSample& s = data[order[q]];
        NodeCache c = graph_eval(g, s.inputs);
        for (std::int64_t p = 0; p < c.prediction.numel(); ++p) {
          if (!s.target.defined[p]) continue;
          batch_abs += std::abs(c.prediction.flat()[p] - s.target.values.flat()[p]);
          ++batch_points;
        }
        caches.push_back(std::move(c));
        sample_ids.push_back(order[q]);
      }
      if (batch_points > 0) {
        for (std::size_t ci = 0; ci < caches.size(); ++ci) {
          const FitSample& s = data[sample_ids[ci]];
          const NodeCache& c = caches[ci];
          NdArray dpred(grid_shape(g.grid));
          for (std::int64_t p = 0; p < dpred.numel(); ++p) {
            if (!s.target.defined[p]) continue;
            const double d = c.prediction.flat()[p] - s.target.values.flat()[p];
            dpred.flat()[p] =
                (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0)) / double(batch_points);
          }
          std::vector<double> sg = graph_backprop(g, c, dpred);
          for (std::size_t i = 0; i < sg.size(); ++i) bgrad[i] += sg[i];
        }
      }

      const std::vector<double> pg = penalty_grad(g, pen);
      for (std::size_t i = 0; i < bgrad.size(); ++i) bgrad[i] += pg[i];

      for (double v : bgrad)
        if (!std::isfinite(v)) finite = false;
      if (!std::isfinite(batch_abs)) finite = false;
      if (!finite) break;

      epoch_abs += batch_abs;
      epoch_points += batch_points;
      ++batches;
      for (std::size_t i = 0; i < bgrad.size(); ++i)
        epoch_grad[cur2init[i]] += bgrad[i];

      for (std::size_t i = 0; i < cur.size(); ++i) {
        const std::int64_t k = cur2init[i];
        rms[k] = opt.decay * rms[k] + (1.0 - opt.decay) * bgrad[i] * bgrad[i];
        set_weight(g, cur[i],
                   get_weight(g, cur[i]) -
                       opt.lr * bgrad[i] / (std::sqrt(rms[k]) + opt.eps));
      }
    }
    if (!finite) {
      restore(g, good);
      res.aborted = true;
      break;
    }
    if (epoch_points == 0)
      throw NumericalError("fit: every target point is masked");

    const double dterm = epoch_abs / double(epoch_points);
    const double loss = dterm + penalty_value(g, pen);
    if (!std::isfinite(loss)) {
      restore(g, good);
      res.aborted = true;
      break;
    }

    hist.data_term.push_back(dterm);
    hist.loss.push_back(loss);
    std::vector<double> energy(nw, 0.0);
    for (std::size_t i = 0; i < cur.size(); ++i) {
      const std::int64_t k = cur2init[i];
      energy[k] =
          weight_energy(get_weight(g, cur[i]), epoch_grad[k] / double(batches));
    }
    hist.energy.push_back(std::move(energy));

    if (loss < hist.best_loss - opt.min_improvement) {
      hist.best_loss = loss;
      hist.best_epoch = epoch;
      last_event = epoch;
    }

    if (epoch >= prune.start_epoch &&
        (epoch - prune.start_epoch) % prune.period == 0) {
      std::vector<WeightCoord> live = active_weights(g);
      std::vector<double> e_now(live.size()), e_then(live.size());
      const std::vector<double>& now = hist.energy.back();
      const std::int64_t then_epoch = epoch - prune.window;  // >= 0 by config
      for (std::size_t i = 0; i < live.size(); ++i) {
        const std::int64_t k = init_index(live[i]);
        e_now[i] = now[k];
        e_then[i] = then_epoch >= 1 ? hist.energy[then_epoch - 1][k] : 0.0;
      }
      std::vector<WeightCoord> cut = prune_step(g, live, e_now, e_then, prune);
      if (!cut.empty()) {
        hist.prune_epochs.push_back(epoch);
        res.checkpoints.push_back(snapshot(g, epoch));
        last_event = epoch;
      }
    }

    hist.active.push_back(g.active_count());
    good = snapshot(g, epoch);
    if (opt.on_epoch) opt.on_epoch(epoch, loss, hist.active.back());

    if (epoch - last_event >= opt.patience) break;
  }

  if (hist.best_epoch == 0) hist.best_loss = 0.0;  // nothing ever completed
  res.checkpoints.push_back(snapshot(g, hist.loss.empty()
                                            ? 0
                                            : static_cast<std::int64_t>(
                                                  hist.loss.size())));
  return res;
}

std::string history_to_json(const FitHistory& h) {
  nlohmann::json j;
  j["loss"] = h.loss;
  j["data_term"] = h.data_term;
  j["active"] = h.active;
  j["prune_epochs"] = h.prune_epochs;
  j["energy"] = h.energy;
  j["best_epoch"] = h.best_epoch;
  j["best_loss"] = h.best_loss;
  return j.dump();
}

FitHistory history_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
  if (!j.is_object()) throw IoError("fit history json: not an object");
  try {
    FitHistory h;
    h.loss = j.at("loss").get<std::vector<double>>();
    h.data_term = j.at("data_term").get<std::vector<double>>();
    h.active = j.at("active").get<std::vector<std::int64_t>>();
    h.prune_epochs = j.at("prune_epochs").get<std::vector<std::int64_t>>();
    h.energy = j.at("energy").get<std::vector<std::vector<double>>>();
    h.best_epoch = j.at("best_epoch").get<std::int64_t>();
    h.best_loss = j.at("best_loss").get<double>();
    return h;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("fit history json: ") + e.what());
  }
}

}  // namespace nomto
