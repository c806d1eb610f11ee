#include "nomto/pipeline.hpp"

#include <ostream>
#include <set>

#include "nomto/common.hpp"

namespace nomto {

namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::uint64_t op_stream_seed(std::uint64_t seed, const std::string& op_name) {
  return Rng(seed).child(fnv1a(op_name)).seed();
}

SurrogateBlock ensure_surrogate(const SurrogateStore& store, const OpSpec& op,
                                const Grid& grid, const SurrogatePlan& plan,
                                std::uint64_t seed, bool force,
                                std::ostream* log) {
  if (!force && store.has(op.name, plan.variant, grid, seed)) {
    if (log) *log << "surrogate " << op.name << ": cached\n" << std::flush;
    return store.load(op.name, plan.variant, grid, seed);
  }

  const std::uint64_t stream = op_stream_seed(seed, op.name);
  if (log)
    *log << "surrogate " << op.name << ": training " << plan.variant << ", "
         << plan.samples << " samples, seed " << seed << "\n"
         << std::flush;

  Rng rng(stream);
  OpDataset data = build_training_set(op, plan.samples, grid, rng);
  NetSpec spec = plan.variant == "spectral"
                     ? spectral_preset(op.arity, grid)
                     : convolutional_preset(op.arity, grid);
  OperatorNet net(spec, grid);
  OptSettings opt = plan.opt;
  if (log && !opt.on_epoch)
    opt.on_epoch = [log, &op](std::int64_t e, double tr, double ho) {
      *log << "  " << op.name << " epoch " << e << " train " << tr << " hold "
           << ho << "\n"
           << std::flush;
    };
  auto [params, report] = train_surrogate(net, data, opt, stream);
  if (log)
    *log << "surrogate " << op.name << ": done, best holdout "
         << report.best_holdout << " after " << report.epochs_run
         << " epochs (" << report.wall_seconds << "s)\n"
         << std::flush;
  store.save(op, net, params, seed, report, force);
  return SurrogateBlock(op, net, std::move(params));
}

std::vector<std::string> provision_library(const SurrogateStore& store,
                                           const std::vector<OpSpec>& library,
                                           const Grid& grid,
                                           const SurrogatePlan& plan,
                                           std::uint64_t seed, bool force,
                                           std::ostream* log) {
  std::vector<std::string> trained;
  std::set<std::string> seen;
  for (const OpSpec& op : library) {
    if (!seen.insert(op.name).second) continue;
    const bool had = store.has(op.name, plan.variant, grid, seed);
    ensure_surrogate(store, op, grid, plan, seed, force, log);
    if (!had || force) trained.push_back(op.name);
  }
  return trained;
}

}  // namespace nomto
