#include "milodo/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "milodo/errors.hpp"
#include "milodo/rng.hpp"

namespace milodo {

namespace {

std::uint64_t mix_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
  std::uint64_t s = base + 0x9E3779B97F4A7C15ULL * (a + 1) + 0xBF58476D1CE4E5B9ULL * (b + 1);
  s ^= s >> 30;
  s *= 0x94D049BB133111EBULL;
  s ^= s >> 31;
  return s;
}

bool grads_finite(const MiLoDoParams& grads) {
  bool ok = true;
  for_each_tensor(grads, [&](Eigen::Map<const Eigen::VectorXd> t) {
    if (!t.allFinite()) ok = false;
  });
  return ok;
}

}  // namespace

std::vector<StageConfig> default_stage_schedule() {
  return {
      {5, 10, 5e-4, 20, 32},
      {10, 20, 1e-4, 10, 32},
      {20, 40, 5e-5, 10, 32},
      {40, 80, 1e-5, 10, 32},
      {20, 100, 1e-5, 5, 32},
  };
}

double forward_segment(const Optimizee& opt, const Topology& topo, const MiLoDoParams& params,
                       SimState& state, int k_truncate, SegmentTape& tape) {
  if (k_truncate < 1) throw ParameterError("forward_segment: k_truncate must be >= 1");
  tape.iters.assign(k_truncate, IterationTape{});
  double loss = 0.0;
  for (int k = 0; k < k_truncate; ++k) {
    milodo_iteration(state, params, opt, topo, &tape.iters[k]);
    loss += global_objective(opt, mean_x(state));
  }
  return loss / static_cast<double>(k_truncate);
}

StageReport train_stage(MiLoDoParams& params, const std::vector<Optimizee>& instances,
                        const Topology& topo, const StageConfig& cfg, std::uint64_t base_seed,
                        const std::function<void(int, double)>& on_epoch) {
  if (instances.empty()) throw ParameterError("train_stage: no instances");
  if (cfg.k_truncate < 1 || cfg.k_total < cfg.k_truncate ||
      cfg.k_total % cfg.k_truncate != 0)
    throw ParameterError("train_stage: k_truncate must divide k_total");
  if (cfg.batch_size < 1) throw ParameterError("train_stage: batch_size must be >= 1");
  if (cfg.lr < 0.0) throw ParameterError("train_stage: negative learning rate");

  StageReport report;
  report.cfg = cfg;
  const int d = instances[0].shape.d;
  const int segments = cfg.k_total / cfg.k_truncate;
  const int m = static_cast<int>(instances.size());

  AdamConfig adam_cfg;
  adam_cfg.lr = cfg.lr;
  AdamState adam = AdamState::create(params, adam_cfg);

  std::vector<int> order(m);
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(mix_seed(base_seed, 0x5155FFULL, epoch));
    for (int i = m - 1; i > 0; --i) {
      const int j = static_cast<int>(shuffle_rng.uniform_index(i + 1));
      std::swap(order[i], order[j]);
    }

    double epoch_loss = 0.0;
    long long epoch_terms = 0;
    long long epoch_attempted = 0;
    long long epoch_discarded = 0;

    for (int start = 0; start < m; start += cfg.batch_size) {
      const int bsz = std::min(cfg.batch_size, m - start);
      std::vector<SimState> states(bsz);
      for (int b = 0; b < bsz; ++b) {
        const int idx = order[start + b];
        states[b] = init_rollout_state(topo, d, mix_seed(base_seed, idx, epoch));
      }

      for (int seg = 0; seg < segments; ++seg) {
        MiLoDoParams grads = zeros_like(params);
        const double weight = static_cast<double>(cfg.k_truncate) /
                              (static_cast<double>(cfg.k_total) * bsz);
        SegmentTape tape;
        bool any = false;
        for (int b = 0; b < bsz; ++b) {
          const int idx = order[start + b];
          const Optimizee& opt = instances[idx];
          SimState trial = states[b];
          ++epoch_attempted;
          double loss;
          try {
            loss = forward_segment(opt, topo, params, trial, cfg.k_truncate, tape);
          } catch (const DivergenceError&) {
            loss = std::numeric_limits<double>::quiet_NaN();
          }
          if (!std::isfinite(loss)) {
            ++report.discarded_segments;
            ++epoch_discarded;
            states[b] = init_rollout_state(topo, d,
                                           mix_seed(base_seed, idx, epoch * 1000 + seg + 1));
            continue;
          }
          milodo_backward_segment(tape, trial, opt, topo, params, weight, grads);
          states[b] = std::move(trial);
          epoch_loss += loss;
          ++epoch_terms;
          any = true;
        }
        if (!any) continue;
        if (!grads_finite(grads)) {
          ++report.skipped_updates;
          continue;
        }
        adam_step(params, grads, adam);
      }
    }

    const double mean_loss = epoch_terms > 0 ? epoch_loss / epoch_terms
                                             : std::numeric_limits<double>::quiet_NaN();
    report.epoch_loss.push_back(mean_loss);
    if (on_epoch) on_epoch(epoch, mean_loss);
    if (2 * epoch_discarded > epoch_attempted) {
      report.aborted = true;
      break;
    }
  }
  return report;
}

TrainingRunReport multi_stage_train(MiLoDoParams& params,
                                    const std::vector<Optimizee>& instances,
                                    const Topology& topo,
                                    const std::vector<StageConfig>& stages,
                                    std::uint64_t base_seed, const std::string& checkpoint_dir,
                                    const std::function<void(int, int, double)>& on_epoch) {
  TrainingRunReport report;
  for (std::size_t s = 0; s < stages.size(); ++s) {
    const std::uint64_t stage_seed = mix_seed(base_seed, 0xABCDEF, s);
    auto hook = on_epoch
                    ? std::function<void(int, double)>([&, s](int epoch, double loss) {
                        on_epoch(static_cast<int>(s), epoch, loss);
                      })
                    : std::function<void(int, double)>();
    report.stages.push_back(train_stage(params, instances, topo, stages[s], stage_seed, hook));
    if (!checkpoint_dir.empty())
      save_params_file(params,
                       checkpoint_dir + "/stage" + std::to_string(s + 1) + ".ckpt");
    if (report.stages.back().aborted) break;
  }
  return report;
}

FdCheckResult fd_gradient_check(const Optimizee& opt, const Topology& topo,
                                const MiLoDoParams& params, int k_truncate,
                                std::uint64_t state_seed, double fd_step, int coords,
                                std::uint64_t coord_seed) {
  FdCheckResult result;
  result.kink_distance = std::numeric_limits<double>::infinity();

  SimState state = init_rollout_state(topo, opt.shape.d, state_seed);
  SegmentTape tape;
  forward_segment(opt, topo, params, state, k_truncate, tape);
  for (const IterationTape& it : tape.iters)
    for (const NodeIterTape& nt : it.nodes)
      for (int l = 0; l < nt.v.size(); ++l)
        result.kink_distance = std::min(
            result.kink_distance,
            std::abs(std::abs(nt.v(l)) - opt.shape.lambda * nt.p(l)));

  MiLoDoParams grads = zeros_like(params);
  milodo_backward_segment(tape, state, opt, topo, params, 1.0, grads);
  const Eigen::VectorXd analytic = flatten(grads);

  const Eigen::VectorXd theta = flatten(params);
  const Eigen::Index total = theta.size();
  std::vector<Eigen::Index> picks;
  if (coords <= 0 || coords >= total) {
    picks.resize(total);
    std::iota(picks.begin(), picks.end(), Eigen::Index{0});
  } else {
    Rng rng(coord_seed);
    for (int c = 0; c < coords; ++c)
      picks.push_back(
          static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::uint64_t>(total))));
  }

  MiLoDoParams probe = params;
  for (const Eigen::Index idx : picks) {
    Eigen::VectorXd shifted = theta;
    shifted(idx) = theta(idx) + fd_step;
    unflatten(shifted, probe);
    SimState sp = init_rollout_state(topo, opt.shape.d, state_seed);
    SegmentTape scratch;
    const double lp = forward_segment(opt, topo, probe, sp, k_truncate, scratch);
    shifted(idx) = theta(idx) - fd_step;
    unflatten(shifted, probe);
    SimState sm = init_rollout_state(topo, opt.shape.d, state_seed);
    const double lm = forward_segment(opt, topo, probe, sm, k_truncate, scratch);
    const double fd = (lp - lm) / (2.0 * fd_step);
    const double a = analytic(idx);
    const double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-6});
    result.max_rel_err = std::max(result.max_rel_err, rel);
    ++result.coords_checked;
  }
  return result;
}

double eval_mean_loss_at(const MiLoDoParams& params, const std::vector<Optimizee>& instances,
                         const Topology& topo, int iterations, std::uint64_t seed) {
  if (instances.empty()) throw ParameterError("eval_mean_loss_at: no instances");
  double total = 0.0;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const RolloutResult run = rollout(instances[i], topo, params, iterations,
                                      mix_seed(seed, i, 0), false);
    total += global_objective(instances[i], mean_x(run.state));
  }
  return total / static_cast<double>(instances.size());
}

}  // namespace milodo
