#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "milodo/milodo.hpp"
#include "milodo/neuro.hpp"

namespace milodo {

struct StageConfig {
  int k_truncate = 0;  // segment length K_T; must divide k_total
  int k_total = 0;     // unrolled horizon K per instance
  double lr = 0.0;
  int epochs = 0;
  int batch_size = 32;
};

// The curriculum: horizons grow while the learning rate anneals.
std::vector<StageConfig> default_stage_schedule();

struct StageReport {
  StageConfig cfg;
  std::vector<double> epoch_loss;  // mean over all surviving segments
  int discarded_segments = 0;
  int skipped_updates = 0;  // non-finite gradient accumulations
  // Set when an epoch loses more than half of its segments to the NaN guard;
  // the stage stops at that epoch.
  bool aborted = false;
};

struct TrainingRunReport {
  std::vector<StageReport> stages;
};

// Forward K_T iterations from the carried state, taping every step. Returns
// the segment loss (1/K_T) sum_k [f(xbar^k) + r(xbar^k)].
double forward_segment(const Optimizee& opt, const Topology& topo, const MiLoDoParams& params,
                       SimState& state, int k_truncate, SegmentTape& tape);

// One optimizer pass over `instances` with the given stage settings. Instance
// order is reshuffled per epoch; one Adam step is taken per segment position
// across the batch. Carried states are value-only across segment boundaries.
// Segments that go non-finite are discarded and the carried state is re-seeded.
StageReport train_stage(MiLoDoParams& params, const std::vector<Optimizee>& instances,
                        const Topology& topo, const StageConfig& cfg, std::uint64_t base_seed,
                        const std::function<void(int, double)>& on_epoch = nullptr);

// Runs every stage in order, refreshing the Adam state between stages.
// If checkpoint_dir is non-empty a checkpoint is written after each stage.
TrainingRunReport multi_stage_train(MiLoDoParams& params,
                                    const std::vector<Optimizee>& instances,
                                    const Topology& topo,
                                    const std::vector<StageConfig>& stages,
                                    std::uint64_t base_seed,
                                    const std::string& checkpoint_dir = "",
                                    const std::function<void(int, int, double)>& on_epoch =
                                        nullptr);

struct FdCheckResult {
  double max_rel_err = 0.0;
  // Smallest distance of any taped prox input to its soft-threshold kink;
  // callers exclude draws where this is tiny (the loss is not differentiable
  // there and finite differences straddle the kink).
  double kink_distance = 0.0;
  int coords_checked = 0;
};

// Central finite-difference validation of the segment reverse pass on one
// instance. Checks `coords` randomly chosen parameter coordinates (all of
// them when coords <= 0); relative error uses max(|a|, |b|, 1e-6) in the
// denominator.
FdCheckResult fd_gradient_check(const Optimizee& opt, const Topology& topo,
                                const MiLoDoParams& params, int k_truncate,
                                std::uint64_t state_seed, double fd_step = 1e-5,
                                int coords = -1, std::uint64_t coord_seed = 0);

// Mean loss f(xbar) + r(xbar) at the final iterate of an `iterations`-step
// rollout, averaged over the instance set.
double eval_mean_loss_at(const MiLoDoParams& params, const std::vector<Optimizee>& instances,
                         const Topology& topo, int iterations, std::uint64_t seed);

}  // namespace milodo
