#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lav/encoder.hpp"
#include "lav/loss.hpp"
#include "lav/synthdata.hpp"

namespace lav {

struct TrainConfig {
  double learning_rate = 1e-4;
  double weight_decay = 1e-5;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  /// Frames sampled per video, one per uniform chunk.
  Index frames_per_video = 20;
  /// Video pairs per optimizer step; the step loss is their mean.
  int batch_pairs = 2;
  int steps = 1000;
  /// Measure regularizer gaps in original frame indices of the sampled frames
  /// instead of sampled positions 0..p-1.
  bool frame_time_gaps = false;
  std::uint64_t seed = 0;
  /// Run the finite-difference gate before the first step.
  bool gradient_check = true;

  void validate() const;
};

struct StepRecord {
  int step = 0;
  double total = 0;
  double alignment = 0;
  double reg_x = 0;
  double reg_y = 0;
};

struct TrainResult {
  EncoderParams initial_params;
  EncoderParams params;
  std::vector<StepRecord> history;
  std::string rng_state;
};

/// One strictly increasing index per chunk of the p-way uniform partition of [0, T).
std::vector<Index> sample_frames(Index t, Index p, Rng& rng);

/// Random disjoint pairs within each group. Groups with fewer than two members
/// are skipped with a warning; an odd leftover is paired with a random other
/// member of its group.
std::vector<std::pair<std::size_t, std::size_t>> make_pairs(const std::vector<std::vector<std::size_t>>& groups,
                                                            Rng& rng, std::vector<std::string>* warnings = nullptr);

/// Loss and parameter gradient of one video pair, given pre-stacked encoder inputs.
struct PairGradient {
  LossReport report;
  EncoderParams grads;
};
PairGradient pair_gradient(const Matrix& inputs_x, const Matrix& inputs_y, const EncoderParams& params,
                           const LavConfig& loss_cfg, std::span<const Index> times_x = {},
                           std::span<const Index> times_y = {});

/// Largest per-tensor relative error between analytic and central-difference
/// gradients of the full loss-through-encoder pipeline on a miniature
/// instance (T = 6, d_in = 3, hidden = [5], embed = 4).
double pipeline_gradient_error(const LavConfig& loss_cfg, std::uint64_t seed);

inline constexpr double kPipelineGradTolerance = 1e-4;

using StepCallback = std::function<void(const StepRecord&, const EncoderParams&)>;

/// Trains on the training split of ds. Deterministic given all configs.
TrainResult train(const Dataset& ds, const EncoderConfig& enc_cfg, const TrainConfig& train_cfg,
                  const LavConfig& loss_cfg, const StepCallback& on_step = {});

}  // namespace lav
