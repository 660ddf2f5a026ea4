#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gkt/model.hpp"

namespace gkt {

struct TrainConfig {
  std::int64_t epochs = 20;
  std::int64_t batch_size = 8;
  double lr_max = 1e-3;
  double warmup_frac = 0.3;        // peak at the end of epoch 30 of 100
  double start_end_factor = 1e-4;  // lr starts and ends at this times lr_max
  double clip_norm = 1.0;
  double gamma = -1.0;             // < 0 picks the problem default
  std::uint64_t seed = 1127802;
};

/// Cosine 1cycle: ramp start_end_factor*lr_max -> lr_max over the warmup
/// fraction of steps, then anneal back to start_end_factor*lr_max.
double onecycle_lr(std::int64_t step, std::int64_t total_steps, const TrainConfig& cfg);

struct AdamState {
  std::vector<Tensor> m, v;
  std::int64_t t = 0;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  static AdamState for_params(const ParamStore& params);
};

/// Textbook ADAM with bias correction; throws NumericalError on a non-finite
/// gradient so the caller can abort-with-report.
void adam_step(ParamStore& params, const std::vector<Tensor>& grads, AdamState& state,
               double lr);

/// Global L2 clip over all parameter gradients; returns the pre-clip norm.
double clip_grad_norm(std::vector<Tensor>& grads, double max_norm);

struct EpochRecord {
  std::int64_t epoch = 0;
  double train_loss = 0.0;
  double eval_rel_l2 = 0.0;
  double lr_last = 0.0;
  double wall_seconds = 0.0;  // excluded from determinism comparisons
};

struct RunReport {
  TrainConfig config;
  std::string lr_shape = "cosine";
  std::vector<EpochRecord> epochs;
  double best_eval = 0.0;
  std::int64_t best_epoch = -1;
  bool aborted_nan = false;
  std::int64_t abort_epoch = -1;
  std::uint64_t dot_macs_per_layer = 0;  // closed-form, model (n, head width)
  std::uint64_t peak_tape_bytes = 0;
  double total_wall_seconds = 0.0;
};

/// Deterministic mini-batch training: fixed shuffle per (seed, epoch),
/// per-sample tapes with fixed-order gradient reduction, eval after each
/// epoch, best-eval checkpointing. The model holds the best parameters when
/// this returns.
RunReport train(OperatorModel& model, const Dataset& dataset, const TrainConfig& cfg);

/// Mean relative L2 over a split.
double evaluate(const OperatorModel& model, const std::vector<DataSample>& samples);

/// Closed-form multiply-add count of the attention dot products (per layer).
std::uint64_t flop_count(AttnVariant variant, std::int64_t n, std::int64_t d);

}  // namespace gkt
