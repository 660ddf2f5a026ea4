#include "gkt/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "gkt/flops.hpp"
#include "gkt/parallel.hpp"

namespace gkt {

double onecycle_lr(std::int64_t step, std::int64_t total_steps, const TrainConfig& cfg) {
  if (step < 0 || step > total_steps || total_steps < 1)
    throw ConfigError("onecycle_lr step out of range");
  const double lr_min = cfg.start_end_factor * cfg.lr_max;
  const double warm = cfg.warmup_frac * static_cast<double>(total_steps);
  const double s = static_cast<double>(step);
  constexpr double kPi = 3.14159265358979323846;
  if (s <= warm) {
    const double t = warm > 0.0 ? s / warm : 1.0;
    return lr_min + (cfg.lr_max - lr_min) * 0.5 * (1.0 - std::cos(kPi * t));
  }
  const double t = (s - warm) / (static_cast<double>(total_steps) - warm);
  return lr_min + (cfg.lr_max - lr_min) * 0.5 * (1.0 + std::cos(kPi * t));
}

AdamState AdamState::for_params(const ParamStore& params) {
  AdamState st;
  st.m.reserve(static_cast<std::size_t>(params.size()));
  st.v.reserve(static_cast<std::size_t>(params.size()));
  for (std::int64_t i = 0; i < params.size(); ++i) {
    st.m.push_back(Tensor::zeros(params.value(i).shape()));
    st.v.push_back(Tensor::zeros(params.value(i).shape()));
  }
  return st;
}

void adam_step(ParamStore& params, const std::vector<Tensor>& grads, AdamState& state,
               double lr) {
  if (static_cast<std::int64_t>(grads.size()) != params.size())
    throw DimensionError("adam_step gradient count mismatch");
  for (const Tensor& g : grads)
    if (!g.all_finite()) throw NumericalError("non-finite gradient in adam_step");
  state.t += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (std::int64_t p = 0; p < params.size(); ++p) {
    Tensor& w = params.value(p);
    Tensor& m = state.m[static_cast<std::size_t>(p)];
    Tensor& v = state.v[static_cast<std::size_t>(p)];
    const Tensor& g = grads[static_cast<std::size_t>(p)];
    for (std::int64_t i = 0; i < w.numel(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

double clip_grad_norm(std::vector<Tensor>& grads, double max_norm) {
  double total = 0.0;
  for (const Tensor& g : grads)
    for (std::int64_t i = 0; i < g.numel(); ++i) total += g[i] * g[i];
  const double norm = std::sqrt(total);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (Tensor& g : grads)
      for (std::int64_t i = 0; i < g.numel(); ++i) g[i] *= s;
  }
  return norm;
}

double evaluate(const OperatorModel& model, const std::vector<DataSample>& samples) {
  if (samples.empty()) throw ConfigError("evaluate needs samples");
  const std::int64_t count = static_cast<std::int64_t>(samples.size());
  std::vector<double> errs(static_cast<std::size_t>(count));
  parallel_for(count, env_thread_count(), [&](std::int64_t i) {
    errs[static_cast<std::size_t>(i)] =
        relative_l2(model.predict(samples[static_cast<std::size_t>(i)]),
                    samples[static_cast<std::size_t>(i)].target);
  });
  double s = 0.0;
  for (double e : errs) s += e;
  return s / static_cast<double>(count);
}

std::uint64_t flop_count(AttnVariant variant, std::int64_t n, std::int64_t d) {
  return dot_product_macs(variant, n, d);
}

namespace {

struct SampleGrads {
  std::vector<Tensor> grads;
  double loss = 0.0;
  bool ok = true;
  std::string error;
};

}  // namespace

RunReport train(OperatorModel& model, const Dataset& dataset, const TrainConfig& cfg) {
  RunReport report;
  report.config = cfg;
  const auto t_start = std::chrono::steady_clock::now();

  const std::int64_t n_train = static_cast<std::int64_t>(dataset.train.size());
  const ModelConfig& mc = model.config();
  report.dot_macs_per_layer = dot_product_macs(
      mc.variant,
      mc.problem == Problem::burgers1d ? mc.seq_n : mc.n_c * mc.n_c,
      AttentionConfig{.d_model = mc.d_model, .n_head = mc.n_head,
                      .coord_dim = mc.coord_dim()}
              .head_width() *
          mc.n_head);

  if (cfg.epochs == 0 || n_train == 0) return report;

  Grid loss_grid = dataset.train.front().target_grid;
  LossConfig loss_cfg;
  if (cfg.gamma >= 0.0) {
    loss_cfg = LossConfig::for_problem(mc.problem, loss_grid.h());
    loss_cfg.gamma = cfg.gamma;
  } else {
    loss_cfg = LossConfig::for_problem(mc.problem, loss_grid.h());
  }

  model.fit_normalizers(dataset.train);

  AdamState adam = AdamState::for_params(model.params());
  const std::int64_t batches_per_epoch = (n_train + cfg.batch_size - 1) / cfg.batch_size;
  const std::int64_t total_steps = cfg.epochs * batches_per_epoch;

  std::vector<Tensor> best_params;
  double best_eval = 1e300;
  std::int64_t best_epoch = -1;
  auto snapshot = [&]() {
    best_params.clear();
    for (std::int64_t p = 0; p < model.params().size(); ++p)
      best_params.push_back(model.params().value(p));
  };
  auto restore_best = [&]() {
    if (best_params.empty()) return;
    for (std::int64_t p = 0; p < model.params().size(); ++p)
      model.params().value(p) = best_params[static_cast<std::size_t>(p)];
  };

  const std::int64_t threads = env_thread_count();
  std::int64_t step = 0;
  const bool has_dropout = mc.dropout_attn > 0.0 || mc.dropout_ffn > 0.0;

  for (std::int64_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t_epoch = std::chrono::steady_clock::now();
    // fixed shuffle per (seed, epoch)
    std::vector<std::int64_t> order(static_cast<std::size_t>(n_train));
    for (std::int64_t i = 0; i < n_train; ++i) order[static_cast<std::size_t>(i)] = i;
    Rng shuffle_rng = Rng::substream(cfg.seed, "shuffle", static_cast<std::uint64_t>(epoch));
    for (std::int64_t i = n_train - 1; i > 0; --i)
      std::swap(order[static_cast<std::size_t>(i)],
                order[static_cast<std::size_t>(shuffle_rng.index(i + 1))]);

    double epoch_loss = 0.0;
    std::int64_t epoch_batches = 0;
    double lr_last = 0.0;
    bool aborted = false;

    for (std::int64_t b = 0; b < batches_per_epoch && !aborted; ++b) {
      const std::int64_t lo = b * cfg.batch_size;
      const std::int64_t hi = std::min(n_train, lo + cfg.batch_size);
      const std::int64_t bs = hi - lo;
      std::vector<SampleGrads> parts(static_cast<std::size_t>(bs));

      parallel_for(bs, threads, [&](std::int64_t si) {
        SampleGrads& part = parts[static_cast<std::size_t>(si)];
        try {
          const DataSample& sample =
              dataset.train[static_cast<std::size_t>(order[static_cast<std::size_t>(lo + si)])];
          Tape tape;
          std::vector<Var> bound = model.params().bind(tape);
          Rng drop_rng = Rng::substream(
              cfg.seed, "dropout",
              static_cast<std::uint64_t>((epoch * 1000000 + b * 1000 + si)));
          Var pred = model.forward(tape, bound, sample, has_dropout ? &drop_rng : nullptr,
                                   has_dropout);
          const Tensor* coeff = loss_cfg.reg == RegKind::darcy_flux ? &sample.input : nullptr;
          Var loss = operator_loss(tape, pred, sample.target, coeff, sample.target_grid,
                                   loss_cfg);
          tape.backward(loss);
          part.loss = tape.value(loss)[0];
          part.grads.reserve(static_cast<std::size_t>(model.params().size()));
          for (Var v : bound) part.grads.push_back(tape.grad(v));
          const std::uint64_t peak = alloc_stats().peak_bytes;
          if (peak > report.peak_tape_bytes) report.peak_tape_bytes = peak;
        } catch (const std::exception& e) {
          part.ok = false;
          part.error = e.what();
        }
      });

      for (const SampleGrads& part : parts) {
        if (!part.ok || !std::isfinite(part.loss)) aborted = true;
      }
      if (aborted) break;

      // fixed-order reduction: mean gradient over the batch
      std::vector<Tensor> grads;
      grads.reserve(static_cast<std::size_t>(model.params().size()));
      for (std::int64_t p = 0; p < model.params().size(); ++p)
        grads.push_back(Tensor::zeros(model.params().value(p).shape()));
      const double inv_bs = 1.0 / static_cast<double>(bs);
      double batch_loss = 0.0;
      for (const SampleGrads& part : parts) {
        batch_loss += part.loss * inv_bs;
        for (std::size_t p = 0; p < grads.size(); ++p)
          for (std::int64_t i = 0; i < grads[p].numel(); ++i)
            grads[p][i] += part.grads[p][i] * inv_bs;
      }

      clip_grad_norm(grads, cfg.clip_norm);
      const double lr = onecycle_lr(step + 1, total_steps, cfg);
      lr_last = lr;
      try {
        adam_step(model.params(), grads, adam, lr);
      } catch (const NumericalError&) {
        aborted = true;
        break;
      }
      ++step;
      epoch_loss += batch_loss;
      ++epoch_batches;
    }

    if (aborted) {
      report.aborted_nan = true;
      report.abort_epoch = epoch;
      restore_best();
      break;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = epoch_batches > 0 ? epoch_loss / static_cast<double>(epoch_batches) : 0.0;
    rec.eval_rel_l2 = dataset.test.empty() ? 0.0 : evaluate(model, dataset.test);
    rec.lr_last = lr_last;
    rec.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_epoch).count();
    report.epochs.push_back(rec);

    if (!dataset.test.empty() && rec.eval_rel_l2 < best_eval) {
      best_eval = rec.eval_rel_l2;
      best_epoch = epoch;
      snapshot();
    }
  }

  if (best_epoch >= 0) {
    report.best_eval = best_eval;
    report.best_epoch = best_epoch;
    restore_best();
  }
  report.total_wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return report;
}

}  // namespace gkt
