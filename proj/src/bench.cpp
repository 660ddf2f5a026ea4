#include "gkt/bench.hpp"

#include <algorithm>
#include <chrono>

#include "gkt/flops.hpp"
#include "gkt/params.hpp"

namespace gkt {

BenchRow bench_encoder_layer(AttnVariant variant, std::int64_t n, std::int64_t d_model,
                             std::int64_t reps, std::int64_t warmup) {
  AttentionConfig cfg;
  cfg.variant = variant;
  cfg.d_model = d_model;
  cfg.n_head = 1;
  cfg.coord_dim = 1;
  cfg.init_eta = 1e-2;
  cfg.init_delta = 1e-2;

  Rng rng = Rng::substream(20240901, "bench-" + to_string(variant), static_cast<std::uint64_t>(n));
  ParamStore store;
  EncoderLayer layer = EncoderLayer::create(store, cfg, rng, "bench");
  Tensor features = rng.uniform_tensor({n, d_model}, -1.0, 1.0);
  Tensor coords({n, 1});
  for (std::int64_t i = 0; i < n; ++i)
    coords.at(i, 0) = static_cast<double>(i) / static_cast<double>(n);

  BenchRow row;
  row.variant = to_string(variant);
  row.n = n;
  row.d = d_model;
  const std::int64_t w = cfg.head_width();
  row.dot_macs_closed_form = dot_product_macs(variant, n, w);

  // raw attention MAC audit at the head width
  {
    Tensor q = rng.uniform_tensor({n, w}, -1.0, 1.0);
    Tensor k = rng.uniform_tensor({n, w}, -1.0, 1.0);
    Tensor v = rng.uniform_tensor({n, w}, -1.0, 1.0);
    Tape tape;
    Var qv = tape.leaf(q), kv = tape.leaf(k), vv = tape.leaf(v);
    flops::Scope scope;
    switch (variant) {
      case AttnVariant::fourier: attn_fourier(qv, kv, vv, false); break;
      case AttnVariant::galerkin: attn_galerkin(qv, kv, vv, false); break;
      case AttnVariant::softmax: attn_softmax(qv, kv, vv); break;
      case AttnVariant::linear_softmax: attn_linear_softmax(qv, kv, vv); break;
    }
    row.dot_macs_measured = scope.macs();
  }

  std::vector<double> times;
  times.reserve(static_cast<std::size_t>(reps));
  for (std::int64_t r = 0; r < warmup + reps; ++r) {
    alloc_stats_reset();
    const auto t0 = std::chrono::steady_clock::now();
    {
      Tape tape;
      std::vector<Var> bound = store.bind(tape);
      Var x = tape.leaf(features);
      layer.forward(tape, bound, x, coords);
    }
    const double ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
            .count();
    if (r >= warmup) {
      times.push_back(ms);
      row.peak_bytes = std::max(row.peak_bytes, alloc_stats().peak_bytes);
      row.max_single_alloc = std::max(row.max_single_alloc, alloc_stats().max_single_bytes);
    }
  }
  std::sort(times.begin(), times.end());
  row.wall_ms_median = times[times.size() / 2];
  return row;
}

std::vector<BenchRow> bench_sweep(const std::vector<AttnVariant>& variants,
                                  const std::vector<std::int64_t>& ns, std::int64_t d_model,
                                  std::int64_t reps) {
  std::vector<BenchRow> rows;
  for (AttnVariant v : variants)
    for (std::int64_t n : ns) rows.push_back(bench_encoder_layer(v, n, d_model, reps));
  return rows;
}

}  // namespace gkt
