#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gkt/attention.hpp"

namespace gkt {

struct BenchRow {
  std::string variant;
  std::int64_t n = 0;
  std::int64_t d = 0;  // d_model
  std::uint64_t dot_macs_measured = 0;     // live counter around the raw attention
  std::uint64_t dot_macs_closed_form = 0;  // 2n^2*w or 2n*w^2 at the head width
  double wall_ms_median = 0.0;             // isolated encoder-layer forward
  std::uint64_t peak_bytes = 0;            // transient tensor bytes during forward
  std::uint64_t max_single_alloc = 0;      // largest single buffer requested
};

/// Times an isolated encoder layer forward (median of `reps` after `warmup`)
/// and audits the raw attention's multiply-add count and buffer usage.
BenchRow bench_encoder_layer(AttnVariant variant, std::int64_t n, std::int64_t d_model,
                             std::int64_t reps = 5, std::int64_t warmup = 1);

std::vector<BenchRow> bench_sweep(const std::vector<AttnVariant>& variants,
                                  const std::vector<std::int64_t>& ns, std::int64_t d_model,
                                  std::int64_t reps = 5);

}  // namespace gkt
