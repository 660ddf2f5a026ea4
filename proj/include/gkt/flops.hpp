#pragma once

#include <cstdint>

namespace gkt::flops {

struct Counter {
  std::uint64_t macs = 0;  // one multiply-add per scalar FMA
  std::uint64_t exps = 0;  // exponential evaluations, weight c_e = 1
};

inline Counter& counter() {
  thread_local Counter c;
  return c;
}

inline void reset() { counter() = Counter{}; }
inline void add_macs(std::uint64_t n) { counter().macs += n; }
inline void add_exps(std::uint64_t n) { counter().exps += n; }
inline std::uint64_t macs() { return counter().macs; }

/// Snapshot/delta helper for counting a single region.
class Scope {
 public:
  Scope() : start_(counter()) {}
  std::uint64_t macs() const { return counter().macs - start_.macs; }
  std::uint64_t exps() const { return counter().exps - start_.exps; }

 private:
  Counter start_;
};

}  // namespace gkt::flops
