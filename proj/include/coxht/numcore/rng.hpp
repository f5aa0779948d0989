#pragma once

#include <array>
#include <cstdint>
#include <limits>

#include <Eigen/Core>

namespace coxht {

/// Counter-based random stream (Philox4x32-10).
///
/// A stream is addressed by (base_seed, stream_index, substream). The draw
/// sequence depends only on that address, so Monte Carlo replications can be
/// scheduled in any order or on any thread and still reproduce bit-identical
/// draws. Replication r uses stream_index r; the substream separates the
/// independent pieces a replication needs (covariates, noise vector, ...).
class RngStream {
public:
  using result_type = std::uint32_t;

  RngStream(std::uint64_t base_seed, std::uint64_t stream_index, std::uint32_t substream = 0);

  std::uint64_t base_seed() const { return seed_; }
  std::uint64_t stream_index() const { return stream_; }
  std::uint32_t substream_id() const { return sub_; }

  /// Fresh stream with the same (seed, index) and a different substream id.
  RngStream substream(std::uint32_t id) const { return RngStream(seed_, stream_, id); }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()();

  /// Uniform on the open interval (0, 1), 53-bit resolution.
  double uniform();
  /// Uniform on (lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal (Box-Muller on two 53-bit uniforms).
  double normal();

private:
  void refill();

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint32_t sub_;
  std::uint32_t block_ = 0;
  std::array<std::uint32_t, 4> buffer_{};
  int next_word_ = 4;
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

/// `count` standard normal draws from `stream`.
Eigen::VectorXd normal_sample(RngStream& stream, Eigen::Index count);

}  // namespace coxht
