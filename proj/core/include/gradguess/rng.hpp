#pragma once

#include <cstdint>
#include <initializer_list>

#include "gradguess/tensor.hpp"

namespace gg {

/// Counter-based deterministic stream: output depends only on
/// (seed, stream id, draw index), never on thread layout. Distribution
/// transforms are hand-rolled so sequences are bit-identical across
/// standard libraries.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id = 0)
      : key_(mix(mix(0x6a09e667f3bcc908ULL ^ seed) ^ stream_id)), counter_(0) {}

  std::uint64_t seed_key() const { return key_; }

  /// Child stream keyed by (this stream, ids...). Used to give each
  /// (epoch, batch, example, replicate) its own independent stream.
  RngStream derived(std::initializer_list<std::uint64_t> ids) const {
    std::uint64_t k = key_;
    for (std::uint64_t id : ids) k = mix(k ^ mix(id + 0x9e3779b97f4a7c15ULL));
    RngStream child(0, 0);
    child.key_ = k;
    child.counter_ = 0;
    return child;
  }

  std::uint64_t next_u64() { return mix(key_ + (++counter_) * 0x9e3779b97f4a7c15ULL); }

  /// Uniform in [0, 1).
  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform in (-1, 1).
  double uniform_pm1() {
    // (x + 1) / 2^63 keeps the value strictly inside (0, 2).
    return static_cast<double>((next_u64() >> 1) + 1) * 0x1.0p-62 - 1.0;
  }

  /// Standard normal via Box-Muller; consumes two draws per value.
  double normal() {
    const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
    const double u2 = next_unit();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
  }

 private:
  static std::uint64_t mix(std::uint64_t x) {
    // splitmix64 finalizer
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  std::uint64_t key_;
  std::uint64_t counter_;
};

template <typename T>
Vec<T> randn(RngStream& rng, std::size_t n) {
  Vec<T> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<T>(rng.normal());
  return v;
}

/// Centered uniform U(-1, 1).
template <typename T>
Vec<T> randu(RngStream& rng, std::size_t n) {
  Vec<T> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<T>(rng.uniform_pm1());
  return v;
}

template <typename T>
Mat<T> randn_mat(RngStream& rng, std::size_t rows, std::size_t cols) {
  Mat<T> m(rows, cols);
  for (auto& x : m.data) x = static_cast<T>(rng.normal());
  return m;
}

template <typename T>
Mat<T> randu_mat(RngStream& rng, std::size_t rows, std::size_t cols) {
  Mat<T> m(rows, cols);
  for (auto& x : m.data) x = static_cast<T>(rng.uniform_pm1());
  return m;
}

}  // namespace gg
