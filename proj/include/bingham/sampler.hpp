#pragma once

// Rejection sampler for the Bingham distribution with an angular central
// Gaussian (ACG) envelope.
//
// In the eigenbasis the target density is f(x) ~ exp(x^T L x), L =
// diag(lambda_shifted) <= 0. The ACG proposal has density
// g(x) ~ (x^T W x)^(-2) with W = I - (2/b) L, drawn as x = z / |z|,
// z ~ N(0, W^-1). With b solving sum_i 1 / (b - 2 lambda_i) = 1 the ratio is
// bounded,
//
//     f(x) / g(x) <= exp(-(4 - b) / 2) (4 / b)^2,
//
// so a proposal is accepted with probability
//
//     exp(x^T L x + (4 - b) / 2) (x^T W x)^2 (b / 4)^2   <= 1.
//
// Draws are rotated back by D and returned without sign normalisation.
//
// Random numbers come from std::mt19937_64 (whose output sequence is fixed
// by the standard). Uniforms take the top 53 bits and normals use
// Box-Muller, so a seed reproduces the same stream on every run.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "bingham/distribution.hpp"
#include "bingham/errors.hpp"
#include "bingham/quaternion.hpp"
#include "bingham/types.hpp"

namespace bingham {

/// SplitMix64 finaliser; used to derive independent stream seeds.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for sub-stream `stream` of `base`. Distinct streams give
/// statistically independent generators.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  return mix_seed(mix_seed(base) ^ mix_seed(stream + 0x632be59bd9b4e019ULL));
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform on [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform on (0, 1).
  double uniform_open() { return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53; }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform_open();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  /// Uniform draw from S^3 (the Bingham distribution with A = O).
  Quatd uniform_quaternion() {
    Vector4 v;
    do {
      for (int i = 0; i < 4; ++i) v[i] = normal();
    } while (v.squaredNorm() < 1e-300);
    return Quatd(Vector4(v.normalized()));
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Root b in (0, 4] of sum_i 1 / (b - 2 lambda_i) = 1, by bisection.
inline double solve_envelope(const Vector4& lambda_shifted) {
  auto excess = [&](double b) {
    double s = 0.0;
    for (int i = 0; i < 4; ++i) s += 1.0 / (b - 2.0 * lambda_shifted[i]);
    return s - 1.0;
  };
  double lo = 0.0, hi = 4.0;
  if (excess(hi) >= 0.0) return hi;
  for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (excess(mid) > 0.0)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

struct SamplerStats {
  std::uint64_t proposals = 0;
  std::uint64_t accepts = 0;
  double acceptance_rate() const { return proposals ? static_cast<double>(accepts) / proposals : 0.0; }
};

/// Single-owner sampler state. For parallel sampling create one sampler per
/// thread with seeds from `derive_seed`.
class BinghamSampler {
 public:
  static constexpr std::uint64_t kWindow = 100000;
  static constexpr double kMinAcceptance = 1e-4;

  BinghamSampler(const BinghamParam& param, std::uint64_t seed)
      : d_(param.d()), lambda_(param.lambda()), seed_(seed), rng_(seed) {
    b_ = solve_envelope(lambda_);
    for (int i = 0; i < 4; ++i) {
      const double w = 1.0 - 2.0 * lambda_[i] / b_;
      omega_[i] = w;
      inv_sqrt_omega_[i] = 1.0 / std::sqrt(w);
    }
    log_offset_ = 0.5 * (4.0 - b_) + 2.0 * std::log(b_ / 4.0);
  }

  std::uint64_t seed() const noexcept { return seed_; }
  double envelope_b() const noexcept { return b_; }
  /// M = sup f/g = exp(-(4 - b)/2) (4/b)^2 for the unnormalised densities.
  double acceptance_bound() const { return std::exp(-0.5 * (4.0 - b_)) * (16.0 / (b_ * b_)); }
  const SamplerStats& stats() const noexcept { return stats_; }

  Quatd draw() {
    for (;;) {
      Vector4 x;
      for (int i = 0; i < 4; ++i) x[i] = rng_.normal() * inv_sqrt_omega_[i];
      x.normalize();
      ++stats_.proposals;
      ++window_proposals_;

      double quad_l = 0.0, quad_w = 0.0;
      for (int i = 0; i < 4; ++i) {
        const double xi2 = x[i] * x[i];
        quad_l += lambda_[i] * xi2;
        quad_w += omega_[i] * xi2;
      }
      const double log_ratio = quad_l + 2.0 * std::log(quad_w) + log_offset_;
      if (std::log(rng_.uniform_open()) < log_ratio) {
        ++stats_.accepts;
        ++window_accepts_;
        return Quatd(Vector4(d_ * x));
      }
      if (window_proposals_ >= kWindow) {
        if (static_cast<double>(window_accepts_) / window_proposals_ < kMinAcceptance)
          throw SamplerError("Bingham sampler: acceptance rate below 1e-4 over 1e5 proposals; "
                             "eigenvalue spread is pathological for the ACG envelope");
        window_proposals_ = window_accepts_ = 0;
      }
    }
  }

  std::vector<Quatd> draw(std::size_t n) {
    std::vector<Quatd> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(draw());
    return out;
  }

 private:
  Matrix4 d_;
  Vector4 lambda_;
  Vector4 omega_;
  Vector4 inv_sqrt_omega_;
  double b_ = 4.0;
  double log_offset_ = 0.0;
  std::uint64_t seed_;
  Rng rng_;
  SamplerStats stats_;
  std::uint64_t window_proposals_ = 0;
  std::uint64_t window_accepts_ = 0;
};

/// n independent draws from B(param); deterministic in `seed`.
inline std::vector<Quatd> sample(const BinghamParam& param, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw InvalidArgument("sample: n must be positive");
  BinghamSampler s(param, seed);
  return s.draw(n);
}

}  // namespace bingham
