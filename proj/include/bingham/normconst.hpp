#pragma once

// Normalising constant of the Bingham distribution on S^3,
//
//     C(lambda) = integral over S^3 of exp(q^T diag(lambda) q) dq,
//
// and its four partial derivatives, without lookup tables. The integral is
// rewritten as an inverse-Laplace contour integral along Re(s) = c and
// evaluated with a weighted trapezoidal rule whose weights are the
// complementary-error-function window w(x) = erfc(x / p1 - p2) / 2. The
// quadrature error decays like sqrt(N) exp(-k sqrt(N)).
//
// Branch choice: each factor (-lambda_k + c + i t) has real part c - lambda_k,
// which is positive whenever lambda_k <= 0 < c. Its argument therefore stays
// in (-pi/2, pi/2) and the principal square root never crosses the branch cut.
// This is why every lambda is shifted to max(lambda) = 0 before evaluation.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "bingham/errors.hpp"
#include "bingham/types.hpp"

namespace bingham {

/// Quadrature constants. Defaults reproduce the reference configuration
/// (N_min = 15, N = 200, r = 2.5, omega_d = 0.5, d = c / 2).
struct IntegratorConfig {
  double r = 2.5;
  double omega_d = 0.5;
  int n_min = 15;
  int n = 200;
  double d_fraction = 0.5;
  /// Largest |Im| / |Re| accepted before a result is rejected as unresolved.
  double max_imag_residual = 1e-6;

  bool operator==(const IntegratorConfig&) const = default;
};

struct IntegratorConstants {
  double c;   ///< abscissa of the vertical contour
  double d;   ///< strip half-width, 0 < d < c
  double h;   ///< trapezoidal step
  double p1;  ///< window scale
  double p2;  ///< window offset
};

inline void validate(const IntegratorConfig& cfg) {
  if (!(cfg.r >= 2.0)) throw InvalidArgument("IntegratorConfig: r must be >= 2");
  if (!(cfg.omega_d >= 1.0 / cfg.r && cfg.omega_d <= 1.0))
    throw InvalidArgument("IntegratorConfig: omega_d must lie in [1/r, 1]");
  if (cfg.n_min < 1) throw InvalidArgument("IntegratorConfig: n_min must be positive");
  if (cfg.n < cfg.n_min) throw InvalidArgument("IntegratorConfig: n must be >= n_min");
  if (!(cfg.d_fraction > 0.0 && cfg.d_fraction < 1.0))
    throw InvalidArgument("IntegratorConfig: d_fraction must lie in (0, 1)");
  if (!(cfg.max_imag_residual > 0.0)) throw InvalidArgument("IntegratorConfig: max_imag_residual must be positive");
}

inline IntegratorConstants derive_constants(const IntegratorConfig& cfg) {
  validate(cfg);
  constexpr double pi = std::numbers::pi;
  const double r = cfg.r, wd = cfg.omega_d, n = cfg.n;
  IntegratorConstants k{};
  k.c = cfg.n_min * pi / (r * r * (1.0 + r) * wd);
  k.d = cfg.d_fraction * k.c;
  k.h = std::sqrt(2.0 * pi * k.d * (1.0 + r) / (wd * n));
  k.p1 = std::sqrt(n * k.h / wd);
  k.p2 = std::sqrt(wd * n * k.h / 4.0);
  return k;
}

/// w(x) = erfc(x / p1 - p2) / 2, non-increasing on x >= 0 with range (0, 1).
inline double weight(double x, double p1, double p2) { return 0.5 * std::erfc(x / p1 - p2); }

/// F(t, lambda) = prod_k (-lambda_k + i t + c)^(-1/2), principal branch per factor.
inline std::complex<double> integrand_F(double t, const Vector4& lambda, double c) {
  std::complex<double> f{1.0, 0.0};
  for (int k = 0; k < 4; ++k) {
    const std::complex<double> z{c - lambda[k], t};
    if (z == 0.0) throw NumericalError("integrand_F: zero factor");
    f /= std::sqrt(z);
  }
  return f;
}

/// dF/dlambda_i = (-lambda_i + i t + c)^(-1) F / 2.
inline std::complex<double> integrand_dF(double t, const Vector4& lambda, double c, int i) {
  const std::complex<double> z{c - lambda[i], t};
  return 0.5 * integrand_F(t, lambda, c) / z;
}

struct NormConstResult {
  double C = 0.0;
  Vector4 dC = Vector4::Zero();
  /// Largest |Im| / |Re| among the five sums before the imaginary parts were dropped.
  double imag_residual = 0.0;

  /// E[q_i^2] in the eigenbasis, i.e. dC_i / C.
  Vector4 moments() const { return dC / C; }
};

/// Evaluates C and its gradient for shifted eigenvalues (all lambda_k <= 0).
///
/// The window weights and phase factors only depend on the configuration,
/// so they are precomputed once; each call then costs one pass over the
/// 2N + 2 nodes with the five sums fused.
class ContourIntegrator {
 public:
  explicit ContourIntegrator(const IntegratorConfig& cfg = {}) : cfg_(cfg), k_(derive_constants(cfg)) {
    const int n = cfg.n;
    nodes_.reserve(2 * n + 2);
    for (int j = -n - 1; j <= n; ++j) {
      const double t = j * k_.h;
      nodes_.push_back({t, weight(std::abs(t), k_.p1, k_.p2) * std::polar(1.0, t)});
    }
    prefactor_ = std::numbers::pi * std::exp(k_.c) * k_.h;
  }

  const IntegratorConfig& config() const noexcept { return cfg_; }
  const IntegratorConstants& constants() const noexcept { return k_; }

  NormConstResult operator()(const Vector4& lambda_shifted) const {
    if (lambda_shifted.maxCoeff() > 1e-9 * std::max(1.0, lambda_shifted.cwiseAbs().maxCoeff()))
      throw InvalidArgument("ContourIntegrator: eigenvalues must be shifted to max 0");
    const double c = k_.c;
    std::complex<double> s{0.0, 0.0};
    std::array<std::complex<double>, 4> ds{};
    for (const auto& node : nodes_) {
      std::array<std::complex<double>, 4> z;
      std::complex<double> f{1.0, 0.0};
      for (int k = 0; k < 4; ++k) {
        z[k] = {c - lambda_shifted[k], node.t};
        f /= std::sqrt(z[k]);
      }
      const std::complex<double> wf = node.weight * f;
      s += wf;
      for (int k = 0; k < 4; ++k) ds[k] += 0.5 * wf / z[k];
    }

    NormConstResult out;
    out.C = prefactor_ * s.real();
    out.imag_residual = std::abs(s.imag()) / std::abs(s.real());
    for (int k = 0; k < 4; ++k) {
      out.dC[k] = prefactor_ * ds[k].real();
      out.imag_residual = std::max(out.imag_residual, std::abs(ds[k].imag()) / std::abs(ds[k].real()));
    }
    check(out, lambda_shifted, cfg_.max_imag_residual);
    return out;
  }

 private:
  struct Node {
    double t;
    std::complex<double> weight;  // w(|t|) e^{i t}
  };

  static void check(const NormConstResult& r, const Vector4& lambda, double max_imag_residual) {
    auto describe = [&] {
      return " (lambda = " + std::to_string(lambda[0]) + ", " + std::to_string(lambda[1]) + ", " +
             std::to_string(lambda[2]) + ", " + std::to_string(lambda[3]) + ")";
    };
    if (!(r.imag_residual <= max_imag_residual))
      throw NumericalError("normalizing constant: imaginary residual " + std::to_string(r.imag_residual) +
                           " exceeds tolerance" + describe());
    if (!(r.C > 0.0) || !std::isfinite(r.C))
      throw NumericalError("normalizing constant: non-positive or non-finite C" + describe());
    for (int k = 0; k < 4; ++k) {
      if (!(r.dC[k] > 0.0) || !std::isfinite(r.dC[k]))
        throw NumericalError("normalizing constant: non-positive derivative" + describe());
    }
  }

  IntegratorConfig cfg_;
  IntegratorConstants k_;
  double prefactor_ = 0.0;
  std::vector<Node> nodes_;
};

/// C and dC/dlambda for arbitrary eigenvalues. The vector is shifted to
/// max 0, evaluated, and the result rescaled by exp(max(lambda)), which
/// follows from q^T q = 1 on the sphere.
inline NormConstResult normalizing_constant(const Vector4& lambda, const ContourIntegrator& integrator) {
  const double top = lambda.maxCoeff();
  NormConstResult r = integrator(lambda.array() - top);
  if (top != 0.0) {
    const double scale = std::exp(top);
    r.C *= scale;
    r.dC *= scale;
  }
  return r;
}

inline NormConstResult normalizing_constant(const Vector4& lambda, const IntegratorConfig& cfg = {}) {
  return normalizing_constant(lambda, ContourIntegrator(cfg));
}

struct ProbeRow {
  int n;
  double C;
  double abs_diff;  ///< |C(n) - C(reference)|
  double rel_diff;
  double imag_residual;
};

struct AccuracyProbe {
  int reference_n;
  double reference_C;
  std::vector<ProbeRow> rows;
  /// Whether abs_diff strictly decreases along rows with n >= n_min.
  bool monotone = true;
  /// abs_diff[i+1] / abs_diff[i]; the convergence rate logged for inspection.
  std::vector<double> ratios;
};

/// Self-convergence study: C at each n in `n_values` against C at
/// `reference_n` (defaults to the largest n in the list), all other constants
/// taken from `cfg`. Coarse rows are expected to be under-resolved, so the
/// residual guard applies to the reference evaluation only; each row carries
/// its own residual instead.
inline AccuracyProbe accuracy_probe(const Vector4& lambda, const IntegratorConfig& cfg, const std::vector<int>& n_values,
                                    int reference_n = 0) {
  if (n_values.empty()) throw InvalidArgument("accuracy_probe: empty n list");
  if (!std::is_sorted(n_values.begin(), n_values.end()))
    throw InvalidArgument("accuracy_probe: n values must be increasing");
  AccuracyProbe probe;
  probe.reference_n = reference_n > 0 ? reference_n : n_values.back();
  auto eval = [&](int n, bool guarded) {
    IntegratorConfig c = cfg;
    c.n = n;
    if (!guarded) c.max_imag_residual = std::numeric_limits<double>::infinity();
    return normalizing_constant(lambda, c);
  };
  probe.reference_C = eval(probe.reference_n, true).C;
  for (int n : n_values) {
    const auto r = eval(n, false);
    const double diff = std::abs(r.C - probe.reference_C);
    probe.rows.push_back({n, r.C, diff, diff / std::abs(probe.reference_C), r.imag_residual});
  }
  for (std::size_t i = 1; i < probe.rows.size(); ++i) {
    const auto& prev = probe.rows[i - 1];
    const auto& cur = probe.rows[i];
    probe.ratios.push_back(prev.abs_diff > 0 ? cur.abs_diff / prev.abs_diff : 0.0);
    if (prev.n >= cfg.n_min && cur.n != probe.reference_n && !(cur.abs_diff < prev.abs_diff)) probe.monotone = false;
  }
  return probe;
}

}  // namespace bingham
