#pragma once

// Parameter recovery from sampled quaternions, KL divergences, and the
// ablation harness built on top of them.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "bingham/distribution.hpp"
#include "bingham/errors.hpp"
#include "bingham/loss.hpp"
#include "bingham/normconst.hpp"
#include "bingham/quaternion.hpp"
#include "bingham/sampler.hpp"
#include "bingham/types.hpp"

namespace bingham {

// ---------------------------------------------------------------------------
// KL divergence

/// KL(p || q) = tr((A_p - A_q) M_p) - ln C_p + ln C_q, with M_p = E_p[x x^T]
/// and both matrices in shifted form.
inline double kld_analytic(const BinghamParam& p, const BinghamParam& q, const ContourIntegrator& integrator) {
  const NormConstResult nc_p = integrator(p.lambda());
  const NormConstResult nc_q = integrator(q.lambda());
  const Matrix4 m_p = second_moments(p, nc_p);
  return ((p.a_shifted() - q.a_shifted()).cwiseProduct(m_p)).sum() - std::log(nc_p.C) + std::log(nc_q.C);
}

inline double kld_analytic(const BinghamParam& p, const BinghamParam& q, const IntegratorConfig& cfg = {}) {
  return kld_analytic(p, q, ContourIntegrator(cfg));
}

struct MonteCarloEstimate {
  double estimate = 0.0;
  double std_error = 0.0;
};

/// (1/n) sum [ln p(x_i) - ln q(x_i)] over x_i ~ p.
inline MonteCarloEstimate kld_monte_carlo(const BinghamParam& p, const BinghamParam& q, std::size_t n,
                                          std::uint64_t seed, const ContourIntegrator& integrator) {
  if (n < 100) throw InvalidArgument("kld_monte_carlo: need at least 100 samples");
  const double log_cp = std::log(integrator(p.lambda()).C);
  const double log_cq = std::log(integrator(q.lambda()).C);
  const Matrix4 ap = p.a_shifted();
  const Matrix4 aq = q.a_shifted();

  BinghamSampler sampler(p, seed);
  double mean = 0.0, m2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vector4 x = sampler.draw().vec();
    const double term = (x.dot(ap * x) - log_cp) - (x.dot(aq * x) - log_cq);
    const double delta = term - mean;
    mean += delta / static_cast<double>(i + 1);
    m2 += delta * (term - mean);
  }
  const double var = m2 / static_cast<double>(n - 1);
  return {mean, std::sqrt(var / static_cast<double>(n))};
}

inline MonteCarloEstimate kld_monte_carlo(const BinghamParam& p, const BinghamParam& q, std::size_t n,
                                          std::uint64_t seed, const IntegratorConfig& cfg = {}) {
  return kld_monte_carlo(p, q, n, seed, ContourIntegrator(cfg));
}

// ---------------------------------------------------------------------------
// Fitting

enum class LossKind { bnll, qcqp };
enum class OptimizerKind { gradient_descent, momentum, adam };

struct FitConfig {
  LossKind loss = LossKind::bnll;
  int max_iters = 20000;
  OptimizerKind optimizer = OptimizerKind::adam;
  double learning_rate = 0.3;
  double momentum = 0.9;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  /// Starting point; zero is the uniform distribution.
  Theta init_theta = Theta::Zero();
  /// The optimisation starts from init_scale * init_theta.
  double init_scale = 1.0;
  /// Recorded for provenance; the optimiser itself is deterministic.
  std::uint64_t seed = 0;
  int record_every = 100;
  /// Stop once |loss(k) - loss(k - stop_window)| < stop_tolerance.
  double stop_tolerance = 1e-10;
  int stop_window = 100;
  IntegratorConfig integrator;
};

struct TracePoint {
  int iter = 0;
  double loss = 0.0;
  /// KL(ground truth || current), clipped at 0; NaN without a ground truth.
  double kld = std::numeric_limits<double>::quiet_NaN();
  /// Geodesic angle between current and true modes, degrees; NaN without a ground truth.
  double mode_error_deg = std::numeric_limits<double>::quiet_NaN();
};

struct FitReport {
  std::vector<TracePoint> trace;
  Theta final_theta = Theta::Zero();
  BinghamParam final_param;
  int iterations = 0;
  bool converged = false;
  double wall_time_s = 0.0;

  const TracePoint& final_point() const { return trace.back(); }
};

namespace detail {

/// Ground-truth quantities reused at every trace point.
struct TruthReference {
  BinghamParam param;
  Matrix4 a_shifted;
  Matrix4 moments;
  double log_c;
  Quatd mode;

  TruthReference(const BinghamParam& p, const ContourIntegrator& integrator)
      : param(p), a_shifted(p.a_shifted()), mode(bingham::mode(p)) {
    const NormConstResult nc = integrator(p.lambda());
    moments = second_moments(p, nc);
    log_c = std::log(nc.C);
  }

  double kld_to(const BinghamParam& fit, double log_c_fit) const {
    return ((a_shifted - fit.a_shifted()).cwiseProduct(moments)).sum() - log_c + log_c_fit;
  }
};

inline std::vector<double> to_vector(const Theta& t) { return {t.data(), t.data() + t.size()}; }

inline bool all_finite(const LossValue& lv) {
  return std::isfinite(lv.value) && lv.grad_theta.allFinite();
}

}  // namespace detail

/// Recovers theta from samples by first-order descent on the chosen loss.
/// When `truth` is given, every recorded trace point carries KL(truth || fit)
/// and the mode error.
///
/// Throws DivergenceError, carrying the iteration and theta, on a non-finite
/// loss or gradient or when the normalising constant cannot be evaluated.
inline FitReport fit_distribution(std::span<const Quatd> samples, const FitConfig& cfg,
                                  const std::optional<BinghamParam>& truth = std::nullopt) {
  if (samples.empty()) throw InvalidArgument("fit_distribution: no samples");
  if (cfg.max_iters < 1) throw InvalidArgument("fit_distribution: max_iters must be >= 1");
  if (!(cfg.learning_rate > 0.0)) throw InvalidArgument("fit_distribution: learning_rate must be positive");
  if (cfg.record_every < 1) throw InvalidArgument("fit_distribution: record_every must be >= 1");
  if (cfg.stop_window < 1) throw InvalidArgument("fit_distribution: stop_window must be >= 1");
  if (!cfg.init_theta.allFinite() || !std::isfinite(cfg.init_scale))
    throw InvalidArgument("fit_distribution: initial parameter is not finite");

  const auto start = std::chrono::steady_clock::now();
  const ContourIntegrator integrator(cfg.integrator);
  const Matrix4 scatter = scatter_matrix(samples);
  std::optional<detail::TruthReference> ref;
  if (truth) ref.emplace(*truth, integrator);

  Theta theta = cfg.init_scale * cfg.init_theta;
  Theta velocity = Theta::Zero();
  Theta m1 = Theta::Zero(), m2 = Theta::Zero();
  double beta1_pow = 1.0, beta2_pow = 1.0;

  FitReport report;
  std::vector<double> history;
  history.reserve(static_cast<std::size_t>(cfg.max_iters) + 1);

  auto evaluate = [&](const BinghamParam& p, int iter) -> std::pair<LossValue, double> {
    try {
      if (cfg.loss == LossKind::bnll) {
        const NormConstResult nc = integrator(p.lambda());
        LossValue lv;
        lv.value = -(p.a_shifted().cwiseProduct(scatter)).sum() + std::log(nc.C);
        lv.grad_a = -scatter + p.d() * nc.moments().asDiagonal() * p.d().transpose();
        lv.grad_a = 0.5 * (lv.grad_a + lv.grad_a.transpose());
        lv.grad_theta = theta_pullback(lv.grad_a);
        return {lv, std::log(nc.C)};
      }
      LossValue lv = qcqp_from_scatter(p, scatter);
      const double log_c = ref ? std::log(integrator(p.lambda()).C) : 0.0;
      return {lv, log_c};
    } catch (const NumericalError& e) {
      // ln C is not finite where the integrator gives up, so this is a divergence.
      throw DivergenceError(std::string(e.what()) + " at iteration " + std::to_string(iter), iter,
                            detail::to_vector(theta));
    }
  };

  auto record = [&](int iter, const BinghamParam& p, double loss, double log_c) {
    TracePoint tp;
    tp.iter = iter;
    tp.loss = loss;
    if (ref) {
      tp.kld = std::max(0.0, ref->kld_to(p, log_c));
      tp.mode_error_deg = dist_geodesic(mode(p), ref->mode) * 180.0 / std::numbers::pi;
    }
    report.trace.push_back(tp);
  };

  int iter = 0;
  for (; iter < cfg.max_iters; ++iter) {
    const BinghamParam param = BinghamParam::from_theta(theta);
    const auto [lv, log_c] = evaluate(param, iter);
    if (!detail::all_finite(lv))
      throw DivergenceError("fit_distribution: non-finite loss or gradient at iteration " + std::to_string(iter),
                            iter, detail::to_vector(theta));
    history.push_back(lv.value);
    if (iter % cfg.record_every == 0) record(iter, param, lv.value, log_c);

    if (iter >= cfg.stop_window &&
        std::abs(lv.value - history[static_cast<std::size_t>(iter - cfg.stop_window)]) < cfg.stop_tolerance) {
      report.converged = true;
      break;
    }

    const Theta& g = lv.grad_theta;
    switch (cfg.optimizer) {
      case OptimizerKind::gradient_descent:
        theta -= cfg.learning_rate * g;
        break;
      case OptimizerKind::momentum:
        velocity = cfg.momentum * velocity + g;
        theta -= cfg.learning_rate * velocity;
        break;
      case OptimizerKind::adam: {
        m1 = cfg.adam_beta1 * m1 + (1.0 - cfg.adam_beta1) * g;
        m2 = cfg.adam_beta2 * m2 + (1.0 - cfg.adam_beta2) * g.cwiseAbs2();
        beta1_pow *= cfg.adam_beta1;
        beta2_pow *= cfg.adam_beta2;
        const Theta m1_hat = m1 / (1.0 - beta1_pow);
        const Theta m2_hat = m2 / (1.0 - beta2_pow);
        theta -= cfg.learning_rate * m1_hat.cwiseQuotient((m2_hat.cwiseSqrt().array() + cfg.adam_epsilon).matrix());
        break;
      }
    }
    if (!theta.allFinite())
      throw DivergenceError("fit_distribution: parameters became non-finite at iteration " + std::to_string(iter),
                            iter, detail::to_vector(theta));
  }

  report.iterations = iter;
  report.final_theta = theta;
  report.final_param = BinghamParam::from_theta(theta);
  const auto [final_lv, final_log_c] = evaluate(report.final_param, iter);
  if (!std::isfinite(final_lv.value))
    throw DivergenceError("fit_distribution: non-finite final loss", iter, detail::to_vector(theta));
  if (report.trace.empty() || report.trace.back().iter != iter)
    record(iter, report.final_param, final_lv.value, final_log_c);
  report.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

inline FitReport fit_distribution(const std::vector<Quatd>& samples, const FitConfig& cfg,
                                  const std::optional<BinghamParam>& truth = std::nullopt) {
  return fit_distribution(std::span<const Quatd>(samples), cfg, truth);
}

// ---------------------------------------------------------------------------
// Random parameters and ablations

/// D = omega_left(q) with q uniform on S^3, lambda ~ Uniform[0, max_eigenvalue)^4,
/// A = D diag(lambda) D^T (canonicalisation shifts the spectrum).
inline BinghamParam random_ground_truth(Rng& rng, double max_eigenvalue = 1500.0) {
  const Quatd q = rng.uniform_quaternion();
  Vector4 lambda;
  for (int i = 0; i < 4; ++i) lambda[i] = max_eigenvalue * rng.uniform();
  return BinghamParam::from_eigen(omega_left(q), lambda);
}

enum class AblationAxis { n_sample, init_scale };

struct AblationConfig {
  AblationAxis axis = AblationAxis::n_sample;
  std::vector<double> values;
  int trials = 1;
  std::uint64_t seed = 0;
  FitConfig fit;
  /// Starting matrix, scaled by init_scale (or by the swept value).
  Matrix4 init = presets::a_init();
  int n_sample = 100;
  double init_scale = 1.0;
  /// Worker threads; 0 picks std::thread::hardware_concurrency().
  unsigned threads = 0;
};

struct AblationRow {
  std::size_t value_index = 0;
  double value = 0.0;
  int trial = 0;
  std::uint64_t truth_seed = 0;
  std::uint64_t sample_seed = 0;
  bool ok = false;
  double final_kld = std::numeric_limits<double>::quiet_NaN();
  double final_loss = std::numeric_limits<double>::quiet_NaN();
  double mode_error_deg = std::numeric_limits<double>::quiet_NaN();
  int iterations = 0;
  std::string error;
};

struct AblationSummary {
  double value = 0.0;
  int trials_ok = 0;
  double median = std::numeric_limits<double>::quiet_NaN();
  double min = std::numeric_limits<double>::quiet_NaN();
  double max = std::numeric_limits<double>::quiet_NaN();
};

struct AblationResult {
  std::vector<AblationRow> rows;  ///< ordered by (value index, trial)
  std::vector<AblationSummary> summary;
};

inline double median_of(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Runs `trials` fits per swept value. Trial t uses the same random ground
/// truth for every value (seeded by derive_seed(seed, t)), so values are
/// compared on paired problems; the sample set is seeded per (trial, value).
/// Failed trials are recorded with their error message and excluded from the
/// summary statistics.
inline AblationResult ablation_sweep(const AblationConfig& cfg) {
  if (cfg.values.empty()) throw InvalidArgument("ablation_sweep: no values");
  if (cfg.trials < 1) throw InvalidArgument("ablation_sweep: trials must be >= 1");

  AblationResult result;
  result.rows.resize(cfg.values.size() * static_cast<std::size_t>(cfg.trials));
  for (std::size_t vi = 0; vi < cfg.values.size(); ++vi) {
    for (int t = 0; t < cfg.trials; ++t) {
      AblationRow& row = result.rows[vi * cfg.trials + t];
      row.value_index = vi;
      row.value = cfg.values[vi];
      row.trial = t;
      row.truth_seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(t));
      row.sample_seed = derive_seed(row.truth_seed, vi + 1);
    }
  }

  auto run_one = [&](AblationRow& row) {
    try {
      Rng truth_rng(row.truth_seed);
      const BinghamParam truth = random_ground_truth(truth_rng);
      int n_sample = cfg.n_sample;
      double scale = cfg.init_scale;
      if (cfg.axis == AblationAxis::n_sample)
        n_sample = static_cast<int>(std::lround(row.value));
      else
        scale = row.value;
      if (n_sample < 1) throw InvalidArgument("ablation_sweep: n_sample must be >= 1");
      const auto samples = sample(truth, static_cast<std::size_t>(n_sample), row.sample_seed);
      FitConfig fc = cfg.fit;
      fc.init_theta = theta_from_matrix(cfg.init);
      fc.init_scale = scale;
      fc.seed = row.sample_seed;
      fc.record_every = std::max(fc.record_every, fc.max_iters);
      const FitReport rep = fit_distribution(samples, fc, truth);
      row.final_kld = rep.final_point().kld;
      row.final_loss = rep.final_point().loss;
      row.mode_error_deg = rep.final_point().mode_error_deg;
      row.iterations = rep.iterations;
      row.ok = true;
    } catch (const std::exception& e) {
      row.ok = false;
      row.error = e.what();
    }
  };

  unsigned threads = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(result.rows.size()));
  if (threads <= 1) {
    for (auto& row : result.rows) run_one(row);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < threads; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < result.rows.size(); i = next++) run_one(result.rows[i]);
      });
    }
  }

  for (std::size_t vi = 0; vi < cfg.values.size(); ++vi) {
    std::vector<double> klds;
    for (int t = 0; t < cfg.trials; ++t) {
      const AblationRow& row = result.rows[vi * cfg.trials + t];
      if (row.ok) klds.push_back(row.final_kld);
    }
    AblationSummary s;
    s.value = cfg.values[vi];
    s.trials_ok = static_cast<int>(klds.size());
    if (!klds.empty()) {
      s.median = median_of(klds);
      s.min = *std::min_element(klds.begin(), klds.end());
      s.max = *std::max_element(klds.begin(), klds.end());
    }
    result.summary.push_back(s);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Empirical bound KL(B(A) || B(O)) <= max{0.050, 1.5 ln ||lambda_shifted||}

struct KlBoundRow {
  Vector4 lambda;
  double lambda_norm = 0.0;
  double kl = 0.0;
  double bound = 0.0;
  bool in_range = true;  ///< ln ||lambda|| <= 25
  bool violated = false;
};

struct KlBoundReport {
  std::vector<KlBoundRow> rows;
  int violations = 0;
};

inline double kl_bound(double lambda_norm) {
  if (!(lambda_norm > 0.0)) return 0.050;
  return std::max(0.050, 1.5 * std::log(lambda_norm));
}

inline KlBoundRow kl_bound_row(const BinghamParam& p, const ContourIntegrator& integrator) {
  KlBoundRow row;
  row.lambda = p.lambda();
  row.lambda_norm = p.lambda().norm();
  row.kl = kld_analytic(p, BinghamParam(), integrator);
  row.bound = kl_bound(row.lambda_norm);
  row.in_range = row.lambda_norm == 0.0 || std::log(row.lambda_norm) <= 25.0;
  row.violated = row.in_range && row.kl > row.bound;
  return row;
}

/// Draws `trials` random parameters (as in random_ground_truth) and checks
/// the empirical bound on each; violations are counted, never thrown.
inline KlBoundReport empirical_kl_bound_check(int trials, std::uint64_t seed, const IntegratorConfig& cfg = {},
                                              double max_eigenvalue = 1500.0) {
  if (trials < 1) throw InvalidArgument("empirical_kl_bound_check: trials must be >= 1");
  const ContourIntegrator integrator(cfg);
  Rng rng(seed);
  KlBoundReport report;
  for (int t = 0; t < trials; ++t) {
    const KlBoundRow row = kl_bound_row(random_ground_truth(rng, max_eigenvalue), integrator);
    report.violations += row.violated ? 1 : 0;
    report.rows.push_back(row);
  }
  return report;
}

}  // namespace bingham
