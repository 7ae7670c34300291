// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
//
//   acceptance            run all criteria
//   acceptance 2 5        run a subset

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <numbers>
#include <set>
#include <string>
#include <vector>

#include <sys/wait.h>
#include <unistd.h>

#include "bingham.hpp"
#include "oracles.hpp"

using namespace bingham;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = std::numbers::pi;

struct Outcome {
  bool pass;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Vector4 random_shifted(Rng& rng, double max_norm) {
  Vector4 l;
  for (int i = 0; i < 4; ++i) l[i] = -rng.uniform();
  l = l.array() - l.maxCoeff();
  return l * (max_norm * rng.uniform() / std::max(l.norm(), 1e-12));
}

Matrix4 random_symmetric(Rng& rng, double scale) {
  Matrix4 a;
  for (int i = 0; i < 4; ++i)
    for (int j = i; j < 4; ++j) a(i, j) = a(j, i) = scale * (2.0 * rng.uniform() - 1.0);
  return a;
}

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

// ---------------------------------------------------------------------------

Outcome criterion1() {
  const ContourIntegrator integ;
  const NormConstResult r = integ(Vector4::Zero());
  const double c_err = rel(r.C, 2 * kPi * kPi);
  double dc_err = 0.0;
  for (int i = 0; i < 4; ++i) dc_err = std::max(dc_err, rel(r.dC[i], kPi * kPi / 2));

  const Vector4 l(0, -85.51, -173.72, -236.48);
  const int reps = 5000;
  double sink = 0.0;
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) sink += integ(l).C;
  const double ms = 1e3 * seconds_since(t0) / reps;

  const bool pass = c_err <= 1e-9 && dc_err <= 1e-8 && ms < 1.0 && sink > 0;
  return {pass, fmt("C rel err %.3e (tol 1e-9), dC rel err %.3e (tol 1e-8), %.4f ms/eval (limit 1 ms)", c_err, dc_err,
                    ms)};
}

Outcome criterion2() {
  Rng rng(derive_seed(2024, 2));
  const ContourIntegrator integ;
  double worst_c = 0.0, worst_fd = 0.0, worst_oracle_fd = 0.0;
  for (int k = 0; k < 50; ++k) {
    const Vector4 l = random_shifted(rng, 1000.0);
    const NormConstResult r = integ(l);
    worst_c = std::max(worst_c, rel(r.C, oracle::normalizing_constant(l)));
    const Vector4 g_oracle = oracle::normalizing_constant_gradient(l);
    for (int i = 0; i < 4; ++i) {
      // Central difference of the contour sum itself. Lowering lambda_1 below
      // zero breaks the shift convention, so the general entry point is used.
      const double h = 1e-3 * std::max(1.0, std::abs(l[i]) * 1e-2);
      const double fd = oracle::derivative(
          [&](double x) {
            Vector4 m = l;
            m[i] = x;
            return normalizing_constant(m, integ).C;
          },
          l[i], h);
      worst_fd = std::max(worst_fd, rel(r.dC[i], fd));
      worst_oracle_fd = std::max(worst_oracle_fd, rel(r.dC[i], g_oracle[i]));
    }
  }
  const bool pass = worst_c <= 1e-4 && worst_fd <= 1e-5 && worst_oracle_fd <= 1e-5;
  return {pass, fmt("50 spectra |lambda| <= 1000: C vs 1-D Bessel quadrature %.3e (tol 1e-4); dC vs central "
                    "differences %.3e, vs differenced oracle %.3e (tol 1e-5)",
                    worst_c, worst_fd, worst_oracle_fd)};
}

Outcome criterion3() {
  Rng rng(derive_seed(2024, 3));
  const ContourIntegrator integ;
  double worst = 0.0;
  for (int k = 0; k < 20; ++k) {
    const Vector4 l = random_shifted(rng, 1000.0);
    const double c = 100.0 * rng.uniform() - 50.0;
    const double lhs = normalizing_constant((l.array() + c).matrix(), integ).C;
    const double rhs = std::exp(c) * normalizing_constant(l, integ).C;
    worst = std::max(worst, rel(lhs, rhs));
  }
  return {worst <= 1e-9, fmt("20 random (lambda, c): max rel err %.3e (tol 1e-9)", worst)};
}

template <class F>
Theta fd_theta(const Theta& theta, double step, F loss) {
  Theta g;
  for (int k = 0; k < 10; ++k) {
    Theta tp = theta, tm = theta;
    tp[k] += step;
    tm[k] -= step;
    g[k] = (loss(tp) - loss(tm)) / (2 * step);
  }
  return g;
}

Matrix4 theta_grad_to_a(const Theta& g) {
  Matrix4 a = triu(g);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      if (i != j) a(i, j) *= 0.5;
  return a;
}

Outcome criterion4() {
  Rng rng(derive_seed(2024, 4));
  const ContourIntegrator integ;
  double bnll_a = 0.0, bnll_t = 0.0, qcqp_a = 0.0, qcqp_t = 0.0;
  for (int k = 0; k < 20; ++k) {
    const Matrix4 a = random_symmetric(rng, k < 10 ? 10.0 : 300.0);
    const Quatd q = rng.uniform_quaternion();
    const LossValue v = bnll_loss(BinghamParam(a), q, integ);
    const Theta fd = fd_theta(theta_from_matrix(a), 1e-5,
                              [&](const Theta& t) { return bnll_loss(BinghamParam::from_theta(t), q, integ).value; });
    bnll_t = std::max(bnll_t, oracle::max_rel_error(v.grad_theta, fd));
    bnll_a = std::max(bnll_a, oracle::max_rel_error(v.grad_a, theta_grad_to_a(fd)));
  }
  int done = 0;
  while (done < 20) {
    const Matrix4 a = random_symmetric(rng, 10.0);
    if (BinghamParam(a).lambda()[1] >= -0.1) continue;
    const Quatd q = rng.uniform_quaternion();
    const LossValue v = qcqp_loss(a, q);
    const Theta fd = fd_theta(theta_from_matrix(a), 1e-6, [&](const Theta& t) { return qcqp_loss(triu(t), q).value; });
    qcqp_t = std::max(qcqp_t, oracle::max_rel_error(v.grad_theta, fd));
    qcqp_a = std::max(qcqp_a, oracle::max_rel_error(v.grad_a, theta_grad_to_a(fd)));
    ++done;
  }
  const bool pass = bnll_a <= 1e-4 && bnll_t <= 1e-4 && qcqp_a <= 1e-3 && qcqp_t <= 1e-3;
  return {pass, fmt("BNLL grad_A %.2e grad_theta %.2e (tol 1e-4); QCQP grad_A %.2e grad_theta %.2e (tol 1e-3)", bnll_a,
                    bnll_t, qcqp_a, qcqp_t)};
}

FitConfig replication_config(LossKind loss) {
  FitConfig cfg;
  cfg.loss = loss;
  cfg.max_iters = 20000;
  cfg.init_theta = theta_from_matrix(presets::a_init());
  cfg.record_every = 20000;
  return cfg;
}

Outcome criterion5() {
  const BinghamParam truth(presets::a_unimodal());
  const auto qs = sample(truth, 100, 1);
  const auto t0 = std::chrono::steady_clock::now();
  const FitReport b = fit_distribution(qs, replication_config(LossKind::bnll), truth);
  const double tb = seconds_since(t0);
  const auto t1 = std::chrono::steady_clock::now();
  const FitReport q = fit_distribution(qs, replication_config(LossKind::qcqp), truth);
  const double tq = seconds_since(t1);
  const auto& fb = b.final_point();
  const auto& fq = q.final_point();
  const bool pass = fb.kld < 1.0 && fb.mode_error_deg < 2.0 && fq.kld >= 1.5 && fq.kld <= 10.0 &&
                    fq.mode_error_deg < 2.0 && tb < 300 && tq < 300;
  return {pass, fmt("BNLL KLD %.4f (< 1) mode err %.3f deg; QCQP KLD %.4f (in [1.5, 10]) mode err %.3f deg "
                    "(< 2 deg); %.1f s / %.1f s per fit",
                    fb.kld, fb.mode_error_deg, fq.kld, fq.mode_error_deg, tb, tq)};
}

Outcome criterion6() {
  const BinghamParam truth(presets::a_true());
  int ok = 0;
  std::string per_seed;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto qs = sample(truth, 100, seed);
    const double kb = fit_distribution(qs, replication_config(LossKind::bnll), truth).final_point().kld;
    const double kq = fit_distribution(qs, replication_config(LossKind::qcqp), truth).final_point().kld;
    const bool good = kb < 0.5 && kq > 10.0;
    ok += good ? 1 : 0;
    per_seed += fmt(" %s%.3f/%.1f", good ? "" : "!", kb, kq);
  }
  return {ok >= 9, fmt("%d/10 seeds with BNLL KLD < 0.5 and QCQP KLD > 10 (need 9); BNLL/QCQP:", ok) + per_seed};
}

Outcome criterion7() {
  AblationConfig cfg;
  cfg.axis = AblationAxis::n_sample;
  cfg.values = {10};
  cfg.trials = 100;
  cfg.seed = derive_seed(2024, 7);
  cfg.init = Matrix4::Zero();
  cfg.fit.loss = LossKind::bnll;
  cfg.fit.max_iters = 20000;
  const AblationResult r = ablation_sweep(cfg);
  const AblationSummary& s = r.summary.front();
  return {s.trials_ok == 100 && s.median < 2.0,
          fmt("100 random ground truths, N_sample = 10, uniform init: median KLD %.4f (< 2), min %.4f, max %.4f, "
              "%d/100 trials completed",
              s.median, s.min, s.max, s.trials_ok)};
}

Outcome criterion8() {
  Rng rng(derive_seed(2024, 8));
  double worst = 0.0;
  for (int k = 0; k < 10; ++k) {
    const BinghamParam p = k == 0 ? BinghamParam(presets::a_true()) : random_ground_truth(rng);
    const auto qs = sample(p, 100000, derive_seed(2024, 800 + k));
    Matrix4 m = Matrix4::Zero();
    for (const auto& q : qs) m += q.vec() * q.vec().transpose();
    m /= static_cast<double>(qs.size());
    worst = std::max(worst, (m - second_moments(p)).cwiseAbs().maxCoeff());
  }
  return {worst <= 5e-3, fmt("10 params (incl. axis-symmetric), 1e5 draws: max entry err %.2e (tol 5e-3)", worst)};
}

Outcome criterion9() {
  Rng rng(derive_seed(2024, 9));
  const ContourIntegrator integ;
  double worst_sigma = 0.0, worst_self = 0.0;
  for (int k = 0; k < 10; ++k) {
    const BinghamParam p = random_ground_truth(rng), q = random_ground_truth(rng);
    const double analytic = kld_analytic(p, q, integ);
    const MonteCarloEstimate mc = kld_monte_carlo(p, q, 1000000, derive_seed(2024, 900 + k), integ);
    worst_sigma = std::max(worst_sigma, std::abs(analytic - mc.estimate) / mc.std_error);
    worst_self = std::max(worst_self, std::abs(kld_analytic(p, p, integ)));
  }
  return {worst_sigma <= 3.0 && worst_self <= 1e-10,
          fmt("10 pairs, 1e6 draws: max |analytic - MC| = %.2f standard errors (limit 3); max |KL(p||p)| %.1e "
              "(tol 1e-10)",
              worst_sigma, worst_self)};
}

int shell(const std::string& cmd) {
  const int status = std::system((cmd + " > /dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome criterion10() {
  const fs::path root = fs::temp_directory_path() / ("bingham_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(root);
  const std::string cli = BINGHAM_CLI_PATH;
  auto run_all = [&](const fs::path& d) {
    fs::create_directories(d);
    const std::string p = (d / "truth.json").string();
    int rc = 0;
    rc |= shell(cli + " preset --name a-true --out " + p);
    rc |= shell(cli + " sample --param " + p + " --n 200 --seed 11 --out " + (d / "s.jsonl").string());
    rc |= shell(cli + " fit --samples " + (d / "s.jsonl").string() + " --truth " + p +
                " --init a-init --max-iters 500 --record-every 10 --seed 11 --out " + (d / "fit.json").string());
    rc |= shell(cli + " fit --samples " + (d / "s.jsonl").string() + " --loss qcqp --max-iters 500 --seed 11 --out " +
                (d / "fit_q.json").string());
    rc |= shell(cli + " ablation --axis init-scale --values 0.1 1 --trials 2 --max-iters 300 --seed 11 --out-dir " +
                (d / "abl").string());
    rc |= shell(cli + " kl-bound --trials 20 --seed 11 --out " + (d / "kl.csv").string());
    rc |= shell(cli + " normconst --lambda 0 -1 -2 -3 --seed 11 --manifest " + (d / "nc.manifest.json").string());
    rc |= shell(cli + " kld --p " + p + " --q " + p + " --mc 1000 --seed 11 --manifest " +
                (d / "kld.manifest.json").string());
    return rc;
  };
  // Output paths appear inside manifests, so both runs use the same directory.
  const fs::path work = root / "run";
  const fs::path first = root / "first";
  if (run_all(work) != 0) return {false, "a CLI invocation failed"};
  fs::rename(work, first);
  if (run_all(work) != 0) return {false, "a CLI invocation failed on rerun"};

  int files = 0, differing = 0;
  for (const auto& e : fs::recursive_directory_iterator(first)) {
    if (!e.is_regular_file()) continue;
    const fs::path other = work / fs::relative(e.path(), first);
    ++files;
    if (!fs::exists(other) || read_text_file(e.path()) != read_text_file(other)) ++differing;
  }
  fs::remove_all(root);
  return {files > 0 && differing == 0, fmt("%d output files from 8 invocations, %d differ between runs", files, differing)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"normalizing-constant exactness anchor", criterion1},
      {"oracle equivalence", criterion2},
      {"shift/scale law", criterion3},
      {"gradient suite", criterion4},
      {"unimodal recovery", criterion5},
      {"axis-symmetric separation", criterion6},
      {"small-sample robustness", criterion7},
      {"sampler fidelity", criterion8},
      {"KLD estimator agreement", criterion9},
      {"determinism", criterion10},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += o.pass ? 0 : 1;
    std::printf("[%s] %2d %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(),
                o.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  return failures ? 1 : 0;
}
