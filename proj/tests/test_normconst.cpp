#include <chrono>
#include <cmath>
#include <complex>
#include <numbers>

#include <gtest/gtest.h>

#include "bingham/distribution.hpp"
#include "bingham/normconst.hpp"
#include "bingham/sampler.hpp"
#include "oracles.hpp"

using namespace bingham;

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTwoPiSq = 2.0 * kPi * kPi;

Vector4 random_shifted(Rng& rng, double max_norm) {
  Vector4 l;
  for (int i = 0; i < 4; ++i) l[i] = -rng.uniform();
  l = l.array() - l.maxCoeff();
  return l * (max_norm * rng.uniform() / std::max(l.norm(), 1e-12));
}

}  // namespace

TEST(Constants, Defaults) {
  const auto k = derive_constants({});
  EXPECT_NEAR(k.c, 15.0 * kPi / 10.9375, 1e-14);
  // 15 pi / 10.9375 = 4.3084699..., so five decimals read 4.30847.
  EXPECT_NEAR(k.c, 4.30847, 1e-5);
  EXPECT_NEAR(k.d, k.c / 2, 1e-15);
  EXPECT_NEAR(k.h, std::sqrt(2 * kPi * (k.c / 2) * 3.5 / 100), 1e-14);
  EXPECT_NEAR(k.h, 0.68829, 1e-5);
  EXPECT_NEAR(k.p1, 16.593, 1e-3);
  EXPECT_NEAR(k.p2, 4.1482, 1e-4);
}

TEST(Constants, Validation) {
  IntegratorConfig c;
  c.r = 1.5;
  EXPECT_THROW(derive_constants(c), InvalidArgument);
  c = {};
  c.omega_d = 0.3;
  EXPECT_THROW(derive_constants(c), InvalidArgument);
  c = {};
  c.n = 10;
  EXPECT_THROW(derive_constants(c), InvalidArgument);
  c = {};
  c.d_fraction = 1.0;
  EXPECT_THROW(derive_constants(c), InvalidArgument);
  c = {};
  c.n_min = 0;
  EXPECT_THROW(derive_constants(c), InvalidArgument);
}

TEST(Weight, Examples) {
  const auto k = derive_constants({});
  EXPECT_DOUBLE_EQ(weight(k.p1 * k.p2, k.p1, k.p2), 0.5);
  EXPECT_NEAR(weight(0.0, k.p1, k.p2), 1.0, 1e-7);
  double prev = 2.0;
  for (int j = 0; j <= 200; ++j) {
    const double w = weight(j * k.h, k.p1, k.p2);
    EXPECT_LE(w, prev);
    EXPECT_GT(w, 0.0);
    prev = w;
  }
}

TEST(Integrand, Examples) {
  const double c = derive_constants({}).c;
  const Vector4 zero = Vector4::Zero();
  const auto f0 = integrand_F(0.0, zero, c);
  EXPECT_NEAR(f0.real(), 1.0 / (c * c), 1e-15);
  EXPECT_EQ(f0.imag(), 0.0);

  const auto fc = integrand_F(c, zero, c);
  EXPECT_NEAR(fc.real(), 0.0, 1e-15);
  EXPECT_NEAR(fc.imag(), -1.0 / (2 * c * c), 1e-15);

  const auto df0 = integrand_dF(0.0, zero, c, 2);
  EXPECT_NEAR(df0.real(), 0.5 / (c * c * c), 1e-15);

  Rng rng(21);
  for (int i = 0; i < 20; ++i) {
    const Vector4 l = random_shifted(rng, 500.0);
    const double t = 50.0 * rng.uniform();
    EXPECT_LT(std::abs(integrand_F(-t, l, c) - std::conj(integrand_F(t, l, c))), 1e-15);
    EXPECT_LT(std::abs(integrand_dF(-t, l, c, 1) - std::conj(integrand_dF(t, l, c, 1))), 1e-15);
  }
}

TEST(Integrand, DerivativeMatchesFiniteDifference) {
  const double c = derive_constants({}).c;
  Rng rng(22);
  for (int trial = 0; trial < 20; ++trial) {
    const Vector4 l = random_shifted(rng, 100.0);
    const double t = 20.0 * rng.uniform() - 10.0;
    for (int i = 0; i < 4; ++i) {
      // Step relative to |z_i| = |c - lambda_i + i t|; a fixed absolute step
      // loses ~eps |z| / step to cancellation, i.e. ~2e-8 once |z| nears 100.
      const double step = 1e-6 * std::abs(std::complex<double>(c - l[i], t));
      Vector4 lp = l, lm = l;
      lp[i] += step;
      lm[i] -= step;
      const std::complex<double> fd = (integrand_F(t, lp, c) - integrand_F(t, lm, c)) / (2 * step);
      const std::complex<double> an = integrand_dF(t, l, c, i);
      EXPECT_LT(std::abs(fd - an) / std::abs(an), 1e-8);
    }
  }
}

TEST(NormConst, UniformSphere) {
  const auto r = normalizing_constant(Vector4::Zero());
  // Quadrature error at the default N is ~3.6e-9 relative.
  EXPECT_NEAR(r.C, kTwoPiSq, 1e-7);
  // C and dC carry different quadrature errors; measured |dC_i - C/4| ~ 3.8e-9 C.
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(r.dC[i], r.C / 4, 1e-8 * r.C);
  for (int i = 1; i < 4; ++i) EXPECT_EQ(r.dC[i], r.dC[0]);
  EXPECT_NEAR(r.dC[0], kPi * kPi / 2, 1e-8);
  EXPECT_LT(r.imag_residual, 1e-12);
}

TEST(NormConst, UniformSphereConvergesWithN) {
  IntegratorConfig cfg;
  cfg.n = 400;
  EXPECT_NEAR(normalizing_constant(Vector4::Zero(), cfg).C / kTwoPiSq, 1.0, 1e-11);
}

TEST(NormConst, SmallSpectrumAgainstOracle) {
  const Vector4 l(0, -1, -2, -3);
  const double ref = oracle::normalizing_constant(l);
  EXPECT_NEAR(normalizing_constant(l).C / ref, 1.0, 1e-5);
}

TEST(NormConst, OracleAgainstUniformMonteCarlo) {
  // Sanity check of the 1-D reduction itself.
  const Vector4 l(0, -1, -2, -3);
  Rng rng(23);
  const int n = 2000000;
  double mean = 0.0, m2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const Vector4 q = rng.uniform_quaternion().vec();
    const double f = std::exp(q.dot(l.asDiagonal() * q));
    const double delta = f - mean;
    mean += delta / (i + 1);
    m2 += delta * (f - mean);
  }
  const double se = std::sqrt(m2 / (n - 1) / n);
  EXPECT_NEAR(oracle::normalizing_constant(l), kTwoPiSq * mean, 4 * kTwoPiSq * se);
  EXPECT_NEAR(oracle::normalizing_constant(Vector4::Zero()), kTwoPiSq, 1e-12);
}

TEST(NormConst, RandomSpectraAgainstOracle) {
  Rng rng(24);
  const ContourIntegrator integ;
  for (int trial = 0; trial < 30; ++trial) {
    const Vector4 l = random_shifted(rng, 1000.0);
    const auto r = integ(l);
    EXPECT_NEAR(r.C / oracle::normalizing_constant(l), 1.0, 1e-4) << l.transpose();
    const Vector4 g = oracle::normalizing_constant_gradient(l);
    for (int i = 0; i < 4; ++i) EXPECT_NEAR(r.dC[i] / g[i], 1.0, 1e-5) << l.transpose();
  }
}

TEST(NormConst, Invariants) {
  Rng rng(25);
  const ContourIntegrator integ;
  for (int trial = 0; trial < 100; ++trial) {
    const Vector4 l = random_shifted(rng, 3000.0);
    const auto r = integ(l);
    EXPECT_GT(r.C, 0.0);
    const Vector4 m = r.moments();
    for (int i = 0; i < 4; ++i) {
      EXPECT_GT(m[i], 0.0);
      EXPECT_LT(m[i], 1.0);
    }
    EXPECT_NEAR(m.sum(), 1.0, 1e-6);
    EXPECT_LE(r.imag_residual, 1e-6);
  }
}

TEST(NormConst, ShiftLaw) {
  Rng rng(26);
  const ContourIntegrator integ;
  for (int trial = 0; trial < 20; ++trial) {
    const Vector4 l = random_shifted(rng, 1000.0);
    const double c = 40.0 * rng.uniform() - 20.0;
    const auto base = normalizing_constant(l, integ);
    const auto shifted = normalizing_constant((l.array() + c).matrix(), integ);
    EXPECT_NEAR(shifted.C / (std::exp(c) * base.C), 1.0, 1e-9);
    EXPECT_NEAR(oracle::normalizing_constant((l.array() + c).matrix()) /
                    (std::exp(c) * oracle::normalizing_constant(l)),
                1.0, 1e-9);
  }
}

TEST(NormConst, RejectsUnshiftedInput) {
  EXPECT_THROW(ContourIntegrator()(Vector4(1, 0, 0, 0)), InvalidArgument);
  EXPECT_NO_THROW(normalizing_constant(Vector4(1, 0, 0, 0)));
}

TEST(NormConst, PermutationSymmetry) {
  const Vector4 l(0, -3, -50, -400);
  const auto a = normalizing_constant(l);
  const auto b = normalizing_constant(Vector4(-400, 0, -50, -3));
  EXPECT_NEAR(a.C / b.C, 1.0, 1e-13);
  EXPECT_NEAR(a.dC[0] / b.dC[1], 1.0, 1e-12);
  EXPECT_NEAR(a.dC[3] / b.dC[0], 1.0, 1e-12);
}

TEST(AccuracyProbe, UniformConvergesMonotonically) {
  const auto probe = accuracy_probe(Vector4::Zero(), {}, {15, 50, 200, 1000});
  EXPECT_EQ(probe.reference_n, 1000);
  EXPECT_TRUE(probe.monotone);
  EXPECT_GT(probe.rows[0].abs_diff, probe.rows[1].abs_diff);
  EXPECT_GT(probe.rows[1].abs_diff, probe.rows[2].abs_diff);
  EXPECT_EQ(probe.rows[3].abs_diff, 0.0);
  // The coarsest row would be rejected by the default guard.
  EXPECT_GT(probe.rows[0].imag_residual, IntegratorConfig{}.max_imag_residual);
  EXPECT_THROW(ContourIntegrator({.n = 15})(Vector4::Zero()), NumericalError);
}

TEST(AccuracyProbe, ReferenceTrue) {
  const Vector4 l = BinghamParam(presets::a_true()).lambda();
  const auto probe = accuracy_probe(l, {}, {50, 200, 1000});
  // Measured: ~1.2e-8 relative at N = 200 against N = 1000.
  EXPECT_LT(probe.rows[1].rel_diff, 5e-8);
  EXPECT_LT(probe.rows[1].rel_diff, probe.rows[0].rel_diff);
}

TEST(AccuracyProbe, LargeSpectrumExploration) {
  // Records where the default node count stops being accurate; not asserted.
  for (double scale : {1e3, 1e4, 1e5}) {
    const Vector4 l(0, -0.3 * scale, -0.6 * scale, -scale);
    try {
      const auto probe = accuracy_probe(l, {}, {200, 2000});
      std::printf("|lambda| ~ %.0e: rel diff N=200 vs N=2000 = %.3e\n", scale, probe.rows[0].rel_diff);
    } catch (const NumericalError& e) {
      std::printf("|lambda| ~ %.0e: %s\n", scale, e.what());
    }
  }
}

TEST(NormConst, Speed) {
  const ContourIntegrator integ;
  const Vector4 l(0, -85.51, -173.72, -236.48);
  const int reps = 2000;
  double sink = 0.0;
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) sink += integ(l).C;
  const double per_call = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / reps;
  EXPECT_GT(sink, 0.0);
  EXPECT_LT(per_call, 1e-3);
}
