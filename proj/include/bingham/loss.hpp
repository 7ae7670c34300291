#pragma once

// Rotation losses on a Bingham parameter.
//
//   BNLL(A, q)  = -q^T A_shifted q + ln C(lambda_shifted)
//   QCQP(A, q)  = d_F(q_amax(A), q)^2 = 8 (1 - <q_amax, q>^2)
//
// Both return the value together with the gradient in A-space (symmetric,
// such that dL = <grad_a, dA>_F for symmetric dA) and its pullback to the
// 10-dimensional theta encoding.

#include <cmath>
#include <span>
#include <vector>

#include "bingham/distribution.hpp"
#include "bingham/errors.hpp"
#include "bingham/normconst.hpp"
#include "bingham/quaternion.hpp"
#include "bingham/types.hpp"

namespace bingham {

struct LossValue {
  double value = 0.0;
  Matrix4 grad_a = Matrix4::Zero();
  Theta grad_theta = Theta::Zero();
  /// False when the gradient was zeroed because it is undefined (tied top eigenvalue in QCQP).
  bool gradient_reliable = true;
};

/// Empirical second moment (1/n) sum q q^T.
inline Matrix4 scatter_matrix(std::span<const Quatd> samples) {
  if (samples.empty()) throw InvalidArgument("scatter_matrix: no samples");
  Matrix4 m = Matrix4::Zero();
  for (const auto& q : samples) {
    const Vector4 v = q.vec();
    m.noalias() += v * v.transpose();
  }
  return m / static_cast<double>(samples.size());
}

/// Mean BNLL over a sample set summarised by its scatter matrix. The loss is
/// linear in q q^T, so the scatter matrix is a sufficient statistic.
///
/// The eigenvalue derivative d(lambda_i)/dA = d_i d_i^T gives
/// grad_a = -M + D diag(dC / C) D^T. On repeated eigenvalues the formula is
/// unchanged because C is symmetric in lambda.
inline LossValue bnll_from_scatter(const BinghamParam& p, const Matrix4& scatter, const ContourIntegrator& integrator) {
  const NormConstResult nc = integrator(p.lambda());
  LossValue out;
  out.value = -(p.a_shifted().cwiseProduct(scatter)).sum() + std::log(nc.C);
  out.grad_a = -scatter + p.d() * nc.moments().asDiagonal() * p.d().transpose();
  out.grad_a = 0.5 * (out.grad_a + out.grad_a.transpose());
  out.grad_theta = theta_pullback(out.grad_a);
  return out;
}

inline LossValue bnll_loss(const BinghamParam& p, const Quatd& q_gt, const ContourIntegrator& integrator) {
  const Vector4 v = q_gt.vec();
  return bnll_from_scatter(p, v * v.transpose(), integrator);
}

inline LossValue bnll_loss(const BinghamParam& p, const Quatd& q_gt, const IntegratorConfig& cfg = {}) {
  return bnll_loss(p, q_gt, ContourIntegrator(cfg));
}

/// Mean BNLL over a list; the normalising constant is evaluated once.
inline LossValue bnll_batch(const BinghamParam& p, std::span<const Quatd> samples,
                            const ContourIntegrator& integrator) {
  return bnll_from_scatter(p, scatter_matrix(samples), integrator);
}

inline LossValue bnll_batch(const BinghamParam& p, std::span<const Quatd> samples, const IntegratorConfig& cfg = {}) {
  return bnll_batch(p, samples, ContourIntegrator(cfg));
}

struct ModeEstimate {
  Quatd q;
  bool degenerate = false;
};

/// argmax over unit q of q^T A q: the top eigenvector, sign-canonicalised.
inline ModeEstimate qcqp_mode(const Matrix4& a) {
  const BinghamParam p(a);
  return {mode(p), p.mode_degenerate()};
}

/// Minimum top-eigenvalue gap for the QCQP eigenvector derivative.
inline constexpr double kQcqpMinGap = 1e-9;

/// Mean QCQP loss over samples summarised by their scatter matrix M:
/// value = 8 (1 - q1^T M q1). The top eigenvector moves under dA as
/// dq1 = sum_{j>=2} d_j d_j^T dA q1 / (lambda_1 - lambda_j), giving
/// grad_a = sym( sum_j (u^T d_j) / (lambda_1 - lambda_j) d_j q1^T ) with
/// u = dL/dq1 = -16 M q1.
inline LossValue qcqp_from_scatter(const BinghamParam& p, const Matrix4& scatter) {
  const Vector4 q1 = p.d().col(0);
  const Vector4 mq = scatter * q1;
  LossValue out;
  out.value = 8.0 * (1.0 - q1.dot(mq));

  const Vector4& lam = p.lambda();
  const double gap = lam[0] - lam[1];
  if (!(gap > kQcqpMinGap * std::max(1.0, std::abs(lam[3])))) {
    out.gradient_reliable = false;
    return out;
  }
  const Vector4 u = -16.0 * mq;
  Matrix4 g = Matrix4::Zero();
  for (int j = 1; j < 4; ++j) {
    const Vector4 dj = p.d().col(j);
    g.noalias() += (u.dot(dj) / (lam[0] - lam[j])) * dj * q1.transpose();
  }
  out.grad_a = 0.5 * (g + g.transpose());
  out.grad_theta = theta_pullback(out.grad_a);
  return out;
}

inline LossValue qcqp_loss(const Matrix4& a, const Quatd& q_gt) {
  const Vector4 v = q_gt.vec();
  return qcqp_from_scatter(BinghamParam(a), v * v.transpose());
}

inline LossValue qcqp_batch(const Matrix4& a, std::span<const Quatd> samples) {
  return qcqp_from_scatter(BinghamParam(a), scatter_matrix(samples));
}

}  // namespace bingham
