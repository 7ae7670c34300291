#pragma once

// Bingham distribution B(A)(q) = exp(q^T A q) / C(lambda) on unit quaternions.
//
// A and A + cI describe the same distribution, so every parameter is kept in
// a canonical "sorted & shifted" form: eigenvalues descending with the
// largest moved to 0, eigenvector columns permuted to match and each column
// sign-normalised.

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <string>

#include "bingham/errors.hpp"
#include "bingham/normconst.hpp"
#include "bingham/quaternion.hpp"
#include "bingham/types.hpp"

namespace bingham {

struct EigenSystem {
  Matrix4 D;       ///< columns are eigenvectors, ordered like `lambda`
  Vector4 lambda;  ///< 0 = lambda_1 >= lambda_2 >= lambda_3 >= lambda_4
  double offset;   ///< largest eigenvalue of the input, removed by the shift
};

inline double asymmetry(const Matrix4& a) { return (a - a.transpose()).cwiseAbs().maxCoeff(); }

/// Eigendecomposition in canonical form. Throws InvalidArgument when A is not
/// symmetric within 1e-9 (relative to max(1, max|A_ij|)).
inline EigenSystem sort_and_shift(const Matrix4& a) {
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  if (!(asymmetry(a) <= 1e-9 * scale)) throw InvalidArgument("sort_and_shift: matrix is not symmetric");
  const Matrix4 sym = 0.5 * (a + a.transpose());

  Eigen::SelfAdjointEigenSolver<Matrix4> es(sym);
  if (es.info() != Eigen::Success) throw NumericalError("sort_and_shift: eigensolver failed");

  // Eigen reports ascending order; sort descending, ties broken by original column.
  std::array<int, 4> order{};
  std::iota(order.begin(), order.end(), 0);
  const Vector4& ev = es.eigenvalues();
  std::stable_sort(order.begin(), order.end(), [&](int i, int j) { return ev[i] > ev[j]; });

  EigenSystem out;
  out.offset = ev[order[0]];
  for (int k = 0; k < 4; ++k) {
    const int src = order[k];
    out.lambda[k] = ev[src] - out.offset;
    out.D.col(k) = canonical_sign(Quatd(Vector4(es.eigenvectors().col(src)))).vec();
  }
  out.lambda[0] = 0.0;
  return out;
}

/// Immutable Bingham parameter with its cached canonical eigensystem.
class BinghamParam {
 public:
  /// Relative tolerance for calling lambda_1 == lambda_2 a tie.
  static constexpr double kDegeneracyTol = 1e-6;

  /// Uniform distribution (A = O).
  BinghamParam() : BinghamParam(Matrix4::Zero()) {}

  explicit BinghamParam(const Matrix4& a) : a_(0.5 * (a + a.transpose())), eig_(sort_and_shift(a)) {}

  static BinghamParam from_theta(const Theta& theta) { return BinghamParam(triu(theta)); }

  /// A = D diag(lambda) D^T for an orthogonal D.
  static BinghamParam from_eigen(const Matrix4& d, const Vector4& lambda) {
    return BinghamParam(d * lambda.asDiagonal() * d.transpose());
  }

  const Matrix4& a() const noexcept { return a_; }
  Theta theta() const { return theta_from_matrix(a_); }

  /// A - lambda_max I, equal to D diag(lambda_shifted) D^T.
  Matrix4 a_shifted() const { return a_ - eig_.offset * Matrix4::Identity(); }

  const Matrix4& d() const noexcept { return eig_.D; }
  const Vector4& lambda() const noexcept { return eig_.lambda; }
  double offset() const noexcept { return eig_.offset; }

  /// True when the two largest eigenvalues tie and the mode is not unique.
  bool mode_degenerate() const {
    const double gap = eig_.lambda[0] - eig_.lambda[1];
    return gap <= kDegeneracyTol * std::max(1.0, std::abs(eig_.lambda[3]));
  }

 private:
  Matrix4 a_;
  EigenSystem eig_;
};

/// Mode quaternion: the eigenvector of the largest eigenvalue (first column of D).
/// On a tie, the first column is still returned; check `mode_degenerate()`.
inline Quatd mode(const BinghamParam& p) { return Quatd(Vector4(p.d().col(0))); }

/// q^T A_shifted q, in [lambda_4, 0] for unit q.
inline double log_density_unnormalized(const BinghamParam& p, const Quatd& q) {
  const Vector4 v = q.vec();
  return v.dot(p.a_shifted() * v);
}

/// Normalised log density: q^T A_shifted q - ln C(lambda_shifted).
inline double log_density(const BinghamParam& p, const Quatd& q, const NormConstResult& nc) {
  return log_density_unnormalized(p, q) - std::log(nc.C);
}

/// E[q q^T] = D diag(dC_i / C) D^T, from a normalising constant evaluated at
/// the shifted eigenvalues of `p`.
inline Matrix4 second_moments(const BinghamParam& p, const NormConstResult& nc) {
  const Vector4 m = nc.moments();
  for (int i = 0; i < 4; ++i) {
    if (!(m[i] > 0.0 && m[i] < 1.0))
      throw NumericalError("second_moments: dC/C outside (0, 1) at index " + std::to_string(i));
  }
  return p.d() * m.asDiagonal() * p.d().transpose();
}

inline Matrix4 second_moments(const BinghamParam& p, const ContourIntegrator& integrator) {
  return second_moments(p, integrator(p.lambda()));
}

inline Matrix4 second_moments(const BinghamParam& p, const IntegratorConfig& cfg = {}) {
  return second_moments(p, ContourIntegrator(cfg));
}

/// Reference parameters (upper triangles completed symmetrically).
namespace presets {

/// Initial parameter of the recovery experiments.
inline Matrix4 a_init() {
  Matrix4 a;
  a << 95.69, 13.72, 28.38, 60.61,
       13.72, 94.42, 85.27,  0.23,
       28.38, 85.27, 52.12, 55.20,
       60.61,  0.23, 55.20, 48.54;
  return a;
}

/// Axis-symmetric ground truth: two near-equal leading eigenvalues.
inline Matrix4 a_true() {
  Matrix4 a;
  a << -116.55,   40.70,  119.55,  225.97,
         40.70, -147.05,  145.26, -280.25,
        119.55,  145.26, -386.19,   52.06,
        225.97, -280.25,   52.06, -743.89;
  return a;
}

/// Unimodal ground truth: the eigenvectors of a_true() with the spectrum
/// (0, -1209.9, -2217.9, -2342.4).
inline Matrix4 a_unimodal() {
  const EigenSystem es = sort_and_shift(a_true());
  return es.D * Vector4(0.0, -1209.9, -2217.9, -2342.4).asDiagonal() * es.D.transpose();
}

}  // namespace presets

}  // namespace bingham
