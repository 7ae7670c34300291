#pragma once

// Quaternion algebra on S^3 with scalar-first storage (w, x, y, z).
//
// Products follow the Hamilton convention i^2 = j^2 = k^2 = ijk = -1. The
// left/right multiplication matrices satisfy
//
//     a * b == omega_left(a) * b.vec() == omega_right(b) * a.vec()
//
// and both are orthogonal when the argument has unit norm.

#include <algorithm>
#include <cassert>
#include <cmath>
#include <concepts>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace bingham {

template <std::floating_point T>
struct Quaternion {
  using Vec4 = Eigen::Matrix<T, 4, 1>;

  T w{1}, x{0}, y{0}, z{0};

  constexpr Quaternion() = default;
  constexpr Quaternion(T w_, T x_, T y_, T z_) : w(w_), x(x_), y(y_), z(z_) {}
  explicit Quaternion(const Vec4& v) : w(v[0]), x(v[1]), y(v[2]), z(v[3]) {}

  static constexpr Quaternion identity() { return {}; }

  Vec4 vec() const { return Vec4(w, x, y, z); }

  constexpr T operator[](int i) const {
    switch (i) {
      case 0: return w;
      case 1: return x;
      case 2: return y;
      default: return z;
    }
  }

  constexpr Quaternion conj() const { return {w, -x, -y, -z}; }
  constexpr T squared_norm() const { return w * w + x * x + y * y + z * z; }
  T norm() const { return std::sqrt(squared_norm()); }

  Quaternion normalized() const {
    const T n = norm();
    return {w / n, x / n, y / n, z / n};
  }

  bool is_unit(T tol = T(1e-12)) const { return std::abs(norm() - T(1)) <= tol; }

  constexpr Quaternion operator-() const { return {-w, -x, -y, -z}; }
  constexpr bool operator==(const Quaternion&) const = default;
};

using Quatd = Quaternion<double>;

template <std::floating_point T>
constexpr T dot(const Quaternion<T>& a, const Quaternion<T>& b) {
  return a.w * b.w + a.x * b.x + a.y * b.y + a.z * b.z;
}

/// Left multiplication matrix: a * b == omega_left(a) * b.
template <std::floating_point T>
Eigen::Matrix<T, 4, 4> omega_left(const Quaternion<T>& q) {
  const T a = q.w, b = q.x, c = q.y, d = q.z;
  Eigen::Matrix<T, 4, 4> m;
  m << a, -b, -c, -d,
       b,  a, -d,  c,
       c,  d,  a, -b,
       d, -c,  b,  a;
  return m;
}

/// Right multiplication matrix: a * b == omega_right(b) * a.
template <std::floating_point T>
Eigen::Matrix<T, 4, 4> omega_right(const Quaternion<T>& q) {
  const T w = q.w, x = q.x, y = q.y, z = q.z;
  Eigen::Matrix<T, 4, 4> m;
  m << w, -x, -y, -z,
       x,  w,  z, -y,
       y, -z,  w,  x,
       z,  y, -x,  w;
  return m;
}

template <std::floating_point T>
Quaternion<T> operator*(const Quaternion<T>& a, const Quaternion<T>& b) {
  Quaternion<T> r{a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
                  a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
                  a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
                  a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w};
#ifndef NDEBUG
  {
    const Eigen::Matrix<T, 4, 1> via_left = omega_left(a) * b.vec();
    const Eigen::Matrix<T, 4, 1> via_right = omega_right(b) * a.vec();
    const T tol = T(64) * std::numeric_limits<T>::epsilon() * (T(1) + a.norm() * b.norm());
    assert((via_left - r.vec()).cwiseAbs().maxCoeff() <= tol);
    assert((via_right - r.vec()).cwiseAbs().maxCoeff() <= tol);
  }
#endif
  return r;
}

/// Sign convention for quaternions recovered from eigenproblems: the first
/// component with magnitude above `eps` is made positive.
template <std::floating_point T>
Quaternion<T> canonical_sign(const Quaternion<T>& q, T eps = T(1e-12)) {
  for (int i = 0; i < 4; ++i) {
    if (std::abs(q[i]) > eps) return q[i] < 0 ? -q : q;
  }
  return q;
}

/// R(q) for a unit quaternion. Inputs off the unit sphere are normalised first.
template <std::floating_point T>
Eigen::Matrix<T, 3, 3> to_rotation_matrix(const Quaternion<T>& q_in) {
  const Quaternion<T> q = q_in.is_unit() ? q_in : q_in.normalized();
  const T w = q.w, x = q.x, y = q.y, z = q.z;
  Eigen::Matrix<T, 3, 3> r;
  r << 1 - 2 * y * y - 2 * z * z, -2 * w * z + 2 * x * y,     2 * w * y + 2 * x * z,
       2 * w * z + 2 * x * y,     1 - 2 * x * x - 2 * z * z, -2 * w * x + 2 * y * z,
      -2 * w * y + 2 * x * z,     2 * w * x + 2 * y * z,     1 - 2 * x * x - 2 * y * y;
  return r;
}

/// Geodesic distance 2 acos(|<q, q'>|) in radians, in [0, pi].
template <std::floating_point T>
T dist_geodesic(const Quaternion<T>& a, const Quaternion<T>& b) {
  const T c = std::min(T(1), std::abs(dot(a, b)));
  return T(2) * std::acos(c);
}

/// Frobenius distance between rotation matrices, via ||R(q) - R(q')||_F^2 = 8 (1 - <q, q'>^2).
template <std::floating_point T>
T dist_frobenius(const Quaternion<T>& a, const Quaternion<T>& b) {
  const T c = dot(a, b);
  return std::sqrt(std::max(T(0), T(8) * (T(1) - c * c)));
}

template <std::floating_point T>
struct AverageQuaternion {
  Quaternion<T> q;
  /// True when the top two eigenvalues of sum q q^T tie, i.e. the minimiser is not unique.
  bool degenerate = false;
};

/// Frobenius-distance (chordal) mean: the top eigenvector of sum_i q_i q_i^T.
///
/// This is one Fréchet mean on S^3. The geodesic-distance mean differs in
/// general once samples are widely spread.
template <std::floating_point T>
AverageQuaternion<T> average_quaternion(std::span<const Quaternion<T>> samples) {
  if (samples.empty()) throw std::invalid_argument("average_quaternion: no samples");
  Eigen::Matrix<T, 4, 4> scatter = Eigen::Matrix<T, 4, 4>::Zero();
  for (const auto& q : samples) {
    const auto v = q.vec();
    scatter.noalias() += v * v.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<T, 4, 4>> es(scatter);
  const auto& ev = es.eigenvalues();  // ascending
  const T gap = ev[3] - ev[2];
  const T scale = std::max(T(1), std::abs(ev[3]));
  AverageQuaternion<T> out;
  out.q = canonical_sign(Quaternion<T>(Eigen::Matrix<T, 4, 1>(es.eigenvectors().col(3))));
  out.degenerate = gap <= T(1e-9) * scale;
  return out;
}

template <std::floating_point T>
AverageQuaternion<T> average_quaternion(const std::vector<Quaternion<T>>& samples) {
  return average_quaternion(std::span<const Quaternion<T>>(samples));
}

}  // namespace bingham
