#pragma once

#include <Eigen/Dense>

namespace bingham {

using Matrix4 = Eigen::Matrix4d;
using Matrix3 = Eigen::Matrix3d;
using Vector4 = Eigen::Vector4d;

/// 10-component encoding of a symmetric 4x4 matrix (upper triangle, row-major).
using Theta = Eigen::Matrix<double, 10, 1>;

/// triu: theta -> symmetric matrix
///
///   t1 t2 t3 t4
///   t2 t5 t6 t7
///   t3 t6 t8 t9
///   t4 t7 t9 t10
inline Matrix4 triu(const Theta& t) {
  Matrix4 a;
  a << t[0], t[1], t[2], t[3],
       t[1], t[4], t[5], t[6],
       t[2], t[5], t[7], t[8],
       t[3], t[6], t[8], t[9];
  return a;
}

/// Inverse of triu on symmetric input (reads the upper triangle).
inline Theta theta_from_matrix(const Matrix4& a) {
  Theta t;
  t << a(0, 0), a(0, 1), a(0, 2), a(0, 3), a(1, 1), a(1, 2), a(1, 3), a(2, 2), a(2, 3), a(3, 3);
  return t;
}

/// Pullback of a symmetric-matrix gradient through triu. Each off-diagonal
/// theta feeds two symmetric slots, so its entry is doubled.
inline Theta theta_pullback(const Matrix4& grad_a) {
  Theta t;
  t << grad_a(0, 0), 2 * grad_a(0, 1), 2 * grad_a(0, 2), 2 * grad_a(0, 3),
       grad_a(1, 1), 2 * grad_a(1, 2), 2 * grad_a(1, 3),
       grad_a(2, 2), 2 * grad_a(2, 3),
       grad_a(3, 3);
  return t;
}

}  // namespace bingham
