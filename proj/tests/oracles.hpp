#pragma once

// Reference implementations used only by tests. None of them call into the
// library's numerical code.

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "wjmix/tensor.hpp"

namespace oracle {

using wjmix::Matrix;

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  return c;
}

inline Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

struct Eigen {
  std::vector<double> values;  // ascending
  Matrix vectors;              // columns, matching `values`
};

// Cyclic Jacobi rotations on a symmetric matrix.
inline Eigen symmetric_eigen(Matrix a) {
  const std::size_t n = a.rows();
  Matrix v = Matrix::identity(n);
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off < 1e-30) break;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(a(p, q)) < 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](auto x, auto y) { return a(x, x) < a(y, y); });
  Eigen e;
  e.vectors = Matrix(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    e.values.push_back(a(order[k], order[k]));
    for (std::size_t i = 0; i < n; ++i) e.vectors(i, k) = v(i, order[k]);
  }
  return e;
}

// Horn's closed-form similarity alignment via the unit quaternion that
// maximizes Σ g_i·(R p_i) (both centred).
inline Matrix procrustes(const Matrix& pred, const Matrix& gt) {
  const std::size_t n = pred.rows();
  double mp[3] = {0, 0, 0}, mg[3] = {0, 0, 0};
  for (std::size_t i = 0; i < n; ++i)
    for (int k = 0; k < 3; ++k) {
      mp[k] += pred(i, k) / static_cast<double>(n);
      mg[k] += gt(i, k) / static_cast<double>(n);
    }
  double m[3][3] = {};
  double pp = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (int a = 0; a < 3; ++a) {
      pp += (pred(i, a) - mp[a]) * (pred(i, a) - mp[a]);
      for (int b = 0; b < 3; ++b) m[a][b] += (pred(i, a) - mp[a]) * (gt(i, b) - mg[b]);
    }
  const double sxx = m[0][0], sxy = m[0][1], sxz = m[0][2], syx = m[1][0], syy = m[1][1],
               syz = m[1][2], szx = m[2][0], szy = m[2][1], szz = m[2][2];
  const Matrix nmat = Matrix::from_rows({{sxx + syy + szz, syz - szy, szx - sxz, sxy - syx},
                                         {syz - szy, sxx - syy - szz, sxy + syx, szx + sxz},
                                         {szx - sxz, sxy + syx, -sxx + syy - szz, syz + szy},
                                         {sxy - syx, szx + sxz, syz + szy, -sxx - syy + szz}});
  const Eigen e = symmetric_eigen(nmat);
  const double q0 = e.vectors(0, 3), qx = e.vectors(1, 3), qy = e.vectors(2, 3), qz = e.vectors(3, 3);
  const double r[3][3] = {
      {q0 * q0 + qx * qx - qy * qy - qz * qz, 2 * (qx * qy - q0 * qz), 2 * (qx * qz + q0 * qy)},
      {2 * (qy * qx + q0 * qz), q0 * q0 - qx * qx + qy * qy - qz * qz, 2 * (qy * qz - q0 * qx)},
      {2 * (qz * qx - q0 * qy), 2 * (qz * qy + q0 * qx), q0 * q0 - qx * qx - qy * qy + qz * qz}};
  const double scale = e.values[3] / pp;
  Matrix out(n, 3);
  for (std::size_t i = 0; i < n; ++i)
    for (int a = 0; a < 3; ++a) {
      double s = 0.0;
      for (int b = 0; b < 3; ++b) s += r[a][b] * (pred(i, b) - mp[b]);
      out(i, a) = scale * s + mg[a];
    }
  return out;
}

inline double rel_frobenius(const Matrix& a, const Matrix& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a.data()[i] - b.data()[i]) * (a.data()[i] - b.data()[i]);
    den += b.data()[i] * b.data()[i];
  }
  return std::sqrt(num) / std::sqrt(den);
}

}  // namespace oracle
