#ifndef BETHE_LINALG_HPP
#define BETHE_LINALG_HPP

#include <Eigen/Dense>
#include <cmath>

#include "bethe/util.hpp"

namespace bethe {

struct LogDet {
  double log_abs;  // log |det|, -inf when singular
  int sign;        // -1, 0, +1
};

// Determinant in log-magnitude + sign form via pivoted LU.
inline LogDet log_abs_det(const Eigen::MatrixXd& m) {
  if (m.rows() == 0) return {0.0, 1};
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(m);
  const auto& diag = lu.matrixLU().diagonal();
  double log_abs = 0.0;
  int sign = lu.permutationP().determinant() > 0 ? 1 : -1;
  for (Eigen::Index k = 0; k < diag.size(); ++k) {
    double d = diag[k];
    if (d == 0.0) return {kNegInf, 0};
    if (d < 0.0) sign = -sign;
    log_abs += std::log(std::abs(d));
  }
  return {log_abs, sign};
}

// Symmetric inverse square root with eigenvalue clamping.
// Throws NumericError when an eigenvalue falls below `min_eig` and
// clamping is disabled.
inline Eigen::MatrixXd sym_inv_sqrt(const Eigen::MatrixXd& m, bool clamp = false,
                                    double min_eig = 1e-12) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  Eigen::VectorXd ev = es.eigenvalues();
  for (Eigen::Index k = 0; k < ev.size(); ++k) {
    if (ev[k] < min_eig) {
      if (!clamp) throw NumericError("singular variance matrix");
      ev[k] = min_eig;
    }
  }
  Eigen::VectorXd inv_sqrt = ev.array().rsqrt();
  return es.eigenvectors() * inv_sqrt.asDiagonal() * es.eigenvectors().transpose();
}

// Spectral radius estimate by power iteration (diagnostic quality).
// Deterministic pseudo-random start so sign-symmetric matrices do not trap
// the iterate in an invariant subspace.
inline double spectral_radius(const Eigen::MatrixXd& m, int iters = 100) {
  if (m.rows() == 0) return 0.0;
  Eigen::VectorXd v(m.rows());
  for (Eigen::Index k = 0; k < v.size(); ++k)
    v[k] = 0.5 + static_cast<double>(splitmix64(k) >> 11) * 0x1.0p-53;
  v.normalize();
  double rho = 0.0;
  for (int k = 0; k < iters; ++k) {
    Eigen::VectorXd w = m * v;
    double n = w.norm();
    if (n == 0.0 || !std::isfinite(n)) return n == 0.0 ? 0.0 : kPosInf;
    rho = n;
    v = w / n;
  }
  return rho;
}

}  // namespace bethe

#endif  // BETHE_LINALG_HPP
