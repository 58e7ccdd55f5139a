#pragma once

// Dense reference simulator for tests: builds full 2^Q x 2^Q operators with
// Kronecker products, independent of the strided kernels under test.

#include <cmath>
#include <complex>

#include <Eigen/Dense>

namespace oracle {

using cplx = std::complex<double>;
using Mat = Eigen::MatrixXcd;

inline Mat kron(const Mat& a, const Mat& b) {
  Mat out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

inline Mat ry(double t) {
  Mat m(2, 2);
  m << std::cos(t / 2), -std::sin(t / 2), std::sin(t / 2), std::cos(t / 2);
  return m;
}

inline Mat hadamard() {
  const double s = 1.0 / std::sqrt(2.0);
  Mat m(2, 2);
  m << s, s, s, -s;
  return m;
}

inline Mat pauli_x() {
  Mat m(2, 2);
  m << 0, 1, 1, 0;
  return m;
}

inline Mat pauli_z() {
  Mat m(2, 2);
  m << 1, 0, 0, -1;
  return m;
}

/// u acting on qubit q of n (qubit 0 leftmost in the tensor product).
inline Mat on_qubit(const Mat& u, int q, int n) {
  Mat out = Mat::Identity(1, 1);
  for (int k = 0; k < n; ++k) out = kron(out, k == q ? u : Mat::Identity(2, 2));
  return out;
}

/// Permutation matrix of CNOT(control, target); qubit q is bit (n - 1 - q).
inline Mat cnot(int control, int target, int n) {
  const Eigen::Index dim = Eigen::Index(1) << n;
  Mat out = Mat::Zero(dim, dim);
  for (Eigen::Index b = 0; b < dim; ++b) {
    Eigen::Index to = b;
    if ((b >> (n - 1 - control)) & 1) to ^= Eigen::Index(1) << (n - 1 - target);
    out(to, b) = 1.0;
  }
  return out;
}

inline double expect_z(const Eigen::VectorXcd& psi, int q, int n) {
  return (psi.adjoint() * on_qubit(pauli_z(), q, n) * psi)(0, 0).real();
}

inline double expect_z(const Mat& rho, int q, int n) { return (on_qubit(pauli_z(), q, n) * rho).trace().real(); }

}  // namespace oracle
