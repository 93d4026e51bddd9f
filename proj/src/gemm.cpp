#include "gemm.hpp"

#include <Eigen/Core>

namespace pyrseg::detail {

namespace {
using Matrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const Matrix>;
using Map = Eigen::Map<Matrix>;
using Col = Eigen::Map<Eigen::VectorXf>;
using ConstCol = Eigen::Map<const Eigen::VectorXf>;
using Row = Eigen::Map<Eigen::RowVectorXf>;
using ConstRow = Eigen::Map<const Eigen::RowVectorXf>;
}  // namespace

// Degenerate shapes go through vector maps so Eigen sees contiguous storage
// and does not copy the destination.

void gemm_nn(int m, int n, int k, const float* a, const float* b, float* c) {
  if (n == 1) {
    Col(c, m).noalias() += ConstMap(a, m, k) * ConstCol(b, k);
  } else if (m == 1) {
    Row(c, n).noalias() += ConstRow(a, k) * ConstMap(b, k, n);
  } else {
    Map(c, m, n).noalias() += ConstMap(a, m, k) * ConstMap(b, k, n);
  }
}

void gemm_nt(int m, int n, int k, const float* a, const float* b, float* c) {
  if (n == 1) {
    Col(c, m).noalias() += ConstMap(a, m, k) * ConstCol(b, k);
  } else if (m == 1) {
    Row(c, n).noalias() += (ConstMap(b, n, k) * ConstCol(a, k)).transpose();
  } else {
    Map(c, m, n).noalias() += ConstMap(a, m, k) * ConstMap(b, n, k).transpose();
  }
}

void gemm_tn(int m, int n, int k, const float* a, const float* b, float* c) {
  if (n == 1) {
    Col(c, m).noalias() += ConstMap(a, k, m).transpose() * ConstCol(b, k);
  } else if (m == 1) {
    Row(c, n).noalias() += ConstRow(a, k) * ConstMap(b, k, n);
  } else {
    Map(c, m, n).noalias() += ConstMap(a, k, m).transpose() * ConstMap(b, k, n);
  }
}

}  // namespace pyrseg::detail
