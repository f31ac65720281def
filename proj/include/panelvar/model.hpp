#pragma once

#include <utility>

#include "panelvar/types.hpp"

namespace panelvar {

// Row t of X holds [y'_{t-1}, ..., y'_{t-L}] aligned with row t of Y_trim.
inline std::pair<Mat, Mat> build_lag_matrices(const Mat& Y, int lags) {
  const auto T = Y.rows();
  const auto n = Y.cols();
  if (T <= lags) throw DataError("insufficient sample: T <= L");
  const auto rows = T - lags;
  Mat X(rows, n * lags);
  for (int l = 1; l <= lags; ++l)
    X.middleCols((l - 1) * n, n) = Y.middleRows(lags - l, rows);
  Mat Y_trim = Y.bottomRows(rows);
  return {std::move(X), std::move(Y_trim)};
}

inline CompanionForm companion(const Mat& B, int lags, int n) {
  if (B.rows() != static_cast<Eigen::Index>(n) * lags || B.cols() != n)
    throw DataError("coefficient stack has wrong shape");
  const int k = n * lags;
  CompanionForm cf;
  cf.A = Mat::Zero(k, k);
  cf.A.topRows(n) = B.transpose();
  if (lags > 1)
    cf.A.bottomLeftCorner(k - n, k - n).setIdentity();
  cf.J = Mat::Zero(n, k);
  cf.J.leftCols(n).setIdentity();
  return cf;
}

inline double spectral_radius(const Mat& A) {
  return Eigen::EigenSolver<Mat>(A, false).eigenvalues().array().abs().maxCoeff();
}

inline Mat residuals(const Mat& Y_trim, const Mat& X, const Mat& Z,
                     const Mat& B, const Mat& Gamma) {
  if (X.cols() != B.rows() || Z.cols() != Gamma.rows() ||
      B.cols() != Y_trim.cols() || Gamma.cols() != Y_trim.cols() ||
      X.rows() != Y_trim.rows() || Z.rows() != Y_trim.rows())
    throw DataError("residuals: non-conformable shapes");
  Mat U = Y_trim - X * B;
  if (Z.cols() > 0) U -= Z * Gamma;
  return U;
}

}  // namespace panelvar
