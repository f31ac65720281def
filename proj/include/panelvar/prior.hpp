#pragma once

#include <cmath>

#include "panelvar/model.hpp"
#include "panelvar/types.hpp"

namespace panelvar {

struct MinnesotaScale {
  Vec omega_diag;  // length N^2*L, prior variances for vec(B)
  Vec sigma;       // length N, pooled residual standard deviations
};

// Residual sd of one pooled regression per variable: variable i on L lags of
// all variables plus an intercept, all countries stacked.
inline Vec pooled_sigma(const PanelDataset& data, int lags) {
  const int n = data.n_vars();
  Eigen::Index rows = 0;
  for (const auto& c : data.countries) {
    if (c.Y.rows() <= lags + n * lags)
      throw DataError("country " + c.code + ": too few rows for pooled regression");
    rows += c.Y.rows() - lags;
  }
  const int k = n * lags + 1;
  Mat X(rows, k);
  Mat Y(rows, n);
  Eigen::Index at = 0;
  for (const auto& c : data.countries) {
    auto [Xc, Yc] = build_lag_matrices(c.Y, lags);
    X.block(at, 0, Xc.rows(), n * lags) = Xc;
    X.block(at, n * lags, Xc.rows(), 1).setOnes();
    Y.middleRows(at, Yc.rows()) = Yc;
    at += Xc.rows();
  }
  Mat xtx = X.transpose() * X;
  Eigen::LDLT<Mat> ldlt(xtx);
  if (ldlt.info() != Eigen::Success || (ldlt.vectorD().array() <= 1e-10 * xtx.norm()).any())
    throw DataError("degenerate data: pooled regressor matrix is rank deficient");
  Mat Bhat = ldlt.solve(X.transpose() * Y);
  Mat U = Y - X * Bhat;
  Vec sig(n);
  // No dof correction: stacking a duplicate country then leaves sigma exact.
  for (int i = 0; i < n; ++i) {
    sig(i) = std::sqrt(U.col(i).squaredNorm() / static_cast<double>(rows));
    if (!(sig(i) > 0.0))
      throw DataError("degenerate data: zero pooled residual variance");
  }
  return sig;
}

// Prior sd for coefficient (equation i, variable j, lag l) is 1/l^{lambda3}
// when i==j and sigma_i*lambda2/sigma_j when i!=j. Off-diagonals of Omega
// are zero, so only the diagonal is stored.
inline MinnesotaScale minnesota_omega(const Vec& sigma, int n, int lags,
                                      double lambda2, double lambda3) {
  if (sigma.size() != n) throw DataError("sigma has wrong length");
  if ((sigma.array() <= 0.0).any()) throw DataError("nonpositive sigma");
  MinnesotaScale ms;
  ms.sigma = sigma;
  ms.omega_diag.resize(static_cast<Eigen::Index>(n) * n * lags);
  // vec(B) ordering: equation i (column of B) varies slowest, then lag, then variable.
  for (int i = 0; i < n; ++i)
    for (int l = 1; l <= lags; ++l)
      for (int j = 0; j < n; ++j) {
        const double sd = (i == j) ? 1.0 / std::pow(static_cast<double>(l), lambda3)
                                   : sigma(i) * lambda2 / sigma(j);
        ms.omega_diag(static_cast<Eigen::Index>(i) * n * lags + (l - 1) * n + j) = sd * sd;
      }
  return ms;
}

// Log of the IG kernel lambda^{-(s+1)} exp(-nu/lambda), up to a constant.
inline double lambda1_log_density(double lambda1, double s, double nu) {
  if (!(lambda1 > 0.0)) throw NumericalError("lambda1 must be positive");
  return -(s + 1.0) * std::log(lambda1) - nu / lambda1;
}

}  // namespace panelvar
