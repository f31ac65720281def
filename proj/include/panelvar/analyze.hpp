#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "panelvar/identify.hpp"
#include "panelvar/types.hpp"

namespace panelvar {

// Linear interpolation of order statistics; midpoint convention for even
// counts at p = 0.5.
inline double quantile(std::vector<double> x, double p) {
  if (x.empty()) throw DataError("quantile of empty sample");
  std::sort(x.begin(), x.end());
  const double h = (static_cast<double>(x.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, x.size() - 1);
  return x[lo] + (h - lo) * (x[hi] - x[lo]);
}

struct IrfSummary {
  std::vector<double> probs;
  // value[country][qi][h] is an N x K matrix of quantiles.
  std::vector<std::vector<IrfTensor>> value;
};

inline IrfSummary irf_bands(const std::vector<StructuralDraw>& draws,
                            int n_countries, const std::vector<double>& probs) {
  if (draws.size() < 2) throw DataError("irf_bands: need at least 2 draws");
  const int H = static_cast<int>(draws[0].theta.size()) - 1;
  const auto n = draws[0].theta[0].rows();
  const auto k = draws[0].theta[0].cols();
  IrfSummary s;
  s.probs = probs;
  s.value.assign(n_countries, std::vector<IrfTensor>(
                                  probs.size(), IrfTensor(H + 1, Mat::Zero(n, k))));
  for (int c = 0; c < n_countries; ++c) {
    std::vector<const StructuralDraw*> mine;
    for (const auto& d : draws)
      if (d.country == c) mine.push_back(&d);
    if (mine.size() < 2) throw DataError("irf_bands: too few draws for a country");
    std::vector<double> buf(mine.size());
    for (int h = 0; h <= H; ++h)
      for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < k; ++j) {
          for (std::size_t d = 0; d < mine.size(); ++d)
            buf[d] = mine[d]->theta[h](i, j);
          for (std::size_t qi = 0; qi < probs.size(); ++qi)
            s.value[c][qi][h](i, j) = quantile(buf, probs[qi]);
        }
  }
  return s;
}

// Scale a shock's column in every draw of each country by one common factor so
// the median impact response of `variable` equals `target`. Presentation
// transform only; returns the per-country factors.
inline std::vector<double> normalize_shock(std::vector<StructuralDraw>& draws,
                                           int n_countries, int shock,
                                           int variable, double target) {
  std::vector<double> factors(n_countries, 1.0);
  for (int c = 0; c < n_countries; ++c) {
    std::vector<double> impacts;
    for (const auto& d : draws)
      if (d.country == c) impacts.push_back(d.theta[0](variable, shock));
    if (impacts.empty()) continue;
    const double med = quantile(impacts, 0.5);
    if (med == 0.0)
      throw NumericalError("normalize_shock: zero median impact response");
    factors[c] = target / med;
  }
  for (auto& d : draws)
    for (auto& th : d.theta) th.col(shock) *= factors[d.country];
  return factors;
}

// share(i, j, H) = sum_{h<H} theta_h(i,j)^2 / sum_j' sum_{h<H} theta_h(i,j')^2.
// Horizon values count forecast steps, so H=1 is the impact term alone.
inline std::vector<Mat> fevd(const IrfTensor& theta, const std::vector<int>& horizons) {
  const auto n = theta[0].rows();
  const auto k = theta[0].cols();
  std::vector<Mat> shares;
  shares.reserve(horizons.size());
  for (int H : horizons) {
    if (H < 1 || H > static_cast<int>(theta.size()))
      throw DataError("fevd: horizon out of range");
    Mat num = Mat::Zero(n, k);
    for (int h = 0; h < H; ++h) num += theta[h].cwiseProduct(theta[h]);
    Mat out(n, k);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double total = num.row(i).sum();
      if (!(total > 0.0))
        throw NumericalError("fevd: zero forecast-error variance at a horizon");
      out.row(i) = num.row(i) / total;
    }
    shares.push_back(std::move(out));
  }
  return shares;
}

// eps_t = (P Q)^{-1} u_t, row-wise over the residual matrix.
inline Mat structural_shocks(const Mat& U, const Mat& P, const Mat& Q) {
  Mat impact = P * Q;
  Eigen::PartialPivLU<Mat> lu(impact);
  if (std::abs(lu.determinant()) < 1e-300)
    throw NumericalError("structural_shocks: singular impact matrix");
  return lu.solve(U.transpose()).transpose();
}

struct HistoricalDecomposition {
  Mat actual;                      // T_e x N
  Mat baseline;                    // deterministic terms + initial conditions
  std::vector<Mat> contributions;  // one T_e x N matrix per structural shock
};

// Exact additive split via the companion recursion: the baseline propagates
// the pre-sample state and deterministic terms, each contribution propagates
// one shock's innovations from a zero state. Baseline + contributions = actual.
inline HistoricalDecomposition historical_decomposition(
    const Mat& Y, const Mat& Z, const Mat& B, const Mat& Gamma, const Mat& P,
    const Mat& Q, const Mat& eps, int lags) {
  const int n = static_cast<int>(Y.cols());
  const int k = n * lags;
  const auto T_e = Y.rows() - lags;
  if (eps.rows() != T_e) throw DataError("historical_decomposition: shock length mismatch");
  auto cf = companion(B, lags, n);
  Mat impact = P * Q;
  const int K = static_cast<int>(impact.cols());

  HistoricalDecomposition hd;
  hd.actual = Y.bottomRows(T_e);
  Mat Z_trim = Z.bottomRows(Z.rows() - lags);

  // Pre-sample companion state: most recent lag first.
  Vec w0 = Vec::Zero(k);
  for (int l = 0; l < lags; ++l)
    w0.segment(l * n, n) = Y.row(lags - 1 - l).transpose();

  hd.baseline.resize(T_e, n);
  Vec w = w0;
  for (Eigen::Index t = 0; t < T_e; ++t) {
    Vec drive = Vec::Zero(n);
    if (Gamma.rows() > 0) drive = Gamma.transpose() * Z_trim.row(t).transpose();
    Vec wn = cf.A * w;
    wn.head(n) += drive;
    hd.baseline.row(t) = wn.head(n).transpose();
    w = wn;
  }

  hd.contributions.assign(K, Mat::Zero(T_e, n));
  for (int j = 0; j < K; ++j) {
    Vec wj = Vec::Zero(k);
    for (Eigen::Index t = 0; t < T_e; ++t) {
      Vec wn = cf.A * wj;
      wn.head(n) += impact.col(j) * eps(t, j);
      hd.contributions[j].row(t) = wn.head(n).transpose();
      wj = wn;
    }
  }
  return hd;
}

// Counterfactual that removes one shock; the returned series is
// actual - counterfactual, i.e. the shock's cumulative contribution.
inline Mat counterfactual_difference(const HistoricalDecomposition& hd, int shock) {
  if (shock < 0 || shock >= static_cast<int>(hd.contributions.size()))
    throw ConfigError("counterfactual: unknown shock index");
  return hd.contributions[shock];
}

inline Mat counterfactual_series(const HistoricalDecomposition& hd, int shock) {
  return hd.actual - counterfactual_difference(hd, shock);
}

}  // namespace panelvar
