#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <optional>
#include <random>
#include <thread>
#include <vector>

#include "panelvar/model.hpp"
#include "panelvar/prior.hpp"
#include "panelvar/rng.hpp"
#include "panelvar/types.hpp"

namespace panelvar {

struct ChainConfig {
  std::uint64_t seed = 0;
  int n_chains = 1;
  int thinning = 1;
  int workers = 1;
  std::optional<double> fixed_lambda1;  // pin the tightness instead of sampling it

  void validate() const {
    if (n_chains < 1 || thinning < 1 || workers < 1)
      throw ConfigError("chain config: n_chains, thinning, workers must be >= 1");
    if (fixed_lambda1 && *fixed_lambda1 <= 0.0)
      throw ConfigError("fixed lambda1 must be positive");
  }
};

namespace detail {

inline Vec std_normal_vec(std::mt19937_64& rng, Eigen::Index n) {
  std::normal_distribution<double> nd;
  Vec z(n);
  for (Eigen::Index i = 0; i < n; ++i) z(i) = nd(rng);
  return z;
}

// Draw from N(mu, K^-1) given the precision K via its Cholesky factor.
inline Vec mvn_from_precision(const Mat& precision, const Vec& rhs,
                              std::mt19937_64& rng, const char* what) {
  Eigen::LLT<Mat> llt(precision);
  if (llt.info() != Eigen::Success)
    throw NumericalError(std::string(what) + ": posterior precision not SPD");
  Vec mu = llt.solve(rhs);
  Vec z = std_normal_vec(rng, rhs.size());
  return mu + llt.matrixU().solve(z);
}

inline Mat kron(const Mat& a, const Mat& b) {
  Mat out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

inline Mat spd_inverse(const Mat& s, const char* what) {
  Eigen::LLT<Mat> llt(s);
  if (llt.info() != Eigen::Success)
    throw NumericalError(std::string(what) + ": matrix not SPD");
  return llt.solve(Mat::Identity(s.rows(), s.cols()));
}

}  // namespace detail

// Conditional for beta_c = vec(B_c): N(mu*, V*) with
// V*^-1 = Lambda^-1 + Sigma^-1 (x) X'X and
// V*^-1 mu* = Lambda^-1 b + vec(X'(Y - Z Gamma) Sigma^-1).
inline Vec draw_beta(const Mat& Y_trim, const Mat& X, const Mat& Z,
                     const Mat& Gamma, const Mat& Sigma, const Vec& b,
                     const Vec& lambda_diag, std::mt19937_64& rng) {
  if ((lambda_diag.array() <= 0.0).any())
    throw NumericalError("draw_beta: prior variance diagonal must be positive");
  Mat sigma_inv = detail::spd_inverse(Sigma, "draw_beta");
  Mat xtx = X.transpose() * X;
  Mat precision = detail::kron(sigma_inv, xtx);
  precision.diagonal() += lambda_diag.cwiseInverse();
  Mat E = Y_trim;
  if (Z.cols() > 0) E -= Z * Gamma;
  Mat rhs_m = X.transpose() * E * sigma_inv;
  Vec rhs = lambda_diag.cwiseInverse().cwiseProduct(b) +
            Eigen::Map<const Vec>(rhs_m.data(), rhs_m.size());
  return detail::mvn_from_precision(precision, rhs, rng, "draw_beta");
}

// Flat-prior hierarchical conditional: b ~ N(mean of beta_c, Lambda / C).
inline Vec draw_common_mean(const std::vector<Vec>& betas, const Vec& lambda_diag,
                            std::mt19937_64& rng) {
  if (betas.empty()) throw DataError("draw_common_mean: no countries");
  Vec mean = Vec::Zero(betas[0].size());
  for (const auto& beta : betas) mean += beta;
  mean /= static_cast<double>(betas.size());
  Vec z = detail::std_normal_vec(rng, mean.size());
  return mean + (lambda_diag / static_cast<double>(betas.size()))
                    .cwiseSqrt()
                    .cwiseProduct(z);
}

// lambda1 | rest ~ IG(s + C q / 2, nu + 1/2 sum_c (beta_c - b)' Omega^-1 (beta_c - b)).
inline double draw_lambda1(const std::vector<Vec>& betas, const Vec& b,
                           const Vec& omega_diag, double s, double nu,
                           std::mt19937_64& rng) {
  const double q = static_cast<double>(b.size());
  double dispersion = 0.0;
  for (const auto& beta : betas) {
    Vec d = beta - b;
    dispersion += d.cwiseQuotient(omega_diag).dot(d);
  }
  const double shape = s + static_cast<double>(betas.size()) * q / 2.0;
  const double scale = nu + 0.5 * dispersion;
  if (!(scale > 0.0)) throw NumericalError("draw_lambda1: nonpositive scale");
  std::gamma_distribution<double> gd(shape, 1.0);
  return scale / gd(rng);
}

// Sigma_c | rest ~ IW(U'U, rows(U)) under the Jeffreys prior; Bartlett sampler.
inline Mat draw_sigma(const Mat& U, std::mt19937_64& rng) {
  const auto n = U.cols();
  const auto df = U.rows();
  if (df <= n) throw DataError("draw_sigma: need more residual rows than variables");
  Mat S = U.transpose() * U;
  Mat V = detail::spd_inverse(S, "draw_sigma");  // Wishart scale for the inverse
  Eigen::LLT<Mat> llt(V);
  if (llt.info() != Eigen::Success)
    throw NumericalError("draw_sigma: singular scale matrix");
  Mat Lv = llt.matrixL();
  std::normal_distribution<double> nd;
  Mat A = Mat::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    std::gamma_distribution<double> gd((static_cast<double>(df - i)) / 2.0, 2.0);
    A(i, i) = std::sqrt(gd(rng));
    for (Eigen::Index j = 0; j < i; ++j) A(i, j) = nd(rng);
  }
  Mat F = Lv * A;            // chol factor of W ~ Wishart(df, V)
  Mat W = F * F.transpose();
  return detail::spd_inverse(W, "draw_sigma");
}

// Gamma_c | rest: flat prior, normal GLS conditional with mean equal to the
// equation-by-equation OLS of (Y - X B) on Z and covariance Sigma (x) (Z'Z)^-1.
inline Mat draw_gamma_coef(const Mat& Y_trim, const Mat& X, const Mat& Z,
                           const Mat& B, const Mat& Sigma, std::mt19937_64& rng) {
  const auto m = Z.cols();
  const auto n = Y_trim.cols();
  if (m == 0) return Mat(0, n);
  Mat ztz = Z.transpose() * Z;
  Eigen::LLT<Mat> llt(ztz);
  if (llt.info() != Eigen::Success)
    throw NumericalError("draw_gamma_coef: rank-deficient deterministic matrix");
  Mat E = Y_trim - X * B;
  Mat mean = llt.solve(Z.transpose() * E);
  Eigen::LLT<Mat> llt_s(Sigma);
  if (llt_s.info() != Eigen::Success)
    throw NumericalError("draw_gamma_coef: Sigma not SPD");
  Mat Ls = llt_s.matrixL();
  Mat noise(m, n);
  std::normal_distribution<double> nd;
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < n; ++j) noise(i, j) = nd(rng);
  return mean + llt.matrixU().solve(noise) * Ls.transpose();
}

struct GibbsDiagnostics {
  std::vector<double> lambda1_trace;  // retained, chain-major
  double explosive_share = 0.0;       // fraction of retained (draw,country) with rho >= 1
  double rhat_lambda1 = 1.0;          // split-Rhat; 1.0 when not applicable
  double rhat_b_max = 1.0;
  int n_retained = 0;
};

struct GibbsResult {
  std::vector<PosteriorDraw> draws;  // chain-major, sweep order within chain
  GibbsDiagnostics diag;
};

namespace detail {

struct CountryWork {
  Mat Y_trim, X, Z;  // Z already trimmed to the estimation sample
};

inline std::vector<CountryWork> prepare(const PanelDataset& data, int lags) {
  std::vector<CountryWork> w;
  w.reserve(data.countries.size());
  for (const auto& c : data.countries) {
    auto [X, Yt] = build_lag_matrices(c.Y, lags);
    CountryWork cw;
    cw.X = std::move(X);
    cw.Y_trim = std::move(Yt);
    cw.Z = c.Z.bottomRows(c.Z.rows() - lags);
    w.push_back(std::move(cw));
  }
  return w;
}

// Per-country OLS of Y_trim on [X Z].
inline CountryDraw ols_init(const CountryWork& w) {
  const auto n = w.Y_trim.cols();
  const auto k = w.X.cols();
  const auto m = w.Z.cols();
  Mat R(w.X.rows(), k + m);
  R.leftCols(k) = w.X;
  if (m > 0) R.rightCols(m) = w.Z;
  Mat coef = (R.transpose() * R)
                 .ldlt()
                 .solve(R.transpose() * w.Y_trim);
  CountryDraw d;
  d.B = coef.topRows(k);
  d.Gamma = m > 0 ? Mat(coef.bottomRows(m)) : Mat(0, n);
  Mat U = w.Y_trim - R * coef;
  d.Sigma = U.transpose() * U / static_cast<double>(U.rows());
  // Guard against a singular OLS covariance on tiny samples.
  d.Sigma.diagonal().array() += 1e-8 * (d.Sigma.trace() + 1.0);
  return d;
}

inline double split_rhat(const std::vector<const double*>& chains, int len, int stride) {
  // Each chain is split in half; Gelman-Rubin over the resulting segments.
  if (len < 4) return 1.0;
  const int half = len / 2;
  std::vector<double> means, vars;
  for (const double* c : chains) {
    for (int part = 0; part < 2; ++part) {
      double m = 0, v = 0;
      for (int i = 0; i < half; ++i) m += c[(part * half + i) * stride];
      m /= half;
      for (int i = 0; i < half; ++i) {
        double d = c[(part * half + i) * stride] - m;
        v += d * d;
      }
      v /= (half - 1);
      means.push_back(m);
      vars.push_back(v);
    }
  }
  const int m_seg = static_cast<int>(means.size());
  double grand = 0;
  for (double m : means) grand += m;
  grand /= m_seg;
  double between = 0;
  for (double m : means) between += (m - grand) * (m - grand);
  between *= static_cast<double>(half) / (m_seg - 1);
  double within = 0;
  for (double v : vars) within += v;
  within /= m_seg;
  if (within <= 0) return 1.0;
  double var_est = (static_cast<double>(half - 1) / half) * within + between / half;
  return std::sqrt(var_est / within);
}

inline void run_chain(const PanelDataset& data, const ModelSpec& spec,
                      const ChainConfig& cfg, const MinnesotaScale& ms,
                      int chain, std::vector<PosteriorDraw>& out) {
  const int n = data.n_vars();
  const int C = static_cast<int>(data.countries.size());
  const auto work = prepare(data, spec.lags);
  const Eigen::Index q = static_cast<Eigen::Index>(n) * n * spec.lags;

  std::vector<CountryDraw> state(C);
  for (int c = 0; c < C; ++c) state[c] = ols_init(work[c]);
  Vec b = Vec::Zero(q);
  for (int c = 0; c < C; ++c)
    b += Eigen::Map<const Vec>(state[c].B.data(), q);
  b /= C;
  double lambda1 = cfg.fixed_lambda1.value_or(0.1);

  const bool full_pooling = spec.pooling == Pooling::Full;
  out.clear();
  out.reserve((spec.n_draws - spec.n_burn) / cfg.thinning + 1);

  for (int sweep = 0; sweep < spec.n_draws; ++sweep) {
    const auto key = [&](std::uint64_t block) {
      return substream(cfg.seed, static_cast<std::uint64_t>(chain),
                       static_cast<std::uint64_t>(sweep), block);
    };
    try {
      if (full_pooling) {
        // One common B and Gamma; flat prior, information summed over countries.
        Mat precision = Mat::Zero(q, q);
        Vec rhs = Vec::Zero(q);
        std::vector<Mat> sigma_inv(C);
        for (int c = 0; c < C; ++c) {
          sigma_inv[c] = spd_inverse(state[c].Sigma, "run_gibbs");
          precision += kron(sigma_inv[c], work[c].X.transpose() * work[c].X);
          Mat E = work[c].Y_trim;
          if (work[c].Z.cols() > 0) E -= work[c].Z * state[c].Gamma;
          Mat rm = work[c].X.transpose() * E * sigma_inv[c];
          rhs += Eigen::Map<const Vec>(rm.data(), rm.size());
        }
        auto rng_b = key(1);
        Vec beta = mvn_from_precision(precision, rhs, rng_b, "run_gibbs(pooled beta)");
        Mat B = Eigen::Map<const Mat>(beta.data(), n * spec.lags, n);
        for (int c = 0; c < C; ++c) state[c].B = B;
        b = beta;
        // Common Gamma.
        const auto m = work[0].Z.cols();
        if (m > 0) {
          Mat gprec = Mat::Zero(m * n, m * n);
          Vec grhs = Vec::Zero(m * n);
          for (int c = 0; c < C; ++c) {
            gprec += kron(sigma_inv[c], work[c].Z.transpose() * work[c].Z);
            Mat E = work[c].Y_trim - work[c].X * state[c].B;
            Mat rm = work[c].Z.transpose() * E * sigma_inv[c];
            grhs += Eigen::Map<const Vec>(rm.data(), rm.size());
          }
          auto rng_g = key(2);
          Vec g = mvn_from_precision(gprec, grhs, rng_g, "run_gibbs(pooled gamma)");
          Mat G = Eigen::Map<const Mat>(g.data(), m, n);
          for (int c = 0; c < C; ++c) state[c].Gamma = G;
        }
        for (int c = 0; c < C; ++c) {
          Mat U = residuals(work[c].Y_trim, work[c].X, work[c].Z, state[c].B,
                            state[c].Gamma);
          auto rng_s = key(100 + static_cast<std::uint64_t>(c));
          state[c].Sigma = draw_sigma(U, rng_s);
        }
        lambda1 = 0.0;
      } else {
        Vec lambda_diag = lambda1 * ms.omega_diag;
        std::vector<Vec> betas(C);
        for (int c = 0; c < C; ++c) {
          auto rng_c = key(10 + static_cast<std::uint64_t>(c));
          betas[c] = draw_beta(work[c].Y_trim, work[c].X, work[c].Z,
                               state[c].Gamma, state[c].Sigma, b, lambda_diag,
                               rng_c);
          state[c].B = Eigen::Map<const Mat>(betas[c].data(), n * spec.lags, n);
        }
        auto rng_b = key(1);
        b = draw_common_mean(betas, lambda_diag, rng_b);
        if (!cfg.fixed_lambda1) {
          auto rng_l = key(2);
          lambda1 = draw_lambda1(betas, b, ms.omega_diag, spec.ig_shape,
                                 spec.ig_scale, rng_l);
        }
        for (int c = 0; c < C; ++c) {
          Mat U = residuals(work[c].Y_trim, work[c].X, work[c].Z, state[c].B,
                            state[c].Gamma);
          auto rng_s = key(100 + static_cast<std::uint64_t>(c));
          state[c].Sigma = draw_sigma(U, rng_s);
        }
        for (int c = 0; c < C; ++c) {
          if (work[c].Z.cols() == 0) continue;
          auto rng_g = key(200 + static_cast<std::uint64_t>(c));
          state[c].Gamma = draw_gamma_coef(work[c].Y_trim, work[c].X, work[c].Z,
                                           state[c].B, state[c].Sigma, rng_g);
        }
      }
    } catch (const NumericalError& e) {
      throw NumericalError(std::string(e.what()) + " (chain " +
                           std::to_string(chain) + ", sweep " +
                           std::to_string(sweep) + ")");
    }

    if (sweep >= spec.n_burn && (sweep - spec.n_burn) % cfg.thinning == 0) {
      PosteriorDraw d;
      d.countries = state;
      d.b = b;
      d.lambda1 = lambda1;
      out.push_back(std::move(d));
    }
  }
}

}  // namespace detail

inline GibbsResult run_gibbs(const PanelDataset& data, const ModelSpec& spec,
                             const ChainConfig& cfg) {
  spec.validate();
  cfg.validate();
  data.validate(spec.lags);
  const int n = data.n_vars();

  MinnesotaScale ms;
  if (spec.pooling == Pooling::Partial)
    ms = minnesota_omega(pooled_sigma(data, spec.lags), n, spec.lags,
                         spec.lambda2, spec.lambda3);

  std::vector<std::vector<PosteriorDraw>> per_chain(cfg.n_chains);
  if (cfg.workers > 1 && cfg.n_chains > 1) {
    std::vector<std::thread> threads;
    std::exception_ptr err;
    std::mutex err_mu;
    std::atomic<int> next{0};
    const int nw = std::min(cfg.workers, cfg.n_chains);
    for (int w = 0; w < nw; ++w)
      threads.emplace_back([&] {
        for (int ch; (ch = next.fetch_add(1)) < cfg.n_chains;) {
          try {
            detail::run_chain(data, spec, cfg, ms, ch, per_chain[ch]);
          } catch (...) {
            std::lock_guard<std::mutex> lk(err_mu);
            if (!err) err = std::current_exception();
          }
        }
      });
    for (auto& t : threads) t.join();
    if (err) std::rethrow_exception(err);
  } else {
    for (int ch = 0; ch < cfg.n_chains; ++ch)
      detail::run_chain(data, spec, cfg, ms, ch, per_chain[ch]);
  }

  GibbsResult res;
  // Convergence diagnostics come from the per-chain layout; compute them
  // before the draws are moved into the flat result.
  const int per = per_chain.empty() ? 0 : static_cast<int>(per_chain[0].size());
  if (per >= 4 && spec.pooling == Pooling::Partial) {
    std::vector<const double*> lam_chains;
    std::vector<std::vector<double>> lam_store(cfg.n_chains);
    for (int ch = 0; ch < cfg.n_chains; ++ch) {
      for (const auto& d : per_chain[ch]) lam_store[ch].push_back(d.lambda1);
      lam_chains.push_back(lam_store[ch].data());
    }
    res.diag.rhat_lambda1 = detail::split_rhat(lam_chains, per, 1);
    double worst = 1.0;
    const Eigen::Index q = per_chain[0].front().b.size();
    std::vector<std::vector<double>> b_store(cfg.n_chains);
    for (Eigen::Index k = 0; k < q; ++k) {
      std::vector<const double*> b_chains;
      for (int ch = 0; ch < cfg.n_chains; ++ch) {
        b_store[ch].clear();
        for (const auto& d : per_chain[ch]) b_store[ch].push_back(d.b(k));
        b_chains.push_back(b_store[ch].data());
      }
      worst = std::max(worst, detail::split_rhat(b_chains, per, 1));
    }
    res.diag.rhat_b_max = worst;
  }

  for (auto& chain : per_chain)
    for (auto& d : chain) res.draws.push_back(std::move(d));
  res.diag.n_retained = static_cast<int>(res.draws.size());
  res.diag.lambda1_trace.reserve(res.draws.size());
  for (const auto& d : res.draws) res.diag.lambda1_trace.push_back(d.lambda1);

  // Explosive-draw share on an evenly spaced subset (diagnostic only).
  const int C = static_cast<int>(data.countries.size());
  const int probe = std::min<int>(res.diag.n_retained, 2000);
  if (probe > 0) {
    int explosive = 0, total = 0;
    const int step = std::max<int>(1, res.diag.n_retained / probe);
    for (int i = 0; i < res.diag.n_retained; i += step)
      for (int c = 0; c < C; ++c) {
        auto cf = companion(res.draws[i].countries[c].B, spec.lags, n);
        if (spectral_radius(cf.A) >= 1.0) ++explosive;
        ++total;
      }
    res.diag.explosive_share = total ? static_cast<double>(explosive) / total : 0.0;
  }
  return res;
}

}  // namespace panelvar
