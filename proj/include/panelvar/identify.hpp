#pragma once

#include <algorithm>
#include <atomic>
#include <fstream>
#include <mutex>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "panelvar/model.hpp"
#include "panelvar/rng.hpp"
#include "panelvar/sampler.hpp"
#include "panelvar/types.hpp"

namespace panelvar {

enum class SignKind { Positive, Negative, Zero };

struct Restriction {
  int variable = 0;
  SignKind kind = SignKind::Positive;
  int h_lo = 0, h_hi = 0;  // inclusive horizon window, impact = 0
};

struct Normalization {
  int variable = 0;
  double target = 0.1;
};

struct ShockSpec {
  std::string name;
  std::vector<Restriction> restrictions;
  std::optional<Normalization> normalize;

  int zero_count() const {
    return static_cast<int>(std::count_if(
        restrictions.begin(), restrictions.end(),
        [](const Restriction& r) { return r.kind == SignKind::Zero; }));
  }
};

struct RestrictionSet {
  std::vector<std::string> variable_names;
  std::vector<ShockSpec> shocks;  // named shocks, configured order

  int n_vars() const { return static_cast<int>(variable_names.size()); }

  int max_restricted_horizon() const {
    int h = 0;
    for (const auto& s : shocks)
      for (const auto& r : s.restrictions) h = std::max(h, r.h_hi);
    return h;
  }

  // Processing order for the null-space algorithm: descending zero-restriction
  // count, ties by configured column order. Unnamed filler shocks go last.
  std::vector<int> processing_order() const {
    std::vector<int> ord(shocks.size());
    std::iota(ord.begin(), ord.end(), 0);
    std::stable_sort(ord.begin(), ord.end(), [&](int a, int b) {
      return shocks[a].zero_count() > shocks[b].zero_count();
    });
    return ord;
  }

  void validate() const {
    const int k = n_vars();
    if (k == 0) throw ConfigError("restriction set: no variables");
    if (static_cast<int>(shocks.size()) > k)
      throw ConfigError("restriction set: more shocks than variables");
    for (const auto& s : shocks) {
      for (const auto& r : s.restrictions) {
        if (r.variable < 0 || r.variable >= k)
          throw ConfigError("restriction on unknown variable index");
        if (r.h_lo < 0 || r.h_hi < r.h_lo)
          throw ConfigError("bad horizon window in shock " + s.name);
        if (r.kind == SignKind::Zero && r.h_lo != r.h_hi)
          throw ConfigError("zero restrictions must target a single horizon");
      }
      if (s.normalize && (s.normalize->variable < 0 || s.normalize->variable >= k))
        throw ConfigError("normalization on unknown variable index");
    }
    auto ord = processing_order();
    for (int j = 0; j < static_cast<int>(ord.size()); ++j)
      if (shocks[ord[j]].zero_count() > k - (j + 1))
        throw ConfigError("shock " + shocks[ord[j]].name +
                          " carries more zero restrictions than K-j allows");
  }

  int shock_index(const std::string& name) const {
    for (int j = 0; j < static_cast<int>(shocks.size()); ++j)
      if (shocks[j].name == name) return j;
    throw ConfigError("unknown shock name: " + name);
  }

  int variable_index(const std::string& name) const {
    for (int i = 0; i < n_vars(); ++i)
      if (variable_names[i] == name) return i;
    throw ConfigError("unknown variable name: " + name);
  }

  // Output -, loan volume -, lending rate -/+/+ at horizons 3..6 for all three
  // shocks; sovereign risk: home bias +, spread +, short rate - on impact;
  // credit supply: home bias zero on impact.
  static RestrictionSet baseline() {
    RestrictionSet rs;
    rs.variable_names = {"output",    "prices", "loans",     "lending_rate",
                         "home_bias", "spread", "short_rate"};
    auto var = [&](const char* v) { return rs.variable_index(v); };
    ShockSpec demand{"credit_demand",
                     {{var("output"), SignKind::Negative, 3, 6},
                      {var("loans"), SignKind::Negative, 3, 6},
                      {var("lending_rate"), SignKind::Negative, 3, 6}},
                     Normalization{var("lending_rate"), -0.1}};
    ShockSpec supply{"credit_supply",
                     {{var("output"), SignKind::Negative, 3, 6},
                      {var("loans"), SignKind::Negative, 3, 6},
                      {var("lending_rate"), SignKind::Positive, 3, 6},
                      {var("home_bias"), SignKind::Zero, 0, 0}},
                     Normalization{var("lending_rate"), 0.1}};
    ShockSpec sovereign{"sovereign_risk",
                        {{var("output"), SignKind::Negative, 3, 6},
                         {var("loans"), SignKind::Negative, 3, 6},
                         {var("lending_rate"), SignKind::Positive, 3, 6},
                         {var("home_bias"), SignKind::Positive, 0, 0},
                         {var("spread"), SignKind::Positive, 0, 0},
                         {var("short_rate"), SignKind::Negative, 0, 0}},
                        Normalization{var("spread"), 0.1}};
    rs.shocks = {demand, supply, sovereign};
    return rs;
  }

  // Same restrictions with unemployment replacing output; effects on
  // unemployment are positive.
  static RestrictionSet baseline_unemployment() {
    RestrictionSet rs = baseline();
    int out = rs.variable_index("output");
    rs.variable_names[out] = "unemployment";
    for (auto& s : rs.shocks)
      for (auto& r : s.restrictions)
        if (r.variable == out && r.kind != SignKind::Zero)
          r.kind = r.kind == SignKind::Negative ? SignKind::Positive
                                                : SignKind::Negative;
    return rs;
  }

  static RestrictionSet from_json(const nlohmann::json& j) {
    RestrictionSet rs;
    rs.variable_names = j.at("variables").get<std::vector<std::string>>();
    for (const auto& js : j.at("shocks")) {
      ShockSpec s;
      s.name = js.at("name").get<std::string>();
      for (const auto& jr : js.at("restrictions")) {
        Restriction r;
        r.variable = rs.variable_index(jr.at("variable").get<std::string>());
        const std::string sign = jr.at("sign").get<std::string>();
        if (sign == "+") r.kind = SignKind::Positive;
        else if (sign == "-") r.kind = SignKind::Negative;
        else if (sign == "0") r.kind = SignKind::Zero;
        else throw ConfigError("restriction sign must be '+', '-' or '0'");
        const auto& h = jr.at("horizons");
        r.h_lo = h.at(0).get<int>();
        r.h_hi = h.at(1).get<int>();
        s.restrictions.push_back(r);
      }
      if (js.contains("normalize")) {
        Normalization nm;
        nm.variable = rs.variable_index(js["normalize"].at("variable").get<std::string>());
        nm.target = js["normalize"].at("target").get<double>();
        s.normalize = nm;
      }
      rs.shocks.push_back(std::move(s));
    }
    rs.validate();
    return rs;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["variables"] = variable_names;
    j["shocks"] = nlohmann::json::array();
    for (const auto& s : shocks) {
      nlohmann::json js;
      js["name"] = s.name;
      js["restrictions"] = nlohmann::json::array();
      for (const auto& r : s.restrictions) {
        const char* sign = r.kind == SignKind::Positive   ? "+"
                           : r.kind == SignKind::Negative ? "-"
                                                          : "0";
        js["restrictions"].push_back({{"variable", variable_names[r.variable]},
                                      {"sign", sign},
                                      {"horizons", {r.h_lo, r.h_hi}}});
      }
      if (s.normalize)
        js["normalize"] = {{"variable", variable_names[s.normalize->variable]},
                           {"target", s.normalize->target}};
      j["shocks"].push_back(js);
    }
    return j;
  }

  static RestrictionSet load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open restriction file: " + path);
    nlohmann::json j;
    in >> j;
    return from_json(j);
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write restriction file: " + path);
    out << to_json().dump(2) << "\n";
  }
};

// IRF tensor: theta[h] is N x K, column j the response to structural shock j.
using IrfTensor = std::vector<Mat>;

struct StructuralDraw {
  int country = 0;
  int posterior_index = 0;  // index into the reduced-form draw sequence
  Mat P;  // lower-triangular impact factor, P P' = Sigma
  Mat Q;  // K x K orthonormal
  IrfTensor theta;
};

inline Mat chol_impact(const Mat& sigma) {
  Eigen::LLT<Mat> llt(sigma);
  if (llt.info() != Eigen::Success)
    throw NumericalError("chol_impact: covariance not SPD");
  return llt.matrixL();
}

// Reduced-form multipliers Psi_h = J A^h J' for h = 0..H.
inline std::vector<Mat> reduced_multipliers(const Mat& B, int lags, int n, int horizon) {
  auto cf = companion(B, lags, n);
  std::vector<Mat> psi(horizon + 1);
  Mat Ah = Mat::Identity(cf.A.rows(), cf.A.cols());
  psi[0] = Mat::Identity(n, n);
  for (int h = 1; h <= horizon; ++h) {
    Ah = cf.A * Ah;
    psi[h] = Ah.topLeftCorner(n, n);
  }
  return psi;
}

inline IrfTensor irf_tensor(const Mat& B, const Mat& P, const Mat& Q, int horizon,
                            int lags) {
  const int n = static_cast<int>(B.cols());
  if (P.rows() != n || Q.rows() != n)
    throw DataError("irf_tensor: shape mismatch");
  auto psi = reduced_multipliers(B, lags, n, horizon);
  IrfTensor theta(horizon + 1);
  Mat impact = P * Q;
  for (int h = 0; h <= horizon; ++h) theta[h] = psi[h] * impact;
  return theta;
}

namespace detail {

inline Mat nullspace_basis(const Mat& rows, int k) {
  if (rows.rows() == 0) return Mat::Identity(k, k);
  Eigen::JacobiSVD<Mat> svd(rows, Eigen::ComputeFullV);
  const double tol = 1e-12 * std::max<double>(1.0, svd.singularValues()(0));
  int rank = 0;
  for (Eigen::Index i = 0; i < svd.singularValues().size(); ++i)
    if (svd.singularValues()(i) > tol) ++rank;
  if (rank >= k) return Mat(k, 0);
  return svd.matrixV().rightCols(k - rank);
}

}  // namespace detail

// Null-space rotation sampler. zero_rows[j] holds, for the shock processed
// j-th, the rows r such that r * q_j must vanish (one row per zero
// restriction, already multiplied through the reduced-form multipliers and P).
inline Mat draw_q_nullspace(const std::vector<Mat>& zero_rows, int k,
                            std::mt19937_64& rng) {
  Mat Q(k, k);
  std::normal_distribution<double> nd;
  for (int j = 0; j < k; ++j) {
    const Eigen::Index zr = j < static_cast<int>(zero_rows.size())
                                ? zero_rows[j].rows()
                                : 0;
    Mat R(zr + j, k);
    if (zr > 0) R.topRows(zr) = zero_rows[j];
    for (int i = 0; i < j; ++i) R.row(zr + i) = Q.col(i).transpose();
    Mat N = detail::nullspace_basis(R, k);
    if (N.cols() == 0)
      throw InfeasibleError("trivial null space: too many restrictions for shock " +
                            std::to_string(j));
    Vec x(k);
    for (int i = 0; i < k; ++i) x(i) = nd(rng);
    Vec proj = N.transpose() * x;
    const double norm = proj.norm();
    if (norm < 1e-14)
      throw NumericalError("draw_q_nullspace: degenerate direction draw");
    Q.col(j) = N * (proj / norm);
  }
  return Q;
}

struct SignCheckReport {
  bool ok = false;
  std::vector<bool> flipped;          // per configured shock
  std::vector<std::string> violations;
};

// Strict sign check with flip normalization: a column whose restricted signs
// are all inverted counts as satisfied with flipped = true.
inline SignCheckReport check_signs(const IrfTensor& theta, const RestrictionSet& rs) {
  SignCheckReport rep;
  rep.flipped.assign(rs.shocks.size(), false);
  rep.ok = true;
  for (int j = 0; j < static_cast<int>(rs.shocks.size()); ++j) {
    const auto& shock = rs.shocks[j];
    bool all_ok = true, all_inverted = true;
    for (const auto& r : shock.restrictions) {
      if (r.kind == SignKind::Zero) continue;
      const double want = r.kind == SignKind::Positive ? 1.0 : -1.0;
      for (int h = r.h_lo; h <= r.h_hi; ++h) {
        if (h >= static_cast<int>(theta.size()))
          throw DataError("check_signs: tensor does not cover restricted horizon");
        const double v = theta[h](r.variable, j);
        if (!(v * want > 0.0)) all_ok = false;
        if (!(v * want < 0.0)) all_inverted = false;
      }
    }
    if (all_ok) continue;
    if (all_inverted) {
      rep.flipped[j] = true;
      continue;
    }
    rep.ok = false;
    for (const auto& r : shock.restrictions) {
      if (r.kind == SignKind::Zero) continue;
      const double want = r.kind == SignKind::Positive ? 1.0 : -1.0;
      for (int h = r.h_lo; h <= r.h_hi; ++h) {
        const double v = theta[h](r.variable, j);
        if (!(v * want > 0.0))
          rep.violations.push_back(shock.name + ": " +
                                   rs.variable_names[r.variable] + " at h=" +
                                   std::to_string(h));
      }
    }
  }
  return rep;
}

struct IdentifyOptions {
  int max_tries_per_draw = 1000;
  double acceptance_floor = 1e-4;
  std::uint64_t seed = 0;
  int workers = 1;
  int horizon = 48;
};

struct CountryAcceptance {
  long long tries = 0;
  long long accepted = 0;
  long long skipped_draws = 0;
};

struct IdentifyResult {
  std::vector<StructuralDraw> draws;  // ordered by (posterior draw, country)
  std::vector<CountryAcceptance> by_country;
  double acceptance_rate = 0.0;
};

namespace detail {

struct IdentifyTask {
  bool accepted = false;
  StructuralDraw out;
  long long tries = 0;
};

inline void identify_one(const PosteriorDraw& draw, int country, int lags,
                         const RestrictionSet& rs, const IdentifyOptions& opt,
                         std::uint64_t task_index, IdentifyTask& task) {
  const int n = rs.n_vars();
  const int k = n;
  const auto& cd = draw.countries[country];
  Mat P = chol_impact(cd.Sigma);
  const int hr = rs.max_restricted_horizon();
  auto psi = reduced_multipliers(cd.B, lags, n, std::max(hr, opt.horizon));

  // Precompute Psi_h * P at the restricted horizons.
  std::vector<Mat> psip(hr + 1);
  for (int h = 0; h <= hr; ++h) psip[h] = psi[h] * P;

  const auto order = rs.processing_order();
  const int n_named = static_cast<int>(rs.shocks.size());
  std::vector<Mat> zero_rows(k);
  for (int pos = 0; pos < n_named; ++pos) {
    const auto& shock = rs.shocks[order[pos]];
    Mat Z(shock.zero_count(), k);
    int at = 0;
    for (const auto& r : shock.restrictions)
      if (r.kind == SignKind::Zero) Z.row(at++) = psip[r.h_lo].row(r.variable);
    zero_rows[pos] = std::move(Z);
  }
  for (int pos = n_named; pos < k; ++pos) zero_rows[pos] = Mat(0, k);

  for (int t = 0; t < opt.max_tries_per_draw; ++t) {
    ++task.tries;
    auto rng = substream(opt.seed, task_index, static_cast<std::uint64_t>(t), 0x51);
    Mat Qp = draw_q_nullspace(zero_rows, k, rng);
    // Undo the processing permutation: configured shock j sits at column
    // position(j) of Qp.
    Mat Q(k, k);
    for (int pos = 0; pos < k; ++pos) {
      const int j = pos < n_named ? order[pos] : pos;
      Q.col(j) = Qp.col(pos);
    }
    IrfTensor restricted(hr + 1);
    for (int h = 0; h <= hr; ++h) restricted[h] = psip[h] * Q;
    auto rep = check_signs(restricted, rs);
    if (!rep.ok) continue;
    for (int j = 0; j < n_named; ++j)
      if (rep.flipped[j]) Q.col(j) = -Q.col(j);
    task.accepted = true;
    task.out.country = country;
    task.out.posterior_index = static_cast<int>(task_index) / std::max(1, static_cast<int>(draw.countries.size()));
    task.out.P = P;
    task.out.Q = Q;
    task.out.theta.resize(opt.horizon + 1);
    Mat impact = P * Q;
    for (int h = 0; h <= opt.horizon; ++h) task.out.theta[h] = psi[h] * impact;
    return;
  }
}

}  // namespace detail

inline IdentifyResult identify_draws(const std::vector<PosteriorDraw>& draws,
                                     int lags, const RestrictionSet& rs,
                                     const IdentifyOptions& opt) {
  rs.validate();
  if (opt.horizon < rs.max_restricted_horizon())
    throw ConfigError("identification horizon shorter than restricted horizon");
  const int C = draws.empty() ? 0 : static_cast<int>(draws[0].countries.size());
  const std::size_t n_tasks = draws.size() * static_cast<std::size_t>(C);
  std::vector<detail::IdentifyTask> tasks(n_tasks);

  auto run_task = [&](std::size_t i) {
    const std::size_t g = i / C;
    const int c = static_cast<int>(i % C);
    detail::identify_one(draws[g], c, lags, rs, opt, static_cast<std::uint64_t>(i),
                         tasks[i]);
  };

  if (opt.workers > 1 && n_tasks > 1) {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> threads;
    std::exception_ptr err;
    std::mutex err_mu;
    for (int w = 0; w < opt.workers; ++w)
      threads.emplace_back([&] {
        for (std::size_t i; (i = next.fetch_add(1)) < n_tasks;) {
          try {
            run_task(i);
          } catch (...) {
            std::lock_guard<std::mutex> lk(err_mu);
            if (!err) err = std::current_exception();
          }
        }
      });
    for (auto& t : threads) t.join();
    if (err) std::rethrow_exception(err);
  } else {
    for (std::size_t i = 0; i < n_tasks; ++i) run_task(i);
  }

  IdentifyResult res;
  res.by_country.assign(C, {});
  long long total_tries = 0, total_accepted = 0;
  for (std::size_t i = 0; i < n_tasks; ++i) {
    const int c = static_cast<int>(i % C);
    res.by_country[c].tries += tasks[i].tries;
    total_tries += tasks[i].tries;
    if (tasks[i].accepted) {
      res.by_country[c].accepted += 1;
      total_accepted += 1;
      res.draws.push_back(std::move(tasks[i].out));
    } else {
      res.by_country[c].skipped_draws += 1;
    }
  }
  res.acceptance_rate =
      total_tries > 0 ? static_cast<double>(total_accepted) / total_tries : 0.0;
  if (n_tasks > 0 && res.acceptance_rate < opt.acceptance_floor)
    throw InfeasibleError(
        "identification infeasible: acceptance rate " +
        std::to_string(res.acceptance_rate) + " below floor " +
        std::to_string(opt.acceptance_floor) + " (" +
        std::to_string(total_accepted) + "/" + std::to_string(total_tries) +
        " tries accepted)");
  return res;
}

}  // namespace panelvar
