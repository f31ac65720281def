#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "panelvar/analyze.hpp"
#include "panelvar/checkpoint.hpp"
#include "panelvar/config.hpp"
#include "panelvar/fetch.hpp"
#include "panelvar/identify.hpp"
#include "panelvar/ingest.hpp"
#include "panelvar/sampler.hpp"

namespace panelvar {

inline constexpr const char* kVersion = "0.1.0";

inline RestrictionSet load_restrictions(const RunConfig& cfg) {
  if (!cfg.restrictions_path.empty()) return RestrictionSet::load(cfg.restrictions_path);
  return cfg.variant == "unemployment" ? RestrictionSet::baseline_unemployment()
                                       : RestrictionSet::baseline();
}

namespace detail {

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::uint64_t file_checksum(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file for checksum: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return fnv1a(buf.str());
}

inline void write_header_comment(std::ostream& out, const RunConfig& cfg) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(cfg.checksum));
  out << "# config=" << buf << " version=" << kVersion << "\n";
}

inline std::string pct_label(double p) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "q%g", p * 100.0);
  return buf;
}

}  // namespace detail

inline const std::vector<std::string>& panel_countries() {
  static const std::vector<std::string> cc = {"ES", "IE", "IT", "PT"};
  return cc;
}

// Series roles feeding the transforms, with their Table A.1 provider codes.
struct RawSeriesPlan {
  std::string role;
  Provider provider;
  std::string code;   // empty: always local
  bool per_country = true;
};

inline std::vector<RawSeriesPlan> raw_series_plan(const std::string& variant) {
  std::vector<RawSeriesPlan> plan;
  if (variant == "unemployment")
    plan.push_back({"unemployment", Provider::Eurostat, "une_rt_m", true});
  else
    plan.push_back({"industrial_production", Provider::Eurostat, "sts_inpr_m", true});
  plan.push_back({"prices", Provider::Eurostat, "prc_hicp_midx", true});
  plan.push_back({"loans", Provider::EcbSdmx, "BSI.M.{CC}.N.A.A20T.A.1.U2.2240.Z01.E", true});
  plan.push_back({"foreign_debt", Provider::EcbSdmx, "BSI.M.{CC}.N.A.A30.A.1.U5.2100.Z01.E", true});
  plan.push_back({"domestic_debt", Provider::EcbSdmx, "BSI.M.{CC}.N.A.A30.A.1.U6.2100.Z01.E", true});
  plan.push_back({"lending_rate", Provider::EcbSdmx, "MIR.M.{CC}.B.A2I.AM.R.A.2240.EUR.N", true});
  plan.push_back({"bond_yield", Provider::EcbSdmx, "IRS.M.{CC}.L.L40.CI.0000.EUR.N.Z", true});
  plan.push_back({"swap_rate", Provider::LocalCsv, "", false});    // Bundesbank BBK01.WX0082
  plan.push_back({"shadow_rate", Provider::LocalCsv, "", false});  // no public code
  return plan;
}

// Local mode reads raw/<CC>_<role>.csv (shared series: raw/<role>.csv); the
// network providers pull the Table A.1 codes and cache them. The swap and
// shadow-rate series have no API source and are always local files.
inline Series load_raw_series(const RunConfig& cfg, const RawSeriesPlan& plan,
                              const std::string& country, bool allow_network) {
  const bool local = cfg.provider == Provider::LocalCsv || plan.provider == Provider::LocalCsv;
  if (local) {
    const std::string stem = country.empty() ? plan.role : country + "_" + plan.role;
    return read_series_csv(cfg.cache_dir + "/raw/" + stem + ".csv", plan.role);
  }
  SeriesRequest req;
  req.provider = plan.provider;
  req.country = country;
  std::string code = plan.code;
  if (auto at = code.find("{CC}"); at != std::string::npos)
    code.replace(at, 4, country);
  req.code = code;
  Series s = fetch_series(req, cfg.cache_dir, allow_network);
  s.name = plan.role;
  return s;
}

// Assemble the panel from raw series in the cache, write per-country panel
// CSVs and a checksum manifest.
inline void cmd_fetch(const RunConfig& cfg, bool allow_network = true) {
  const auto rs = load_restrictions(cfg);
  const auto& vars = rs.variable_names;
  const std::string activity = cfg.variant == "unemployment" ? "unemployment" : "output";

  Series swap, shadow;
  std::vector<std::pair<std::string, std::map<std::string, Series>>> countries;
  for (const auto& plan : raw_series_plan(cfg.variant))
    if (!plan.per_country) {
      Series s = load_raw_series(cfg, plan, "", allow_network);
      if (plan.role == "swap_rate") swap = s;
      else shadow = s;
    }
  shadow.name = "short_rate";

  for (const auto& cc : panel_countries()) {
    std::map<std::string, Series> raw;
    for (const auto& plan : raw_series_plan(cfg.variant))
      if (plan.per_country)
        raw[plan.role] = load_raw_series(cfg, plan, cc, allow_network);
    raw["swap_rate"] = swap;

    std::map<std::string, Series> transformed;
    auto tf = [&](TransformKind kind, std::vector<std::string> in, const std::string& out) {
      transformed[out] = apply_transform({kind, std::move(in)}, raw, out);
    };
    if (cfg.variant == "unemployment")
      tf(TransformKind::Passthrough, {"unemployment"}, activity);
    else
      tf(TransformKind::Log100, {"industrial_production"}, activity);
    tf(TransformKind::Log100, {"prices"}, "prices");
    tf(TransformKind::Log100, {"loans"}, "loans");
    tf(TransformKind::Passthrough, {"lending_rate"}, "lending_rate");
    tf(TransformKind::Ratio100, {"domestic_debt", "foreign_debt"}, "home_bias");
    tf(TransformKind::Spread, {"bond_yield", "swap_rate"}, "spread");
    countries.emplace_back(cc, std::move(transformed));
  }

  PanelDataset panel = assemble_panel(countries, vars, shadow,
                                      MonthIndex::from_ym(2003, 1),
                                      MonthIndex::from_ym(2018, 12), cfg.model.n_det);
  panel.validate(cfg.model.lags);

  const std::string panel_dir = cfg.cache_dir + "/panel";
  std::filesystem::create_directories(panel_dir);
  nlohmann::json manifest;
  manifest["version"] = kVersion;
  char cbuf[32];
  std::snprintf(cbuf, sizeof(cbuf), "%016llx",
                static_cast<unsigned long long>(cfg.checksum));
  manifest["config"] = cbuf;
  manifest["variables"] = vars;
  for (const auto& cd : panel.countries) {
    const std::string path = panel_dir + "/" + cd.code + ".csv";
    write_panel_csv(path, cd, vars);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(detail::file_checksum(path)));
    manifest["checksums"][cd.code + ".csv"] = buf;
  }
  std::ofstream mf(panel_dir + "/manifest.json");
  mf << manifest.dump(2) << "\n";
}

inline PanelDataset load_panel(const RunConfig& cfg) {
  const auto rs = load_restrictions(cfg);
  const std::string panel_dir = cfg.cache_dir + "/panel";
  std::ifstream mf(panel_dir + "/manifest.json");
  if (!mf) throw DataError("panel manifest missing; run 'fetch' first");
  nlohmann::json manifest;
  mf >> manifest;
  PanelDataset panel;
  panel.variable_names = rs.variable_names;
  for (const auto& [file, sum] : manifest.at("checksums").items()) {
    const std::string path = panel_dir + "/" + file;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(detail::file_checksum(path)));
    if (sum.get<std::string>() != buf)
      throw DataError("panel cache integrity error: checksum mismatch for " + file);
    const std::string code = file.substr(0, file.size() - 4);
    panel.countries.push_back(
        read_panel_csv(path, code, rs.variable_names, cfg.model.n_det));
  }
  std::sort(panel.countries.begin(), panel.countries.end(),
            [](const CountryData& a, const CountryData& b) { return a.code < b.code; });
  panel.validate(cfg.model.lags);
  return panel;
}

inline void cmd_estimate(const RunConfig& cfg) {
  PanelDataset panel = load_panel(cfg);
  auto res = run_gibbs(panel, cfg.model, cfg.chain_config());
  std::filesystem::create_directories(cfg.output_dir);

  CheckpointHeader hdr;
  hdr.n_vars = static_cast<std::uint32_t>(panel.n_vars());
  hdr.lags = static_cast<std::uint32_t>(cfg.model.lags);
  hdr.n_det = static_cast<std::uint32_t>(cfg.model.n_det);
  hdr.n_countries = static_cast<std::uint32_t>(panel.countries.size());
  hdr.pooling = cfg.model.pooling == Pooling::Full ? 1 : 0;
  for (const auto& c : panel.countries) hdr.country_codes.push_back(c.code);
  write_checkpoint(cfg.output_dir + "/checkpoint.bin", hdr, res.draws);

  nlohmann::json diag;
  diag["n_retained"] = res.diag.n_retained;
  diag["explosive_share"] = res.diag.explosive_share;
  diag["rhat_lambda1"] = res.diag.rhat_lambda1;
  diag["rhat_b_max"] = res.diag.rhat_b_max;
  if (!res.diag.lambda1_trace.empty()) {
    diag["lambda1_q16"] = quantile(res.diag.lambda1_trace, 0.16);
    diag["lambda1_q50"] = quantile(res.diag.lambda1_trace, 0.50);
    diag["lambda1_q84"] = quantile(res.diag.lambda1_trace, 0.84);
  }
  std::ofstream df(cfg.output_dir + "/diagnostics.json");
  df << diag.dump(2) << "\n";
}

inline void cmd_identify(const RunConfig& cfg) {
  auto [hdr, draws] = read_checkpoint(cfg.output_dir + "/checkpoint.bin");
  const auto rs = load_restrictions(cfg);
  if (static_cast<int>(hdr.n_vars) != rs.n_vars())
    throw ConfigError("checkpoint variable count does not match restrictions");
  IdentifyOptions opt;
  opt.max_tries_per_draw = cfg.max_tries_per_draw;
  opt.acceptance_floor = cfg.acceptance_floor;
  opt.seed = cfg.seed;
  opt.workers = cfg.workers;
  opt.horizon = cfg.model.horizon;
  auto res = identify_draws(draws, static_cast<int>(hdr.lags), rs, opt);
  write_structural_store(cfg.output_dir + "/structural.bin", res.draws,
                         cfg.model.horizon);

  nlohmann::json rep;
  rep["acceptance_rate"] = res.acceptance_rate;
  for (std::size_t c = 0; c < res.by_country.size(); ++c) {
    nlohmann::json jc;
    jc["country"] = hdr.country_codes[c];
    jc["tries"] = res.by_country[c].tries;
    jc["accepted"] = res.by_country[c].accepted;
    jc["skipped_draws"] = res.by_country[c].skipped_draws;
    rep["by_country"].push_back(jc);
  }
  std::ofstream af(cfg.output_dir + "/acceptance.json");
  af << rep.dump(2) << "\n";
}

namespace detail {

inline std::vector<std::string> shock_labels(const RestrictionSet& rs, int k) {
  std::vector<std::string> labels;
  for (const auto& s : rs.shocks) labels.push_back(s.name);
  for (int j = static_cast<int>(rs.shocks.size()); j < k; ++j)
    labels.push_back("unrestricted_" + std::to_string(j - static_cast<int>(rs.shocks.size()) + 1));
  return labels;
}

}  // namespace detail

inline void cmd_report(const RunConfig& cfg) {
  PanelDataset panel = load_panel(cfg);
  auto [chdr, pdraws] = read_checkpoint(cfg.output_dir + "/checkpoint.bin");
  auto [shdr, sdraws] = read_structural_store(cfg.output_dir + "/structural.bin");
  const auto rs = load_restrictions(cfg);
  const int C = static_cast<int>(panel.countries.size());
  const int n = panel.n_vars();
  const int K = n;
  const int lags = static_cast<int>(chdr.lags);
  const auto labels = detail::shock_labels(rs, K);
  if (sdraws.empty()) throw DataError("structural store is empty");

  std::filesystem::create_directories(cfg.output_dir + "/plotdata");
  auto open_out = [&](const std::string& rel) {
    std::ofstream out(cfg.output_dir + "/" + rel);
    if (!out) throw DataError("cannot write " + rel);
    detail::write_header_comment(out, cfg);
    return out;
  };

  // ---- historical decompositions and counterfactuals (unscaled draws) ----
  struct CountryWork {
    Mat X, Y_trim, Z;
    MonthIndex est_start{};
  };
  std::vector<CountryWork> work(C);
  for (int c = 0; c < C; ++c) {
    auto [X, Yt] = build_lag_matrices(panel.countries[c].Y, lags);
    work[c].X = std::move(X);
    work[c].Y_trim = std::move(Yt);
    work[c].Z = panel.countries[c].Z;
    work[c].est_start = {panel.countries[c].start.value + lags};
  }

  std::vector<Mat> hd_base_sum(C), hd_actual(C);
  std::vector<std::vector<Mat>> hd_contrib_sum(C);  // [c][shock]
  std::vector<long> hd_count(C, 0);
  // Per-draw counterfactual differences for the named shocks, for bands.
  std::vector<std::vector<std::vector<Mat>>> cf_diffs(C);  // [c][named shock][draw]
  const int n_named = static_cast<int>(rs.shocks.size());
  for (int c = 0; c < C; ++c) {
    hd_base_sum[c] = Mat::Zero(work[c].Y_trim.rows(), n);
    hd_actual[c] = work[c].Y_trim;
    hd_contrib_sum[c].assign(K, Mat::Zero(work[c].Y_trim.rows(), n));
    cf_diffs[c].resize(n_named);
  }
  for (const auto& sd : sdraws) {
    const int c = sd.country;
    const auto& cd = pdraws[sd.posterior_index].countries[c];
    Mat Z_trim = work[c].Z.bottomRows(work[c].Z.rows() - lags);
    Mat U = residuals(work[c].Y_trim, work[c].X, Z_trim, cd.B, cd.Gamma);
    Mat eps = structural_shocks(U, sd.P, sd.Q);
    auto hd = historical_decomposition(panel.countries[c].Y, work[c].Z, cd.B,
                                       cd.Gamma, sd.P, sd.Q, eps, lags);
    hd_base_sum[c] += hd.baseline;
    for (int j = 0; j < K; ++j) hd_contrib_sum[c][j] += hd.contributions[j];
    for (int j = 0; j < n_named; ++j)
      cf_diffs[c][j].push_back(counterfactual_difference(hd, j));
    ++hd_count[c];
  }

  {
    auto out = open_out("hd.csv");
    out << "country,variable,date,actual,baseline";
    for (const auto& lbl : labels) out << ",contrib_" << lbl;
    out << ",additivity\n";
    for (int c = 0; c < C; ++c) {
      if (hd_count[c] == 0) continue;
      const double m = static_cast<double>(hd_count[c]);
      for (Eigen::Index t = 0; t < hd_actual[c].rows(); ++t)
        for (int i = 0; i < n; ++i) {
          double total = hd_base_sum[c](t, i) / m;
          out << panel.countries[c].code << "," << panel.variable_names[i] << ","
              << MonthIndex{work[c].est_start.value + static_cast<int>(t)}.str()
              << "," << detail::fmt(hd_actual[c](t, i)) << ","
              << detail::fmt(hd_base_sum[c](t, i) / m);
          for (int j = 0; j < K; ++j) {
            const double v = hd_contrib_sum[c][j](t, i) / m;
            total += v;
            out << "," << detail::fmt(v);
          }
          out << "," << detail::fmt(total - hd_actual[c](t, i)) << "\n";
        }
    }
  }

  {
    auto out = open_out("counterfactual.csv");
    out << "country,shock,variable,date";
    for (double p : cfg.model.ci_quantiles) out << "," << detail::pct_label(p);
    out << "\n";
    std::vector<double> buf;
    for (int c = 0; c < C; ++c)
      for (int j = 0; j < n_named; ++j) {
        if (cf_diffs[c][j].empty()) continue;
        const auto T_e = cf_diffs[c][j][0].rows();
        for (Eigen::Index t = 0; t < T_e; ++t)
          for (int i = 0; i < n; ++i) {
            buf.clear();
            for (const auto& d : cf_diffs[c][j]) buf.push_back(d(t, i));
            out << panel.countries[c].code << "," << rs.shocks[j].name << ","
                << panel.variable_names[i] << ","
                << MonthIndex{work[c].est_start.value + static_cast<int>(t)}.str();
            for (double p : cfg.model.ci_quantiles)
              out << "," << detail::fmt(quantile(buf, p));
            out << "\n";
          }
      }
  }

  // ---- FEVD on unscaled draws: per-draw shares and the median-IRF convention ----
  std::vector<int> fevd_horizons;
  for (int h : {1, 6, 12, 24})
    if (h <= cfg.model.horizon + 1) fevd_horizons.push_back(h);
  {
    // Median IRF tensor per country.
    auto out = open_out("fevd.csv");
    out << "country,variable,shock,horizon";
    for (double p : cfg.model.ci_quantiles) out << "," << detail::pct_label(p);
    out << ",share_median_irf\n";
    std::vector<double> buf;
    for (int c = 0; c < C; ++c) {
      std::vector<const StructuralDraw*> mine;
      for (const auto& d : sdraws)
        if (d.country == c) mine.push_back(&d);
      if (mine.empty()) continue;
      IrfTensor med(cfg.model.horizon + 1, Mat::Zero(n, K));
      for (int h = 0; h <= cfg.model.horizon; ++h)
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < K; ++j) {
            buf.clear();
            for (const auto* d : mine) buf.push_back(d->theta[h](i, j));
            med[h](i, j) = quantile(buf, 0.5);
          }
      auto med_shares = fevd(med, fevd_horizons);
      std::vector<std::vector<Mat>> per_draw;  // [draw][horizon idx]
      per_draw.reserve(mine.size());
      for (const auto* d : mine) per_draw.push_back(fevd(d->theta, fevd_horizons));
      for (std::size_t hi = 0; hi < fevd_horizons.size(); ++hi)
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < K; ++j) {
            buf.clear();
            for (const auto& pd : per_draw) buf.push_back(pd[hi](i, j));
            out << panel.countries[c].code << "," << panel.variable_names[i] << ","
                << labels[j] << "," << fevd_horizons[hi];
            for (double p : cfg.model.ci_quantiles)
              out << "," << detail::fmt(quantile(buf, p));
            out << "," << detail::fmt(med_shares[hi](i, j)) << "\n";
          }
    }
  }

  // ---- normalized IRF bands ----
  {
    std::vector<StructuralDraw> scaled = sdraws;
    for (int j = 0; j < n_named; ++j)
      if (rs.shocks[j].normalize)
        normalize_shock(scaled, C, j, rs.shocks[j].normalize->variable,
                        rs.shocks[j].normalize->target);
    auto bands = irf_bands(scaled, C, cfg.model.ci_quantiles);
    auto out = open_out("irf.csv");
    out << "country,shock,variable,horizon";
    for (double p : cfg.model.ci_quantiles) out << "," << detail::pct_label(p);
    out << "\n";
    for (int c = 0; c < C; ++c)
      for (int j = 0; j < n_named; ++j)
        for (int i = 0; i < n; ++i)
          for (int h = 0; h <= cfg.model.horizon; ++h) {
            out << panel.countries[c].code << "," << rs.shocks[j].name << ","
                << panel.variable_names[i] << "," << h;
            for (std::size_t qi = 0; qi < cfg.model.ci_quantiles.size(); ++qi)
              out << "," << detail::fmt(bands.value[c][qi][h](i, j));
            out << "\n";
          }

    // Plot data: one numeric file per figure-style panel.
    for (int j = 0; j < n_named; ++j) {
      auto pf = open_out("plotdata/irf_" + rs.shocks[j].name + ".csv");
      pf << "country,variable,horizon";
      for (double p : cfg.model.ci_quantiles) pf << "," << detail::pct_label(p);
      pf << "\n";
      for (int c = 0; c < C; ++c)
        for (int i = 0; i < n; ++i)
          for (int h = 0; h <= cfg.model.horizon; ++h) {
            pf << panel.countries[c].code << "," << panel.variable_names[i] << ","
               << h;
            for (std::size_t qi = 0; qi < cfg.model.ci_quantiles.size(); ++qi)
              pf << "," << detail::fmt(bands.value[c][qi][h](i, j));
            pf << "\n";
          }
    }
  }
  for (int j = 0; j < n_named; ++j) {
    auto pf = open_out("plotdata/counterfactual_" + rs.shocks[j].name + ".csv");
    pf << "country,variable,date";
    for (double p : cfg.model.ci_quantiles) pf << "," << detail::pct_label(p);
    pf << "\n";
    std::vector<double> buf;
    for (int c = 0; c < C; ++c) {
      if (cf_diffs[c][j].empty()) continue;
      for (Eigen::Index t = 0; t < cf_diffs[c][j][0].rows(); ++t)
        for (int i = 0; i < n; ++i) {
          buf.clear();
          for (const auto& d : cf_diffs[c][j]) buf.push_back(d(t, i));
          pf << panel.countries[c].code << "," << panel.variable_names[i] << ","
             << MonthIndex{work[c].est_start.value + static_cast<int>(t)}.str();
          for (double p : cfg.model.ci_quantiles)
            pf << "," << detail::fmt(quantile(buf, p));
          pf << "\n";
        }
    }
  }
}

}  // namespace panelvar
