#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "panelvar/errors.hpp"

namespace panelvar {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

enum class Pooling { Partial, Full };

// Month index: year*12 + (month-1). Keeps date arithmetic integral.
struct MonthIndex {
  int value = 0;
  static MonthIndex from_ym(int year, int month) { return {year * 12 + (month - 1)}; }
  int year() const { return value / 12; }
  int month() const { return value % 12 + 1; }
  std::string str() const {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02d", year(), month());
    return buf;
  }
  auto operator<=>(const MonthIndex&) const = default;
};

struct CountryData {
  std::string code;
  Mat Y;  // T x N, transformed units
  Mat Z;  // T x M deterministic terms
  MonthIndex start;  // date of row 0
};

struct PanelDataset {
  std::vector<CountryData> countries;
  std::vector<std::string> variable_names;  // length N, shared ordering

  int n_vars() const { return static_cast<int>(variable_names.size()); }

  void validate(int lags) const {
    const int n = n_vars();
    if (countries.empty()) throw DataError("panel has no countries");
    for (const auto& c : countries) {
      if (c.Y.cols() != n)
        throw DataError("country " + c.code + " has wrong variable count");
      if (c.Y.rows() != c.Z.rows())
        throw DataError("country " + c.code + ": Y/Z row mismatch");
      if (!c.Y.allFinite() || !c.Z.allFinite())
        throw DataError("country " + c.code + " contains non-finite entries");
      const auto m = c.Z.cols();
      if (c.Y.rows() <= n * lags + m)
        throw DataError("country " + c.code + ": sample too short for lag order");
    }
  }
};

struct ModelSpec {
  int lags = 4;
  int n_det = 1;  // deterministic terms: intercept (optionally + trend)
  double lambda2 = 1.0;
  double lambda3 = 0.0;
  double ig_shape = 0.001;  // s
  double ig_scale = 0.001;  // nu
  Pooling pooling = Pooling::Partial;
  int n_draws = 110000;
  int n_burn = 10000;
  int horizon = 48;
  std::vector<double> ci_quantiles = {0.16, 0.50, 0.84};

  void validate() const {
    if (lags < 1) throw ConfigError("lag order must be >= 1");
    if (n_det < 0) throw ConfigError("deterministic term count must be >= 0");
    if (n_burn < 0 || n_draws <= n_burn)
      throw ConfigError("need n_draws > n_burn >= 0");
    if (horizon < 1) throw ConfigError("horizon must be >= 1");
    if (ig_shape <= 0 || ig_scale <= 0)
      throw ConfigError("inverse-gamma hyperparameters must be positive");
    for (double q : ci_quantiles)
      if (!(q > 0.0 && q < 1.0))
        throw ConfigError("quantiles must lie strictly inside (0,1)");
  }
};

// One Gibbs state. B_c is (N*L) x N with beta_c = vec(B_c) column-major.
struct CountryDraw {
  Mat B;      // (N*L) x N
  Mat Gamma;  // M x N
  Mat Sigma;  // N x N SPD
};

struct PosteriorDraw {
  std::vector<CountryDraw> countries;
  Vec b;           // common mean, length N^2*L
  double lambda1 = 0.0;
};

struct CompanionForm {
  Mat A;  // (N*L) x (N*L)
  Mat J;  // N x (N*L), selects the leading N rows
};

}  // namespace panelvar
