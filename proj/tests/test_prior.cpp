#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "panelvar/prior.hpp"
#include "panelvar/rng.hpp"

using namespace panelvar;

namespace {

PanelDataset white_noise_panel(std::uint64_t seed, int T, int n, int countries) {
  auto rng = substream(seed, 0);
  std::normal_distribution<double> nd;
  PanelDataset p;
  for (int i = 0; i < n; ++i) p.variable_names.push_back("v" + std::to_string(i));
  for (int c = 0; c < countries; ++c) {
    CountryData cd;
    cd.code = "C" + std::to_string(c);
    cd.Y.resize(T, n);
    for (int t = 0; t < T; ++t)
      for (int i = 0; i < n; ++i) cd.Y(t, i) = nd(rng);
    cd.Z = Mat::Ones(T, 1);
    p.countries.push_back(std::move(cd));
  }
  return p;
}

}  // namespace

TEST_CASE("pooled_sigma: unit-variance white noise") {
  auto p = white_noise_panel(11, 2000, 1, 1);
  Vec sig = pooled_sigma(p, 1);
  CHECK(sig(0) == doctest::Approx(1.0).epsilon(0.1));
}

TEST_CASE("pooled_sigma: constant series is degenerate") {
  auto p = white_noise_panel(12, 100, 2, 1);
  p.countries[0].Y.col(1).setConstant(3.0);
  CHECK_THROWS_AS(pooled_sigma(p, 1), DataError);
}

TEST_CASE("pooled_sigma: duplicating a country leaves sigma unchanged") {
  auto p = white_noise_panel(13, 150, 2, 1);
  Vec one = pooled_sigma(p, 2);
  PanelDataset two = p;
  two.countries.push_back(p.countries[0]);
  two.countries.back().code = "C1";
  Vec dup = pooled_sigma(two, 2);
  CHECK((dup - one).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("minnesota_omega: own-lag variance is lag-decay only") {
  Vec sigma(2);
  sigma << 2.0, 4.0;
  auto ms = minnesota_omega(sigma, 2, 3, 1.0, 0.0);
  // lambda3 = 0: own-lag sd 1 at every lag, here equation 0 variable 0 lag 3.
  const int n = 2;
  CHECK(ms.omega_diag(0 * n * 3 + 2 * n + 0) == doctest::Approx(1.0));
  // Cross coefficient: sd sigma_0 * lambda2 / sigma_1 = 0.5 -> variance 0.25.
  CHECK(ms.omega_diag(0 * n * 3 + 0 * n + 1) == doctest::Approx(0.25));
}

TEST_CASE("minnesota_omega: equal sigmas, lambda2=1, lambda3=0 gives identity") {
  Vec sigma = Vec::Constant(3, 1.7);
  auto ms = minnesota_omega(sigma, 3, 2, 1.0, 0.0);
  CHECK((ms.omega_diag.array() - 1.0).abs().maxCoeff() < 1e-14);
}

TEST_CASE("minnesota_omega: lag decay with lambda3 > 0") {
  Vec sigma = Vec::Ones(1);
  auto ms = minnesota_omega(sigma, 1, 3, 1.0, 1.0);
  CHECK(ms.omega_diag(0) == doctest::Approx(1.0));
  CHECK(ms.omega_diag(1) == doctest::Approx(0.25));
  CHECK(ms.omega_diag(2) == doctest::Approx(1.0 / 9.0));
}

TEST_CASE("minnesota_omega: nonpositive sigma rejected") {
  Vec sigma(2);
  sigma << 1.0, 0.0;
  CHECK_THROWS_AS(minnesota_omega(sigma, 2, 1, 1.0, 0.0), DataError);
}

TEST_CASE("omega is invariant to relabeling countries") {
  auto p = white_noise_panel(14, 120, 3, 3);
  Vec sig = pooled_sigma(p, 1);
  std::swap(p.countries[0], p.countries[2]);
  Vec sig_swapped = pooled_sigma(p, 1);
  CHECK((sig - sig_swapped).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("property: scaling one variable rescales omega by the formula ratio") {
  auto p = white_noise_panel(15, 300, 3, 2);
  const int n = 3, L = 2;
  const double c = 3.0;
  Vec sig = pooled_sigma(p, L);
  auto om = minnesota_omega(sig, n, L, 1.0, 0.0);
  for (auto& cd : p.countries) cd.Y.col(0) *= c;
  Vec sig2 = pooled_sigma(p, L);
  CHECK(sig2(0) == doctest::Approx(c * sig(0)).epsilon(1e-10));
  auto om2 = minnesota_omega(sig2, n, L, 1.0, 0.0);
  for (int i = 0; i < n; ++i)
    for (int l = 0; l < L; ++l)
      for (int j = 0; j < n; ++j) {
        const Eigen::Index idx = i * n * L + l * n + j;
        double want = 1.0;                       // i == j: unchanged
        if (i == 0 && j != 0) want = c * c;      // equation scaled
        else if (j == 0 && i != 0) want = 1.0 / (c * c);  // regressor scaled
        CHECK(om2.omega_diag(idx) / om.omega_diag(idx) ==
              doctest::Approx(want).epsilon(1e-8));
      }
}

TEST_CASE("lambda1_log_density: plug-in value and ratio") {
  // s=1, nu=1, lambda=1: log kernel = -(s+1)*log(1) - 1 = -1.
  CHECK(lambda1_log_density(1.0, 1.0, 1.0) == doctest::Approx(-1.0));
  const double lhs = lambda1_log_density(2.0, 1.0, 1.0) -
                     lambda1_log_density(1.0, 1.0, 1.0);
  const double rhs = std::log(std::pow(2.0, -2.0) * std::exp(-0.5) /
                              (std::pow(1.0, -2.0) * std::exp(-1.0)));
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  CHECK_THROWS_AS(lambda1_log_density(0.0, 1.0, 1.0), NumericalError);
}

TEST_CASE("lambda1_log_density: quadrature oracle for the normalizer") {
  // integral of lambda^{-(s+1)} exp(-nu/lambda) d lambda = Gamma(s)/nu^s.
  // With u = 1/lambda this is the Gamma integral; s=2, nu=1 gives 1.
  const double s = 2.0, nu = 1.0;
  double integral = 0.0;
  const double du = 1e-4;
  for (double u = du / 2; u < 80.0; u += du)
    integral += std::exp((s - 1.0) * std::log(u) - nu * u) * du;
  double direct = 0.0;
  const double dl = 1e-5;
  for (double lam = dl / 2; lam < 60.0; lam += dl)
    direct += std::exp(lambda1_log_density(lam, s, nu)) * dl;
  CHECK(integral == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(direct == doctest::Approx(integral).epsilon(1e-3));
}
