#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "panelvar/identify.hpp"
#include "panelvar/types.hpp"

// Flat binary stores for retained draws. Little-endian, 8-byte IEEE reals,
// fixed-size records after a versioned header.

namespace panelvar {

namespace detail {

inline void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4] = {static_cast<char>(v), static_cast<char>(v >> 8),
               static_cast<char>(v >> 16), static_cast<char>(v >> 24)};
  out.write(b, 4);
}

inline std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw DataError("checkpoint: truncated header");
  return b[0] | (b[1] << 8) | (b[2] << 16) | (std::uint32_t(b[3]) << 24);
}

inline void put_mat(std::ostream& out, const Mat& m) {
  out.write(reinterpret_cast<const char*>(m.data()),
            static_cast<std::streamsize>(m.size() * sizeof(double)));
}

inline void get_mat(std::istream& in, Mat& m) {
  in.read(reinterpret_cast<char*>(m.data()),
          static_cast<std::streamsize>(m.size() * sizeof(double)));
  if (!in) throw DataError("checkpoint: truncated record");
}

}  // namespace detail

struct CheckpointHeader {
  std::uint32_t n_vars = 0, lags = 0, n_det = 0, n_countries = 0, n_draws = 0;
  std::uint32_t pooling = 0;  // 0 partial, 1 full
  std::vector<std::string> country_codes;
};

inline void write_checkpoint(const std::string& path, const CheckpointHeader& hdr,
                             const std::vector<PosteriorDraw>& draws) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint: " + path);
  out.write("PVCK", 4);
  detail::put_u32(out, 1);  // format version
  detail::put_u32(out, hdr.n_vars);
  detail::put_u32(out, hdr.lags);
  detail::put_u32(out, hdr.n_det);
  detail::put_u32(out, hdr.n_countries);
  detail::put_u32(out, static_cast<std::uint32_t>(draws.size()));
  detail::put_u32(out, hdr.pooling);
  for (const auto& code : hdr.country_codes) {
    detail::put_u32(out, static_cast<std::uint32_t>(code.size()));
    out.write(code.data(), static_cast<std::streamsize>(code.size()));
  }
  for (const auto& d : draws) {
    for (const auto& c : d.countries) {
      detail::put_mat(out, c.B);
      detail::put_mat(out, c.Gamma);
      detail::put_mat(out, c.Sigma);
    }
    out.write(reinterpret_cast<const char*>(d.b.data()),
              static_cast<std::streamsize>(d.b.size() * sizeof(double)));
    out.write(reinterpret_cast<const char*>(&d.lambda1), sizeof(double));
  }
  if (!out) throw DataError("checkpoint write failed: " + path);
}

inline std::pair<CheckpointHeader, std::vector<PosteriorDraw>> read_checkpoint(
    const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != "PVCK")
    throw DataError("not a checkpoint file: " + path);
  if (detail::get_u32(in) != 1) throw DataError("unsupported checkpoint version");
  CheckpointHeader hdr;
  hdr.n_vars = detail::get_u32(in);
  hdr.lags = detail::get_u32(in);
  hdr.n_det = detail::get_u32(in);
  hdr.n_countries = detail::get_u32(in);
  hdr.n_draws = detail::get_u32(in);
  hdr.pooling = detail::get_u32(in);
  for (std::uint32_t c = 0; c < hdr.n_countries; ++c) {
    const auto len = detail::get_u32(in);
    std::string code(len, '\0');
    in.read(code.data(), len);
    hdr.country_codes.push_back(std::move(code));
  }
  const int n = static_cast<int>(hdr.n_vars);
  const int k = n * static_cast<int>(hdr.lags);
  const int m = static_cast<int>(hdr.n_det);
  std::vector<PosteriorDraw> draws(hdr.n_draws);
  for (auto& d : draws) {
    d.countries.resize(hdr.n_countries);
    for (auto& c : d.countries) {
      c.B.resize(k, n);
      c.Gamma.resize(m, n);
      c.Sigma.resize(n, n);
      detail::get_mat(in, c.B);
      detail::get_mat(in, c.Gamma);
      detail::get_mat(in, c.Sigma);
    }
    d.b.resize(static_cast<Eigen::Index>(k) * n);
    in.read(reinterpret_cast<char*>(d.b.data()),
            static_cast<std::streamsize>(d.b.size() * sizeof(double)));
    in.read(reinterpret_cast<char*>(&d.lambda1), sizeof(double));
    if (!in) throw DataError("checkpoint: truncated draw record");
  }
  return {std::move(hdr), std::move(draws)};
}

struct StructuralStoreHeader {
  std::uint32_t n_vars = 0, horizon = 0, n_draws = 0;
};

inline void write_structural_store(const std::string& path,
                                   const std::vector<StructuralDraw>& draws,
                                   int horizon) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write structural store: " + path);
  out.write("PVSD", 4);
  detail::put_u32(out, 1);
  const std::uint32_t n = draws.empty() ? 0 : static_cast<std::uint32_t>(draws[0].P.rows());
  detail::put_u32(out, n);
  detail::put_u32(out, static_cast<std::uint32_t>(horizon));
  detail::put_u32(out, static_cast<std::uint32_t>(draws.size()));
  for (const auto& d : draws) {
    detail::put_u32(out, static_cast<std::uint32_t>(d.country));
    detail::put_u32(out, static_cast<std::uint32_t>(d.posterior_index));
    detail::put_mat(out, d.P);
    detail::put_mat(out, d.Q);
    for (const auto& th : d.theta) detail::put_mat(out, th);
  }
  if (!out) throw DataError("structural store write failed: " + path);
}

inline std::pair<StructuralStoreHeader, std::vector<StructuralDraw>>
read_structural_store(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open structural store: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != "PVSD")
    throw DataError("not a structural store: " + path);
  if (detail::get_u32(in) != 1) throw DataError("unsupported store version");
  StructuralStoreHeader hdr;
  hdr.n_vars = detail::get_u32(in);
  hdr.horizon = detail::get_u32(in);
  hdr.n_draws = detail::get_u32(in);
  const int n = static_cast<int>(hdr.n_vars);
  std::vector<StructuralDraw> draws(hdr.n_draws);
  for (auto& d : draws) {
    d.country = static_cast<int>(detail::get_u32(in));
    d.posterior_index = static_cast<int>(detail::get_u32(in));
    d.P.resize(n, n);
    d.Q.resize(n, n);
    detail::get_mat(in, d.P);
    detail::get_mat(in, d.Q);
    d.theta.assign(hdr.horizon + 1, Mat(n, n));
    for (auto& th : d.theta) detail::get_mat(in, th);
  }
  return {hdr, std::move(draws)};
}

}  // namespace panelvar
