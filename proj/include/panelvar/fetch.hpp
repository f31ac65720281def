#pragma once

// Network-backed series retrieval. Kept separate from ingest.hpp so parsing
// and assembly can be used without linking OpenSSL.

#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>

#include <filesystem>

#include "panelvar/ingest.hpp"

namespace panelvar {

inline std::string sanitize_code(const std::string& code) {
  std::string out;
  for (char c : code)
    out.push_back(std::isalnum(static_cast<unsigned char>(c)) ? c : '_');
  return out;
}

inline std::string cache_path(const std::string& cache_dir, const SeriesRequest& req) {
  return cache_dir + "/raw/" + sanitize_code(req.country.empty() ? req.code
                                                                 : req.country + "_" + req.code) +
         ".csv";
}

namespace detail {

inline std::string http_get(const std::string& url) {
  auto scheme_end = url.find("://");
  auto host_start = scheme_end + 3;
  auto path_start = url.find('/', host_start);
  const std::string host = url.substr(0, path_start);
  const std::string path = url.substr(path_start);
  httplib::Client cli(host);
  cli.set_follow_location(true);
  cli.set_connection_timeout(30);
  cli.set_read_timeout(120);
  auto res = cli.Get(path);
  if (!res)
    throw DataError("fetch failed for " + url + ": " + httplib::to_string(res.error()));
  if (res->status != 200)
    throw DataError("fetch failed for " + url + ": HTTP " + std::to_string(res->status));
  return res->body;
}

}  // namespace detail

// Cache hit returns the cached file untouched; a miss pulls over HTTPS,
// parses, and writes the cache before returning.
inline Series fetch_series(const SeriesRequest& req, const std::string& cache_dir,
                           bool allow_network = true) {
  req.validate();
  const std::string name = req.country.empty() ? req.code : req.country + ":" + req.code;
  if (req.provider == Provider::LocalCsv) {
    const std::string path = cache_dir + "/raw/" + req.code + ".csv";
    return read_series_csv(path, name);
  }
  const std::string path = cache_path(cache_dir, req);
  if (std::filesystem::exists(path)) return read_series_csv(path, name);
  if (!allow_network)
    throw DataError("cache miss for " + name + " and network disabled");
  const std::string url = req.provider == Provider::EcbSdmx
                              ? ecb_sdmx_url(req.code)
                              : eurostat_url(req.code, req.country);
  Series s = parse_sdmx_csv(detail::http_get(url), name);
  s.provenance = " code=" + req.code + " url=" + url;
  std::filesystem::create_directories(std::filesystem::path(path).parent_path());
  write_series_csv(path, s);
  return s;
}

}  // namespace panelvar
