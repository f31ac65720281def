#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "panelvar/errors.hpp"
#include "panelvar/ingest.hpp"
#include "panelvar/sampler.hpp"
#include "panelvar/types.hpp"

namespace panelvar {

// Flat "[section]" / "key = value" file; '#' starts a comment.
inline std::map<std::string, std::string> parse_ini(std::istream& in) {
  std::map<std::string, std::string> kv;
  std::string line, section;
  auto trim = [](std::string s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return std::string();
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
  };
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[' && line.back() == ']') {
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("malformed config line: " + line);
    kv[section + "." + trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

struct RunConfig {
  // data
  Provider provider = Provider::LocalCsv;
  std::string cache_dir = "cache";
  std::string variant = "baseline";  // baseline | unemployment
  // model
  ModelSpec model;
  // restrictions / identification
  std::string restrictions_path;
  int max_tries_per_draw = 1000;
  double acceptance_floor = 1e-4;
  // output / run
  std::string output_dir = "out";
  std::uint64_t seed = 0;
  int chains = 1;
  int thinning = 1;
  int workers = 1;
  std::uint64_t checksum = 0;  // of the config file bytes

  ChainConfig chain_config() const {
    ChainConfig cc;
    cc.seed = seed;
    cc.n_chains = chains;
    cc.thinning = thinning;
    cc.workers = workers;
    return cc;
  }

  void validate() const {
    model.validate();
    if (variant != "baseline" && variant != "unemployment")
      throw ConfigError("variant must be 'baseline' or 'unemployment'");
    if (chains < 1 || workers < 1 || thinning < 1)
      throw ConfigError("chains, workers and thinning must be >= 1");
    if (max_tries_per_draw < 1) throw ConfigError("max_tries_per_draw must be >= 1");
    if (!(acceptance_floor >= 0.0)) throw ConfigError("acceptance_floor must be >= 0");
  }
};

namespace detail {

inline std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace detail

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string bytes = buf.str();
  std::istringstream is(bytes);
  auto kv = parse_ini(is);

  RunConfig cfg;
  cfg.checksum = detail::fnv1a(bytes);
  auto get = [&](const std::string& key) -> const std::string* {
    auto it = kv.find(key);
    return it == kv.end() ? nullptr : &it->second;
  };
  auto geti = [&](const std::string& key, int& out) {
    if (auto* v = get(key)) out = std::stoi(*v);
  };
  auto getd = [&](const std::string& key, double& out) {
    if (auto* v = get(key)) out = std::stod(*v);
  };
  auto gets = [&](const std::string& key, std::string& out) {
    if (auto* v = get(key)) out = *v;
  };

  if (auto* p = get("data.provider")) {
    if (*p == "local-csv") cfg.provider = Provider::LocalCsv;
    else if (*p == "ecb-sdmx") cfg.provider = Provider::EcbSdmx;
    else if (*p == "eurostat") cfg.provider = Provider::Eurostat;
    else throw ConfigError("unknown provider: " + *p);
  }
  gets("data.cache_dir", cfg.cache_dir);
  gets("data.variant", cfg.variant);

  geti("model.lags", cfg.model.lags);
  geti("model.n_det", cfg.model.n_det);
  getd("model.lambda2", cfg.model.lambda2);
  getd("model.lambda3", cfg.model.lambda3);
  getd("model.ig_shape", cfg.model.ig_shape);
  getd("model.ig_scale", cfg.model.ig_scale);
  geti("model.n_draws", cfg.model.n_draws);
  geti("model.n_burn", cfg.model.n_burn);
  geti("model.horizon", cfg.model.horizon);
  if (auto* p = get("model.pooling")) {
    if (*p == "partial") cfg.model.pooling = Pooling::Partial;
    else if (*p == "full") cfg.model.pooling = Pooling::Full;
    else throw ConfigError("pooling must be 'partial' or 'full'");
  }
  if (auto* p = get("model.quantiles")) {
    cfg.model.ci_quantiles.clear();
    std::istringstream qs(*p);
    std::string tok;
    while (std::getline(qs, tok, ',')) cfg.model.ci_quantiles.push_back(std::stod(tok));
  }

  gets("restrictions.path", cfg.restrictions_path);
  geti("identify.max_tries_per_draw", cfg.max_tries_per_draw);
  getd("identify.acceptance_floor", cfg.acceptance_floor);

  gets("output.dir", cfg.output_dir);
  if (auto* v = get("run.seed")) cfg.seed = std::stoull(*v);
  geti("run.chains", cfg.chains);
  geti("run.thinning", cfg.thinning);
  geti("run.workers", cfg.workers);

  cfg.validate();
  return cfg;
}

}  // namespace panelvar
