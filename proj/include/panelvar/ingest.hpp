#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "panelvar/errors.hpp"
#include "panelvar/types.hpp"

namespace panelvar {

struct Series {
  std::string name;
  MonthIndex start{};
  std::vector<double> values;
  std::string provenance;

  int size() const { return static_cast<int>(values.size()); }
  MonthIndex end() const { return {start.value + size() - 1}; }  // inclusive
  double at(MonthIndex m) const {
    const int i = m.value - start.value;
    if (i < 0 || i >= size())
      throw DataError("series " + name + ": no observation at " + m.str());
    return values[i];
  }
};

enum class Provider { EcbSdmx, Eurostat, LocalCsv };

struct SeriesRequest {
  Provider provider = Provider::LocalCsv;
  std::string code;     // provider series code, or file stem for local-csv
  std::string country;  // two-letter area code where applicable

  void validate() const {
    if (code.empty()) throw ConfigError("series request with empty code");
  }
};

namespace detail {

inline MonthIndex parse_month(const std::string& s) {
  int y = 0, m = 0;
  if (std::sscanf(s.c_str(), "%d-%d", &y, &m) != 2 || m < 1 || m > 12)
    throw DataError("cannot parse month '" + s + "' (want YYYY-MM)");
  return MonthIndex::from_ym(y, m);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (char ch : line) {
    if (ch == '"') quoted = !quoted;
    else if (ch == ',' && !quoted) { out.push_back(cur); cur.clear(); }
    else if (ch != '\r') cur.push_back(ch);
  }
  out.push_back(cur);
  return out;
}

inline Series from_month_value_pairs(std::vector<std::pair<MonthIndex, double>> obs,
                                     const std::string& name) {
  if (obs.empty()) throw DataError("series " + name + " is empty");
  std::sort(obs.begin(), obs.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  Series s;
  s.name = name;
  s.start = obs.front().first;
  std::string gaps;
  int expect = s.start.value;
  for (const auto& [m, v] : obs) {
    while (m.value > expect) {
      gaps += (gaps.empty() ? "" : ", ") + MonthIndex{expect}.str();
      ++expect;
    }
    if (m.value < expect)
      throw DataError("series " + name + ": duplicate month " + m.str());
    s.values.push_back(v);
    ++expect;
  }
  if (!gaps.empty())
    throw DataError("series " + name + " has missing months: " + gaps);
  return s;
}

}  // namespace detail

// Local schema: optional '#' comment lines, then "date,value" rows with
// ISO YYYY-MM dates.
inline Series parse_month_value_csv(std::istream& in, const std::string& name) {
  std::vector<std::pair<MonthIndex, double>> obs;
  std::string line;
  std::string provenance;
  bool saw_header = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') { provenance += line.substr(1); continue; }
    auto cols = detail::split_csv_line(line);
    if (!saw_header && cols.size() >= 2 && cols[0] == "date") { saw_header = true; continue; }
    if (cols.size() < 2)
      throw DataError("series " + name + ": malformed CSV row '" + line + "'");
    obs.emplace_back(detail::parse_month(cols[0]), std::stod(cols[1]));
  }
  Series s = detail::from_month_value_pairs(std::move(obs), name);
  s.provenance = provenance;
  return s;
}

inline Series read_series_csv(const std::string& path, const std::string& name) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open series file: " + path);
  return parse_month_value_csv(in, name);
}

inline void write_series_csv(const std::string& path, const Series& s) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write series file: " + path);
  if (!s.provenance.empty()) out << "#" << s.provenance << "\n";
  out << "date,value\n";
  out.precision(17);
  for (int i = 0; i < s.size(); ++i)
    out << MonthIndex{s.start.value + i}.str() << "," << s.values[i] << "\n";
}

// SDMX-CSV as served by the ECB data portal and Eurostat: one header row,
// observations keyed by TIME_PERIOD / OBS_VALUE columns.
inline Series parse_sdmx_csv(const std::string& text, const std::string& name) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line))
    throw DataError("empty SDMX response for " + name);
  auto header = detail::split_csv_line(line);
  int time_col = -1, value_col = -1;
  for (int i = 0; i < static_cast<int>(header.size()); ++i) {
    if (header[i] == "TIME_PERIOD") time_col = i;
    if (header[i] == "OBS_VALUE") value_col = i;
  }
  if (time_col < 0 || value_col < 0)
    throw DataError("SDMX response for " + name + " lacks TIME_PERIOD/OBS_VALUE");
  std::vector<std::pair<MonthIndex, double>> obs;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cols = detail::split_csv_line(line);
    if (static_cast<int>(cols.size()) <= std::max(time_col, value_col))
      throw DataError("malformed SDMX row for " + name);
    if (cols[value_col].empty()) continue;
    obs.emplace_back(detail::parse_month(cols[time_col]), std::stod(cols[value_col]));
  }
  return detail::from_month_value_pairs(std::move(obs), name);
}

inline std::string ecb_sdmx_url(const std::string& code) {
  // Codes read "FLOW.rest.of.key"; the REST path is /data/FLOW/rest.of.key.
  auto dot = code.find('.');
  if (dot == std::string::npos)
    throw ConfigError("ECB code must start with a dataflow prefix: " + code);
  return "https://data-api.ecb.europa.eu/service/data/" + code.substr(0, dot) +
         "/" + code.substr(dot + 1) + "?format=csvdata";
}

inline std::string eurostat_url(const std::string& code, const std::string& country) {
  return "https://ec.europa.eu/eurostat/api/dissemination/sdmx/2.1/data/" + code +
         "?format=SDMX-CSV&freq=M&geo=" + country;
}

enum class TransformKind { Log100, Spread, Ratio100, Passthrough };

struct TransformSpec {
  TransformKind kind = TransformKind::Passthrough;
  std::vector<std::string> inputs;  // 1 input, or 2 for spread/ratio100
};

namespace detail {

inline std::pair<MonthIndex, MonthIndex> intersect(const Series& a, const Series& b) {
  MonthIndex lo{std::max(a.start.value, b.start.value)};
  MonthIndex hi{std::min(a.end().value, b.end().value)};
  if (hi < lo)
    throw DataError("series " + a.name + " and " + b.name + " do not overlap");
  return {lo, hi};
}

}  // namespace detail

// log100: 100*ln(x); spread: a-b in percentage points; ratio100: 100*(a/b);
// passthrough for rates already in percent.
inline Series apply_transform(const TransformSpec& spec,
                              const std::map<std::string, Series>& inputs,
                              const std::string& out_name) {
  auto get = [&](std::size_t i) -> const Series& {
    if (i >= spec.inputs.size())
      throw ConfigError("transform " + out_name + ": missing input");
    auto it = inputs.find(spec.inputs[i]);
    if (it == inputs.end())
      throw DataError("transform " + out_name + ": unknown input " + spec.inputs[i]);
    return it->second;
  };
  Series out;
  out.name = out_name;
  switch (spec.kind) {
    case TransformKind::Log100: {
      const Series& x = get(0);
      out.start = x.start;
      for (double v : x.values) {
        if (!(v > 0.0))
          throw DataError("log100 input " + x.name + " has nonpositive value");
        out.values.push_back(100.0 * std::log(v));
      }
      break;
    }
    case TransformKind::Passthrough: {
      const Series& x = get(0);
      out.start = x.start;
      out.values = x.values;
      break;
    }
    case TransformKind::Spread: {
      const Series& a = get(0);
      const Series& b = get(1);
      auto [lo, hi] = detail::intersect(a, b);
      out.start = lo;
      for (int m = lo.value; m <= hi.value; ++m)
        out.values.push_back(a.at({m}) - b.at({m}));
      break;
    }
    case TransformKind::Ratio100: {
      const Series& a = get(0);
      const Series& b = get(1);
      auto [lo, hi] = detail::intersect(a, b);
      out.start = lo;
      for (int m = lo.value; m <= hi.value; ++m) {
        const double den = b.at({m});
        if (!(den > 0.0))
          throw DataError("ratio100 denominator " + b.name + " nonpositive at " +
                          MonthIndex{m}.str());
        out.values.push_back(100.0 * a.at({m}) / den);
      }
      break;
    }
  }
  return out;
}

// Per-country transformed series plus the shared short rate, aligned to the
// intersection of available months and clipped to [clip_lo, clip_hi].
// Countries may start later than others (unbalanced panel).
inline PanelDataset assemble_panel(
    const std::vector<std::pair<std::string, std::map<std::string, Series>>>& countries,
    const std::vector<std::string>& variable_names, const Series& short_rate,
    MonthIndex clip_lo, MonthIndex clip_hi, int n_det = 1) {
  PanelDataset panel;
  panel.variable_names = variable_names;
  const int n = static_cast<int>(variable_names.size());
  for (const auto& [code, series_map] : countries) {
    int lo = std::max(clip_lo.value, short_rate.start.value);
    int hi = std::min(clip_hi.value, short_rate.end().value);
    std::vector<const Series*> cols(n);
    for (int i = 0; i < n; ++i) {
      if (variable_names[i] == short_rate.name) {
        cols[i] = &short_rate;
        continue;
      }
      auto it = series_map.find(variable_names[i]);
      if (it == series_map.end())
        throw DataError("country " + code + ": missing variable " + variable_names[i]);
      cols[i] = &it->second;
      lo = std::max(lo, it->second.start.value);
      hi = std::min(hi, it->second.end().value);
    }
    if (hi < lo)
      throw DataError("country " + code + ": empty date intersection");
    const int T = hi - lo + 1;
    CountryData cd;
    cd.code = code;
    cd.start = {lo};
    cd.Y.resize(T, n);
    for (int t = 0; t < T; ++t)
      for (int i = 0; i < n; ++i) cd.Y(t, i) = cols[i]->at({lo + t});
    cd.Z.resize(T, n_det);
    if (n_det >= 1) cd.Z.col(0).setOnes();
    if (n_det >= 2)
      for (int t = 0; t < T; ++t) cd.Z(t, 1) = static_cast<double>(t);
    panel.countries.push_back(std::move(cd));
  }
  return panel;
}

// Panel cache: one CSV per country, first column the month, then one column
// per variable in panel order.
inline void write_panel_csv(const std::string& path, const CountryData& cd,
                            const std::vector<std::string>& variable_names) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write panel file: " + path);
  out << "date";
  for (const auto& v : variable_names) out << "," << v;
  out << "\n";
  out.precision(17);
  for (Eigen::Index t = 0; t < cd.Y.rows(); ++t) {
    out << MonthIndex{cd.start.value + static_cast<int>(t)}.str();
    for (Eigen::Index i = 0; i < cd.Y.cols(); ++i) out << "," << cd.Y(t, i);
    out << "\n";
  }
}

inline CountryData read_panel_csv(const std::string& path, const std::string& code,
                                  const std::vector<std::string>& variable_names,
                                  int n_det = 1) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open panel file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty panel file: " + path);
  auto header = detail::split_csv_line(line);
  if (header.size() != variable_names.size() + 1 || header[0] != "date")
    throw DataError("panel file " + path + ": unexpected header");
  for (std::size_t i = 0; i < variable_names.size(); ++i)
    if (header[i + 1] != variable_names[i])
      throw DataError("panel file " + path + ": variable order mismatch (have '" +
                      header[i + 1] + "', want '" + variable_names[i] + "')");
  std::vector<std::vector<double>> rows;
  std::vector<MonthIndex> months;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cols = detail::split_csv_line(line);
    if (cols.size() != header.size())
      throw DataError("panel file " + path + ": ragged row");
    months.push_back(detail::parse_month(cols[0]));
    std::vector<double> vals;
    for (std::size_t i = 1; i < cols.size(); ++i) vals.push_back(std::stod(cols[i]));
    rows.push_back(std::move(vals));
  }
  if (rows.empty()) throw DataError("panel file " + path + " has no rows");
  for (std::size_t t = 1; t < months.size(); ++t)
    if (months[t].value != months[t - 1].value + 1)
      throw DataError("panel file " + path + ": non-contiguous months");
  CountryData cd;
  cd.code = code;
  cd.start = months.front();
  const int T = static_cast<int>(rows.size());
  const int n = static_cast<int>(variable_names.size());
  cd.Y.resize(T, n);
  for (int t = 0; t < T; ++t)
    for (int i = 0; i < n; ++i) cd.Y(t, i) = rows[t][i];
  cd.Z.resize(T, n_det);
  if (n_det >= 1) cd.Z.col(0).setOnes();
  if (n_det >= 2)
    for (int t = 0; t < T; ++t) cd.Z(t, 1) = static_cast<double>(t);
  return cd;
}

}  // namespace panelvar
