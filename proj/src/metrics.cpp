#include "spare/metrics.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace spare {

namespace {

std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string metrics_to_csv(const std::vector<MetricsRow>& rows) {
  std::string out = "experiment,seed,sweep_name,sweep_value,metric,value\n";
  for (const auto& r : rows) {
    out += r.experiment;
    out += ',';
    out += std::to_string(r.seed);
    out += ',';
    out += r.sweep_name;
    out += ',';
    out += format_real(r.sweep_value);
    out += ',';
    out += r.metric;
    out += ',';
    out += format_real(r.value);
    out += '\n';
  }
  return out;
}

void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open metrics file for writing: " + path);
  out << metrics_to_csv(rows);
}

std::vector<MetricsRow> read_metrics_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open metrics file: " + path);
  std::vector<MetricsRow> rows;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    std::istringstream ss(line);
    MetricsRow r;
    std::string field;
    std::getline(ss, r.experiment, ',');
    std::getline(ss, field, ',');
    r.seed = std::stol(field);
    std::getline(ss, r.sweep_name, ',');
    std::getline(ss, field, ',');
    r.sweep_value = std::stod(field);
    std::getline(ss, r.metric, ',');
    std::getline(ss, field, ',');
    r.value = std::stod(field);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::string metrics_to_json(const std::vector<MetricsRow>& rows) {
  std::string out = "[";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (i) out += ',';
    out += "\n  {\"experiment\":\"" + r.experiment + "\",\"seed\":" + std::to_string(r.seed) +
           ",\"sweep_name\":\"" + r.sweep_name + "\",\"sweep_value\":" + format_real(r.sweep_value) +
           ",\"metric\":\"" + r.metric + "\",\"value\":" + format_real(r.value) + "}";
  }
  out += rows.empty() ? "]\n" : "\n]\n";
  return out;
}

void write_metrics_json(const std::vector<MetricsRow>& rows, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open metrics file for writing: " + path);
  out << metrics_to_json(rows);
}

Config Config::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  Config cfg;
  std::string line;
  while (std::getline(in, line)) {
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      auto b = s.find_first_not_of(" \t\r");
      auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (!key.empty()) cfg.values_[key] = value;
  }
  return cfg;
}

void Config::apply_override(const std::string& key_equals_value) {
  auto eq = key_equals_value.find('=');
  if (eq == std::string::npos)
    throw std::invalid_argument("override must be key=value: " + key_equals_value);
  values_[key_equals_value.substr(0, eq)] = key_equals_value.substr(eq + 1);
}

std::string Config::get(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double Config::get_double(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : std::stod(it->second);
}

int Config::get_int(const std::string& key, int fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : std::stoi(it->second);
}

std::vector<long> Config::get_seeds(const std::string& key, const std::vector<long>& fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::vector<long> seeds;
  std::istringstream ss(it->second);
  std::string tok;
  while (std::getline(ss, tok, ',')) seeds.push_back(std::stol(tok));
  return seeds;
}

}  // namespace spare
