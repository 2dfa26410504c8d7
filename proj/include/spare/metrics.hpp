#pragma once

#include <map>
#include <string>
#include <vector>

namespace spare {

struct MetricsRow {
  std::string experiment;
  long seed = 0;
  std::string sweep_name;   // e.g. extras, train_samples, refs, iteration
  double sweep_value = 0.0;
  std::string metric;
  double value = 0.0;
};

// Fixed header: experiment,seed,sweep_name,sweep_value,metric,value.
// Reals use %.17g with a C locale, so identical rows serialize identically.
std::string metrics_to_csv(const std::vector<MetricsRow>& rows);
void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::string& path);
std::vector<MetricsRow> read_metrics_csv(const std::string& path);

std::string metrics_to_json(const std::vector<MetricsRow>& rows);
void write_metrics_json(const std::vector<MetricsRow>& rows, const std::string& path);

// Simple key=value configuration: file lines (# comments) plus overrides.
class Config {
 public:
  static Config from_file(const std::string& path);
  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  void apply_override(const std::string& key_equals_value);

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  std::string get(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  int get_int(const std::string& key, int fallback) const;
  std::vector<long> get_seeds(const std::string& key, const std::vector<long>& fallback) const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace spare
