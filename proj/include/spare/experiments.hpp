#pragma once

#include "spare/metrics.hpp"

#include <string>
#include <vector>

namespace spare {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string details;
};

struct ExperimentOutput {
  std::vector<MetricsRow> rows;
  std::vector<CheckResult> checks;
};

// Experiment names: ref-ablation, distractor-sweep, sample-efficiency,
// em-separation, init-tables, ordering-study. Every run is reproducible from
// (config, seeds); all tunables and their defaults live in
// configs/defaults.cfg.
ExperimentOutput run_experiment(const std::string& name, const Config& cfg);

std::vector<std::string> experiment_names();

ExperimentOutput run_ref_ablation(const Config& cfg);
ExperimentOutput run_distractor_sweep(const Config& cfg);
ExperimentOutput run_sample_efficiency(const Config& cfg);
ExperimentOutput run_em_separation(const Config& cfg);
ExperimentOutput run_init_tables(const Config& cfg);
ExperimentOutput run_ordering_study(const Config& cfg);

}  // namespace spare
