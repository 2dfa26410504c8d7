#pragma once

#include "spare/predictor.hpp"
#include "spare/relational.hpp"

#include <nlohmann/json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace spare {

struct TransitionRule {
  RuleSignature sig;
  GaussianPredictor predictor;
  Eigen::VectorXd v_default;  // per-property variance for unpredicted objects
};

// A set of transition rules plus the model-level per-property default
// variances used when no rule applies (prediction centered at the current
// state).
struct SpareModel {
  const Domain* domain = nullptr;
  std::vector<TransitionRule> rules;
  Eigen::VectorXd sigma_default;  // per-property variances
};

// Uniform mixture of 1-D Gaussians (weights may differ when mixing across
// rules and slots).
struct GaussianMixture1D {
  std::vector<double> means, vars, weights;

  void add(double mean, double var, double weight) {
    means.push_back(mean);
    vars.push_back(var);
    weights.push_back(weight);
  }
  double log_density(double v) const;
  double total_weight() const;
};

double gaussian_log_density(double v, double mean, double var);

// Predicted distribution of the full next-state table: one 1-D mixture per
// (object, property) cell.
struct StateDistribution {
  int num_objects = 0, num_properties = 0;
  std::vector<GaussianMixture1D> cells;  // object-major

  const GaussianMixture1D& cell(int object, int property) const {
    return cells[static_cast<std::size_t>(object * num_properties + property)];
  }
  GaussianMixture1D& cell(int object, int property) {
    return cells[static_cast<std::size_t>(object * num_properties + property)];
  }

  double log_density(const State& next) const;
  // Restricted to the given objects (all properties).
  double log_density_scoped(const State& next, const ObjectSet& objects) const;
};

// Applicability-scored prediction: the max-score rules are averaged with
// uniform weights; with no applicable rule every cell falls back to a
// Gaussian centered at the current value with the model default variance.
StateDistribution predict(const SpareModel& model, const State& state,
                          const ActionInstance& action);

// Mean over experiences of the negative log-density of the observed next
// state (sum over all (object, property) cells). Optional per-sample weights
// are normalized by their sum.
double spare_loss(const SpareModel& model, const std::vector<Experience>& experiences,
                  const Eigen::VectorXd& weights = {});
double per_sample_loss(const SpareModel& model, const Experience& e);

// Model-level default variances: per-property weighted mean squared deviation
// of next-state from state over all objects, floored. This is the
// loss-minimizing variance for the "nothing changes" fallback predictor.
Eigen::VectorXd fit_sigma_default(const std::vector<Experience>& experiences,
                                  const Eigen::VectorXd& weights, double floor);

struct LearnDistResult {
  bool applicable = false;  // false when no experience matched the rule
  TransitionRule rule;
  int num_applicable = 0;
};

// Trains a rule's predictor on the experiences it applies to and fits the
// per-property default variances from the unpredicted objects' deviations.
LearnDistResult learn_dist(const Domain& domain, const std::vector<Experience>& experiences,
                           const Eigen::VectorXd& weights, int template_id,
                           const ReferenceList& gamma, const ReferenceList& delta,
                           const TrainConfig& cfg);

enum class DeltaPolicy { MirrorGamma };

struct ShellEval {
  ReferenceList gamma;  // delta mirrors gamma
  double val_loss = 0.0;
};

struct GreedyLevel {
  ReferenceList gamma;
  double val_loss = 0.0;
  bool accepted = false;
  Eigen::VectorXd v_default;
};

struct GreedyConfig {
  int max_refs = 3;
  double val_fraction = 0.15;
  TrainConfig train;
  DeltaPolicy delta_policy = DeltaPolicy::MirrorGamma;
  // Keep searching past the first rejected level (level info is still
  // recorded; the accepted prefix is unaffected). Used by ablation studies.
  bool force_all_levels = false;
  uint64_t seed = 0;
};

struct GreedyResult {
  ReferenceList gamma;                  // accepted reference list
  TransitionRule rule;                  // trained on the train split for the accepted gamma
  Eigen::VectorXd sigma_default;        // fitted on the train split
  std::vector<double> accepted_losses;  // validation losses L_0..L_A along the accepted chain
  std::vector<GreedyLevel> levels;      // best candidate per explored level (level 0 first)
  std::vector<ShellEval> explored;      // every evaluated shell with its validation loss
  std::vector<int> train_indices, val_indices;
};

// Greedy reference selection: starting from the empty list, each level trains
// every candidate extension (one more reference over the existing slots) and
// keeps the best by validation loss, accepting it only on strict improvement.
// Validation samples a candidate rule does not apply to are charged the
// empty-list rule's loss. Ties break lexicographically on
// (function id, argument slots). Candidate evaluations within a level run in
// parallel; results are reduced in candidate order.
GreedyResult greedy_select(const Domain& domain, const std::vector<Experience>& experiences,
                           const Eigen::VectorXd& weights, int template_id,
                           const GreedyConfig& cfg);

// Single-rule model wrapper used throughout greedy search and the EM loop.
SpareModel single_rule_model(const Domain& domain, TransitionRule rule,
                             Eigen::VectorXd sigma_default);

nlohmann::ordered_json rule_to_json(const Domain& domain, const TransitionRule& rule);
TransitionRule rule_from_json(const Domain& domain, const nlohmann::ordered_json& j);
nlohmann::ordered_json model_to_json(const SpareModel& model);
SpareModel model_from_json(const Domain& domain, const nlohmann::ordered_json& j);
void save_model_json(const nlohmann::ordered_json& j, const std::string& path);
nlohmann::ordered_json load_model_json(const std::string& path);

}  // namespace spare
