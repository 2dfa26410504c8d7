#pragma once

#include "spare/rng.hpp"
#include "spare/rules.hpp"

#include <string>
#include <vector>

namespace spare {

// One concrete candidate reference list (gamma = delta), identified by its
// signature string.
struct Shell {
  ReferenceList gamma;
  std::string signature;
};

// Distribution over shells: explicit weights for explored shells plus one
// lumped mass spread uniformly over the (finite but never materialized)
// unexplored remainder. Total mass is 1.
struct ShellDistribution {
  std::vector<std::pair<Shell, double>> explored;  // sorted by weight, descending
  double unexplored_mass = 0.0;
  double unexplored_count = 0.0;

  double explored_mass() const;
  void sort_by_weight();
};

// Number of reference lists of length <= max_refs over the domain's
// functions for a template of the given arity (slot choices grow with list
// position). Returned as double; the count explodes combinatorially.
double count_possible_shells(const Domain& domain, int template_arity, int max_refs);

// Explored shells carry mass (1 - eps) proportional to exp(-loss); the
// remaining eps is the unexplored lump. With no unexplored shells the
// explored set takes all the mass.
ShellDistribution init_shell_distribution(const Domain& domain,
                                          const std::vector<ShellEval>& explored, double eps,
                                          double unexplored_count);

struct PhiEntry {
  Shell shell;
  TransitionRule rule;
  bool trained = false;
};

// A rule whose structure is distributional: pi over shells plus trained
// predictors for the top-kappa shells.
struct MixtureRule {
  int template_id = 0;
  ShellDistribution pi;
  std::vector<PhiEntry> phi;
};

struct MembershipMatrix {
  Eigen::MatrixXd z;  // (samples, rules); rows sum to 1

  int num_samples() const { return static_cast<int>(z.rows()); }
  int num_rules() const { return static_cast<int>(z.cols()); }
};

struct KmeansResult {
  Eigen::MatrixXd centers;  // (K, dim)
  std::vector<int> assignments;
  std::vector<double> inertia;  // one entry per iteration, non-increasing
};

// Lloyd iterations with k-means++ seeding; empty clusters are reseeded from
// the point farthest from its assigned center. Stops early once assignments
// are stable.
KmeansResult kmeans(const Eigen::MatrixXd& points, int k, int iters, Rng& rng);

enum class MembershipInit { Discrete, InvDist, InvSqDist };

// Clustering features: [x | y | scale * per-sample loss] under the seed
// model's single rule, z-scored per column. Samples the seed rule does not
// apply to contribute their maximal applicable slot prefix; missing entries
// are imputed at the column mean (zero after z-scoring).
Eigen::MatrixXd build_membership_features(const SpareModel& seed_model,
                                          const std::vector<Experience>& experiences,
                                          double loglik_scale);

// Membership probabilities from k-means on the features: hard assignments
// (Discrete) or rows proportional to inverse (squared) center distances. A
// sample exactly at a center belongs fully to that cluster.
MembershipMatrix init_membership(const std::vector<Experience>& experiences,
                                 const SpareModel& seed_model, int k, MembershipInit mode,
                                 double loglik_scale, int kmeans_iters, uint64_t seed);

struct EmConfig {
  int num_rules = 3;   // K
  int kappa = 3;       // trained shells per mixture rule
  int iterations = 10;
  double epsilon = 0.05;  // unexplored shell mass
  int max_refs = 3;
  double val_fraction = 0.15;
  TrainConfig train;
  MembershipInit init = MembershipInit::InvSqDist;
  double loglik_scale = 1.0;
  int kmeans_iters = 50;
  // When > 0, initialize membership from the sample's stack height instead of
  // clustering: the height's rule gets this probability, the rest is split
  // evenly (reproduces the engineered-start separation study).
  double oracle_height_prob = 0.0;
  // Optional early stop: finish when the largest membership change in an
  // E-step falls below this threshold (0 disables).
  double z_stop_threshold = 0.0;
  uint64_t seed = 0;
};

// Retrains the top-kappa shells on the membership-weighted samples, lets each
// sample vote for its best shell, redistributes the top shells' mass by vote
// weight (total preserved), and retrains if the top set changed. Degenerate
// votes (all zero) keep the previous weights.
MixtureRule m_step(const Domain& domain, MixtureRule rule,
                   const std::vector<Experience>& experiences, const Eigen::VectorXd& z_column,
                   const Eigen::VectorXd& sigma_default, const TrainConfig& train_cfg,
                   uint64_t seed);

// Scales each membership by the mixture rule's data likelihood for the sample
// and renormalizes rows (computed in log space). Rows that underflow to zero
// everywhere reset to uniform.
MembershipMatrix e_step(const Domain& domain, const std::vector<MixtureRule>& rules,
                        const std::vector<Experience>& experiences, const MembershipMatrix& z,
                        const Eigen::VectorXd& sigma_default);

// Per-sample negative log-likelihood of one mixture rule: its top-kappa
// shells' predictions combined with renormalized pi weights; shells that do
// not apply fall back to the default-variance prediction.
double mixture_rule_sample_loss(const Domain& domain, const MixtureRule& rule,
                                const Experience& e, const Eigen::VectorXd& sigma_default);

struct EmShellTraceRow {
  int iteration = 0;
  int rule = 0;
  std::vector<std::pair<std::string, double>> top_shells;
};

struct EmMembershipTraceRow {
  int iteration = 0;
  int stack_height = 0;
  int target_rule = 0;
  double mean_membership = 0.0;
};

struct EmResult {
  std::vector<MixtureRule> rules;
  MembershipMatrix z;
  Eigen::VectorXd sigma_default;
  std::vector<EmShellTraceRow> shell_trace;
  std::vector<EmMembershipTraceRow> membership_trace;
  std::vector<int> heights;                    // distinct stack heights, ascending
  std::vector<int> target_rule_of_height;     // aligned with heights
};

// Full pipeline: seed rule by greedy selection on all samples, membership
// initialization, per-rule shell distributions from greedy runs on the
// weighted samples, then alternating M/E steps with per-iteration trace.
EmResult run_em(const Domain& domain, const std::vector<Experience>& experiences,
                const EmConfig& cfg);

nlohmann::ordered_json em_model_to_json(const Domain& domain, const EmResult& result,
                                        const EmConfig& cfg);

}  // namespace spare
