#pragma once

#include "spare/rng.hpp"
#include "spare/rules.hpp"

#include <vector>

namespace spare {

// Monolithic transition model: one Gaussian predictor over the flattened
// full state. Requires every experience to have the same number of objects.

enum class OrderingPolicy { Random, SortedByPose, OracleStack };

OrderingPolicy ordering_from_string(const std::string& name);  // none | xtheny | stack
std::string ordering_to_string(OrderingPolicy policy);

// Targets always come first. The remainder is shuffled (Random), sorted by
// (x, y, z, id) (SortedByPose), or — OracleStack — the pushed stack bottom-up
// followed by the rest sorted by pose.
std::vector<int> order_objects(const Domain& domain, const State& state,
                               const std::vector<int>& targets, OrderingPolicy policy, Rng& rng);

struct BaselineModel {
  OrderingPolicy policy = OrderingPolicy::SortedByPose;
  int num_objects = 0;
  GaussianPredictor predictor;
};

// x = [alpha | flattened ordered state], y = flattened ordered next state
// (the permutation comes from the pre-action state). Throws on inconsistent
// object counts.
BaselineModel train_baseline(const Domain& domain, const std::vector<Experience>& experiences,
                             OrderingPolicy policy, const TrainConfig& cfg);

enum class EvalScope { StackOnly, AllObjects };

// Mean per-sample log-likelihood of the next state, summed over the scope's
// (object, property) cells; scopes[i] lists the stack objects of sample i.
double eval_baseline(const Domain& domain, const BaselineModel& model,
                     const std::vector<Experience>& experiences,
                     const std::vector<ObjectSet>& scopes, EvalScope scope, uint64_t eval_seed);

// The same metric for a SPARE model, through the identical per-cell
// log-density routine.
double eval_spare(const SpareModel& model, const std::vector<Experience>& experiences,
                  const std::vector<ObjectSet>& scopes, EvalScope scope);

nlohmann::ordered_json baseline_to_json(const Domain& domain, const BaselineModel& model);
BaselineModel baseline_from_json(const Domain& domain, const nlohmann::ordered_json& j);

}  // namespace spare
