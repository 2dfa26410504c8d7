#pragma once

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace spare {

class State;

// Sorted list of object indices within one problem instance. Deictic
// references designate sets; target slots hold singletons.
using ObjectSet = std::vector<int>;

enum class Aggregator { Mean, Max, Cardinality };

double aggregate(Aggregator agg, const std::vector<double>& values);

// A deictic reference function: maps argument object sets to the designated
// set, reading object properties from the state. Results are sorted and
// deterministic in (state, args).
struct ReferenceFunction {
  std::string name;
  int arity = 1;
  Aggregator aggregator = Aggregator::Mean;
  std::function<ObjectSet(const State&, const std::vector<ObjectSet>&)> apply;
};

// Builds a reference from a per-object relation predicate: the result is
// every object (other than the arguments' members) satisfying the relation
// against some member tuple of the argument sets.
ReferenceFunction make_relation_reference(
    std::string name, int arity, Aggregator agg,
    std::function<bool(const State&, int candidate, const std::vector<int>& args)> relation);

struct ActionTemplate {
  std::string name;
  int param_dim = 0;   // length of the continuous parameter vector
  int arity = 1;       // number of target objects
  std::string program; // executable program identifier, dispatched by the simulator
};

struct Domain {
  std::vector<std::string> properties;
  std::vector<ReferenceFunction> references;
  std::vector<ActionTemplate> action_templates;

  int num_properties() const { return static_cast<int>(properties.size()); }
  int property_index(const std::string& name) const;
  int reference_index(const std::string& name) const;
  int template_index(const std::string& name) const;
  // Throws std::invalid_argument on duplicate property names, missing
  // aggregators, or non-positive arities.
  void validate() const;
};

struct ProblemInstance {
  const Domain* domain = nullptr;
  std::string id;
  std::vector<std::string> object_ids;

  int num_objects() const { return static_cast<int>(object_ids.size()); }
  int object_index(const std::string& oid) const;
};

// Dense property table, one column per object and one row per property.
class State {
 public:
  State() = default;
  State(int num_properties, int num_objects)
      : values_(Eigen::MatrixXd::Zero(num_properties, num_objects)) {}
  explicit State(Eigen::MatrixXd values) : values_(std::move(values)) {}

  int num_properties() const { return static_cast<int>(values_.rows()); }
  int num_objects() const { return static_cast<int>(values_.cols()); }

  double operator()(int object, int property) const { return values_(property, object); }
  double& at(int object, int property) { return values_(property, object); }

  const Eigen::MatrixXd& values() const { return values_; }
  Eigen::MatrixXd& values() { return values_; }

  bool all_finite() const { return values_.allFinite(); }

 private:
  Eigen::MatrixXd values_;  // (property, object)
};

struct ActionInstance {
  int template_id = 0;
  Eigen::VectorXd alpha;
  std::vector<int> targets;
};

// One step of a reference list: apply `function_id` to previously designated
// slots. For the t-th step (t >= 1) of a rule with template arity n, each
// argument slot index must be < n + t - 1.
struct ReferenceStep {
  int function_id = 0;
  std::vector<int> arg_slots;

  bool operator==(const ReferenceStep& o) const = default;
};

enum class ReferenceRole { Input, Output };

struct ReferenceList {
  std::vector<ReferenceStep> steps;
  ReferenceRole role = ReferenceRole::Input;

  int size() const { return static_cast<int>(steps.size()); }
  bool empty() const { return steps.empty(); }
  bool same_steps(const ReferenceList& o) const { return steps == o.steps; }
};

// Throws std::invalid_argument if any step references a slot that is not yet
// designated at its position.
void validate_reference_list(const ReferenceList& refs, int template_arity);

std::string reference_list_signature(const Domain& domain, const ReferenceList& refs);
ReferenceList parse_reference_list(const Domain& domain, const std::string& signature,
                                   ReferenceRole role);

struct Experience {
  std::shared_ptr<const ProblemInstance> instance;
  State state;
  ActionInstance action;
  State next_state;
};

// Template id, input references (gamma) and output references (delta);
// the applicability part of a transition rule.
struct RuleSignature {
  int template_id = 0;
  ReferenceList gamma;  // role Input
  ReferenceList delta;  // role Output
};

// Applies one reference function to argument sets. Empty results are valid
// (the enclosing rule simply does not apply). Throws std::out_of_range for an
// unknown function id.
ObjectSet apply_reference(const Domain& domain, int function_id, const State& state,
                          const std::vector<ObjectSet>& args);

// Resolves a reference list against concrete targets: slots 0..n-1 are the
// singleton target sets, slot n+t-1 the t-th reference result. Returns
// nullopt as soon as any step designates an empty set.
std::optional<std::vector<ObjectSet>> build_object_lists(const Domain& domain,
                                                         const ReferenceList& refs,
                                                         const std::vector<int>& targets,
                                                         const State& state);

// Input feature vector: [alpha | properties of slot 0 | ... | slot L-1].
// Set-valued slots are collapsed with the aggregator of the reference that
// designated them; target slots are singletons and copy raw values.
Eigen::VectorXd extract_input(const Domain& domain, const ReferenceList& gamma,
                              const std::vector<ObjectSet>& slots, const State& state,
                              const ActionInstance& action);

// Output vector over the delta slots; set-valued slots use a mean aggregator.
Eigen::VectorXd extract_output(const Domain& domain, const std::vector<ObjectSet>& slots,
                               const State& next_state);

int input_dim(const Domain& domain, const ActionTemplate& tmpl, const ReferenceList& gamma);
int output_dim(const Domain& domain, const ActionTemplate& tmpl, const ReferenceList& delta);

// 0 if the rule does not apply (template mismatch or an empty designation in
// gamma or delta), else N_gamma + N_delta + 1.
int rule_score(const Domain& domain, const RuleSignature& sig, const State& state,
               const ActionInstance& action);

}  // namespace spare
