#include "spare/relational.hpp"

#include <algorithm>
#include <sstream>

namespace spare {

double aggregate(Aggregator agg, const std::vector<double>& values) {
  if (agg == Aggregator::Cardinality) return static_cast<double>(values.size());
  if (values.empty()) throw std::invalid_argument("aggregate: empty value set");
  switch (agg) {
    case Aggregator::Mean: {
      double s = 0.0;
      for (double v : values) s += v;
      return s / static_cast<double>(values.size());
    }
    case Aggregator::Max:
      return *std::max_element(values.begin(), values.end());
    default:
      throw std::invalid_argument("aggregate: unknown aggregator");
  }
}

ReferenceFunction make_relation_reference(
    std::string name, int arity, Aggregator agg,
    std::function<bool(const State&, int, const std::vector<int>&)> relation) {
  ReferenceFunction fn;
  fn.name = std::move(name);
  fn.arity = arity;
  fn.aggregator = agg;
  fn.apply = [arity, relation = std::move(relation)](
                 const State& state, const std::vector<ObjectSet>& args) -> ObjectSet {
    // Union over the cartesian product of the argument sets.
    ObjectSet out;
    std::vector<int> tuple(static_cast<std::size_t>(arity));
    std::vector<std::size_t> pos(static_cast<std::size_t>(arity), 0);
    for (const auto& a : args)
      if (a.empty()) return {};
    while (true) {
      for (int j = 0; j < arity; ++j) tuple[static_cast<std::size_t>(j)] = args[static_cast<std::size_t>(j)][pos[static_cast<std::size_t>(j)]];
      for (int o = 0; o < state.num_objects(); ++o) {
        if (std::find(tuple.begin(), tuple.end(), o) != tuple.end()) continue;
        if (relation(state, o, tuple)) out.push_back(o);
      }
      int j = arity - 1;
      while (j >= 0) {
        if (++pos[static_cast<std::size_t>(j)] < args[static_cast<std::size_t>(j)].size()) break;
        pos[static_cast<std::size_t>(j)] = 0;
        --j;
      }
      if (j < 0) break;
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  };
  return fn;
}

int Domain::property_index(const std::string& name) const {
  for (std::size_t i = 0; i < properties.size(); ++i)
    if (properties[i] == name) return static_cast<int>(i);
  throw std::out_of_range("unknown property: " + name);
}

int Domain::reference_index(const std::string& name) const {
  for (std::size_t i = 0; i < references.size(); ++i)
    if (references[i].name == name) return static_cast<int>(i);
  throw std::out_of_range("unknown reference function: " + name);
}

int Domain::template_index(const std::string& name) const {
  for (std::size_t i = 0; i < action_templates.size(); ++i)
    if (action_templates[i].name == name) return static_cast<int>(i);
  throw std::out_of_range("unknown action template: " + name);
}

void Domain::validate() const {
  for (std::size_t i = 0; i < properties.size(); ++i)
    for (std::size_t j = i + 1; j < properties.size(); ++j)
      if (properties[i] == properties[j])
        throw std::invalid_argument("duplicate property name: " + properties[i]);
  for (const auto& r : references) {
    if (r.arity < 1) throw std::invalid_argument("reference arity must be >= 1: " + r.name);
    if (!r.apply) throw std::invalid_argument("reference has no implementation: " + r.name);
  }
  for (const auto& t : action_templates) {
    if (t.arity < 1) throw std::invalid_argument("template arity must be >= 1: " + t.name);
    if (t.param_dim < 0) throw std::invalid_argument("negative parameter dimension: " + t.name);
  }
}

int ProblemInstance::object_index(const std::string& oid) const {
  for (std::size_t i = 0; i < object_ids.size(); ++i)
    if (object_ids[i] == oid) return static_cast<int>(i);
  throw std::out_of_range("unknown object id: " + oid);
}

void validate_reference_list(const ReferenceList& refs, int template_arity) {
  for (int t = 1; t <= refs.size(); ++t) {
    const auto& step = refs.steps[static_cast<std::size_t>(t - 1)];
    for (int k : step.arg_slots) {
      if (k < 0 || k >= template_arity + t - 1) {
        std::ostringstream msg;
        msg << "reference step " << t << " uses slot " << k << " but only "
            << template_arity + t - 1 << " slots are designated";
        throw std::invalid_argument(msg.str());
      }
    }
  }
}

std::string reference_list_signature(const Domain& domain, const ReferenceList& refs) {
  std::ostringstream out;
  for (std::size_t i = 0; i < refs.steps.size(); ++i) {
    if (i) out << ';';
    const auto& s = refs.steps[i];
    out << domain.references.at(static_cast<std::size_t>(s.function_id)).name << '(';
    for (std::size_t j = 0; j < s.arg_slots.size(); ++j) {
      if (j) out << ',';
      out << s.arg_slots[j];
    }
    out << ')';
  }
  return out.str();
}

ReferenceList parse_reference_list(const Domain& domain, const std::string& signature,
                                   ReferenceRole role) {
  ReferenceList refs;
  refs.role = role;
  std::size_t pos = 0;
  while (pos < signature.size()) {
    std::size_t open = signature.find('(', pos);
    std::size_t close = signature.find(')', pos);
    if (open == std::string::npos || close == std::string::npos || close < open)
      throw std::invalid_argument("malformed reference signature: " + signature);
    ReferenceStep step;
    step.function_id = domain.reference_index(signature.substr(pos, open - pos));
    std::string args = signature.substr(open + 1, close - open - 1);
    std::istringstream in(args);
    std::string tok;
    while (std::getline(in, tok, ',')) step.arg_slots.push_back(std::stoi(tok));
    refs.steps.push_back(std::move(step));
    pos = close + 1;
    if (pos < signature.size() && signature[pos] == ';') ++pos;
  }
  return refs;
}

ObjectSet apply_reference(const Domain& domain, int function_id, const State& state,
                          const std::vector<ObjectSet>& args) {
  if (function_id < 0 || function_id >= static_cast<int>(domain.references.size()))
    throw std::out_of_range("unknown reference function id");
  const auto& fn = domain.references[static_cast<std::size_t>(function_id)];
  if (static_cast<int>(args.size()) != fn.arity)
    throw std::invalid_argument("reference arity mismatch for " + fn.name);
  ObjectSet out = fn.apply(state, args);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::optional<std::vector<ObjectSet>> build_object_lists(const Domain& domain,
                                                         const ReferenceList& refs,
                                                         const std::vector<int>& targets,
                                                         const State& state) {
  std::vector<ObjectSet> slots;
  slots.reserve(targets.size() + refs.steps.size());
  for (int t : targets) slots.push_back({t});
  for (const auto& step : refs.steps) {
    std::vector<ObjectSet> args;
    args.reserve(step.arg_slots.size());
    for (int k : step.arg_slots) args.push_back(slots.at(static_cast<std::size_t>(k)));
    ObjectSet result = apply_reference(domain, step.function_id, state, args);
    if (result.empty()) return std::nullopt;
    slots.push_back(std::move(result));
  }
  return slots;
}

namespace {

// Slot-major, property order within a slot. Target slots are singletons;
// reference slots collapse sets with `agg`.
void append_slot_features(const Domain& domain, const ObjectSet& slot, Aggregator agg,
                          const State& state, Eigen::VectorXd& out, int& cursor) {
  std::vector<double> values;
  values.reserve(slot.size());
  for (int p = 0; p < domain.num_properties(); ++p) {
    values.clear();
    for (int o : slot) values.push_back(state(o, p));
    out(cursor++) = slot.size() == 1 && agg != Aggregator::Cardinality
                        ? values.front()
                        : aggregate(agg, values);
  }
}

}  // namespace

Eigen::VectorXd extract_input(const Domain& domain, const ReferenceList& gamma,
                              const std::vector<ObjectSet>& slots, const State& state,
                              const ActionInstance& action) {
  const auto& tmpl = domain.action_templates.at(static_cast<std::size_t>(action.template_id));
  if (static_cast<int>(slots.size()) != tmpl.arity + gamma.size())
    throw std::logic_error("extract_input: slot count does not match rule signature");
  int np = domain.num_properties();
  Eigen::VectorXd x(tmpl.param_dim + np * static_cast<int>(slots.size()));
  if (action.alpha.size() != tmpl.param_dim)
    throw std::logic_error("extract_input: alpha length does not match template");
  int cursor = 0;
  for (int i = 0; i < tmpl.param_dim; ++i) x(cursor++) = action.alpha(i);
  for (std::size_t s = 0; s < slots.size(); ++s) {
    Aggregator agg = Aggregator::Mean;
    if (s >= static_cast<std::size_t>(tmpl.arity)) {
      const auto& step = gamma.steps[s - static_cast<std::size_t>(tmpl.arity)];
      agg = domain.references[static_cast<std::size_t>(step.function_id)].aggregator;
    }
    append_slot_features(domain, slots[s], agg, state, x, cursor);
  }
  return x;
}

Eigen::VectorXd extract_output(const Domain& domain, const std::vector<ObjectSet>& slots,
                               const State& next_state) {
  int np = domain.num_properties();
  Eigen::VectorXd y(np * static_cast<int>(slots.size()));
  int cursor = 0;
  for (const auto& slot : slots) {
    if (slot.empty()) throw std::logic_error("extract_output: empty output slot");
    append_slot_features(domain, slot, Aggregator::Mean, next_state, y, cursor);
  }
  return y;
}

int input_dim(const Domain& domain, const ActionTemplate& tmpl, const ReferenceList& gamma) {
  return tmpl.param_dim + domain.num_properties() * (tmpl.arity + gamma.size());
}

int output_dim(const Domain& domain, const ActionTemplate& tmpl, const ReferenceList& delta) {
  return domain.num_properties() * (tmpl.arity + delta.size());
}

int rule_score(const Domain& domain, const RuleSignature& sig, const State& state,
               const ActionInstance& action) {
  if (action.template_id != sig.template_id) return 0;
  if (!build_object_lists(domain, sig.gamma, action.targets, state)) return 0;
  if (!build_object_lists(domain, sig.delta, action.targets, state)) return 0;
  return sig.gamma.size() + sig.delta.size() + 1;
}

}  // namespace spare
