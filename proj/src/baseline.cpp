#include "spare/baseline.hpp"

#include "spare/blocks.hpp"

#include <algorithm>
#include <stdexcept>

namespace spare {

OrderingPolicy ordering_from_string(const std::string& name) {
  if (name == "none") return OrderingPolicy::Random;
  if (name == "xtheny") return OrderingPolicy::SortedByPose;
  if (name == "stack") return OrderingPolicy::OracleStack;
  throw std::invalid_argument("unknown ordering policy: " + name);
}

std::string ordering_to_string(OrderingPolicy policy) {
  switch (policy) {
    case OrderingPolicy::Random: return "none";
    case OrderingPolicy::SortedByPose: return "xtheny";
    case OrderingPolicy::OracleStack: return "stack";
  }
  return "?";
}

namespace {

bool pose_less(const Domain& domain, const State& s, int a, int b) {
  int px = domain.property_index("x"), py = domain.property_index("y"),
      pz = domain.property_index("z");
  if (s(a, px) != s(b, px)) return s(a, px) < s(b, px);
  if (s(a, py) != s(b, py)) return s(a, py) < s(b, py);
  if (s(a, pz) != s(b, pz)) return s(a, pz) < s(b, pz);
  return a < b;  // id fallback for coincident poses
}

}  // namespace

std::vector<int> order_objects(const Domain& domain, const State& state,
                               const std::vector<int>& targets, OrderingPolicy policy, Rng& rng) {
  std::vector<bool> used(static_cast<std::size_t>(state.num_objects()), false);
  std::vector<int> order;
  order.reserve(static_cast<std::size_t>(state.num_objects()));
  for (int t : targets) {
    order.push_back(t);
    used[static_cast<std::size_t>(t)] = true;
  }

  std::vector<int> rest;
  if (policy == OrderingPolicy::OracleStack) {
    // Pushed stack first, bottom-up.
    int pz = domain.property_index("z");
    std::vector<int> stack;
    for (int t : targets)
      for (int o : push_closure(state, t))
        if (!used[static_cast<std::size_t>(o)]) {
          used[static_cast<std::size_t>(o)] = true;
          stack.push_back(o);
        }
    std::sort(stack.begin(), stack.end(),
              [&](int a, int b) { return state(a, pz) < state(b, pz); });
    order.insert(order.end(), stack.begin(), stack.end());
  }
  for (int o = 0; o < state.num_objects(); ++o)
    if (!used[static_cast<std::size_t>(o)]) rest.push_back(o);

  if (policy == OrderingPolicy::Random) {
    std::vector<int> perm = rng.permutation(static_cast<int>(rest.size()));
    std::vector<int> shuffled(rest.size());
    for (std::size_t i = 0; i < rest.size(); ++i)
      shuffled[i] = rest[static_cast<std::size_t>(perm[i])];
    rest = std::move(shuffled);
  } else {
    std::sort(rest.begin(), rest.end(),
              [&](int a, int b) { return pose_less(domain, state, a, b); });
  }
  order.insert(order.end(), rest.begin(), rest.end());
  return order;
}

namespace {

Eigen::VectorXd flatten_ordered(const State& s, const std::vector<int>& order, int np) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(order.size()) * np);
  int cursor = 0;
  for (int o : order)
    for (int p = 0; p < np; ++p) v(cursor++) = s(o, p);
  return v;
}

}  // namespace

BaselineModel train_baseline(const Domain& domain, const std::vector<Experience>& experiences,
                             OrderingPolicy policy, const TrainConfig& cfg) {
  if (experiences.empty()) throw std::invalid_argument("train_baseline: empty experience set");
  int nu = experiences.front().state.num_objects();
  int np = domain.num_properties();
  int d = static_cast<int>(experiences.front().action.alpha.size());

  Eigen::MatrixXd x(experiences.size(), d + np * nu);
  Eigen::MatrixXd y(experiences.size(), np * nu);
  Rng order_rng(derive_seed(cfg.seed, "train-ordering"));
  for (std::size_t i = 0; i < experiences.size(); ++i) {
    const auto& e = experiences[i];
    if (e.state.num_objects() != nu)
      throw std::invalid_argument("train_baseline: object count varies across the dataset");
    std::vector<int> order = order_objects(domain, e.state, e.action.targets, policy, order_rng);
    x.row(static_cast<Eigen::Index>(i)).head(d) = e.action.alpha.transpose();
    x.row(static_cast<Eigen::Index>(i)).tail(np * nu) =
        flatten_ordered(e.state, order, np).transpose();
    y.row(static_cast<Eigen::Index>(i)) = flatten_ordered(e.next_state, order, np).transpose();
  }

  BaselineModel model;
  model.policy = policy;
  model.num_objects = nu;
  model.predictor = train_alternating(x, y, {}, cfg);
  return model;
}

double eval_baseline(const Domain& domain, const BaselineModel& model,
                     const std::vector<Experience>& experiences,
                     const std::vector<ObjectSet>& scopes, EvalScope scope, uint64_t eval_seed) {
  if (experiences.empty()) throw std::invalid_argument("eval_baseline: empty experience set");
  int np = domain.num_properties();
  Rng order_rng(derive_seed(eval_seed, "eval-ordering"));
  double total = 0.0;
  for (std::size_t i = 0; i < experiences.size(); ++i) {
    const auto& e = experiences[i];
    if (e.state.num_objects() != model.num_objects)
      throw std::invalid_argument("eval_baseline: object count does not match model");
    std::vector<int> order = order_objects(domain, e.state, e.action.targets, model.policy,
                                           order_rng);
    int d = static_cast<int>(e.action.alpha.size());
    Eigen::VectorXd x(d + np * model.num_objects);
    x.head(d) = e.action.alpha;
    x.tail(np * model.num_objects) = flatten_ordered(e.state, order, np);
    auto [mu, var] = model.predictor.forward(x);

    std::vector<bool> in_scope(static_cast<std::size_t>(model.num_objects), scope == EvalScope::AllObjects);
    if (scope == EvalScope::StackOnly)
      for (int o : scopes[i]) in_scope[static_cast<std::size_t>(o)] = true;
    for (std::size_t slot = 0; slot < order.size(); ++slot) {
      int o = order[slot];
      if (!in_scope[static_cast<std::size_t>(o)]) continue;
      for (int p = 0; p < np; ++p) {
        int dim = static_cast<int>(slot) * np + p;
        total += gaussian_log_density(e.next_state(o, p), mu(dim), var(dim));
      }
    }
  }
  return total / static_cast<double>(experiences.size());
}

double eval_spare(const SpareModel& model, const std::vector<Experience>& experiences,
                  const std::vector<ObjectSet>& scopes, EvalScope scope) {
  if (experiences.empty()) throw std::invalid_argument("eval_spare: empty experience set");
  double total = 0.0;
  for (std::size_t i = 0; i < experiences.size(); ++i) {
    const auto& e = experiences[i];
    StateDistribution dist = predict(model, e.state, e.action);
    if (scope == EvalScope::AllObjects) {
      total += dist.log_density(e.next_state);
    } else {
      total += dist.log_density_scoped(e.next_state, scopes[i]);
    }
  }
  return total / static_cast<double>(experiences.size());
}

nlohmann::ordered_json baseline_to_json(const Domain& domain, const BaselineModel& model) {
  nlohmann::ordered_json j;
  j["format"] = "spare-model";
  j["version"] = 1;
  j["kind"] = "baseline";
  j["properties"] = domain.properties;
  j["ordering"] = ordering_to_string(model.policy);
  j["num_objects"] = model.num_objects;
  j["predictor"] = predictor_to_json(model.predictor);
  return j;
}

BaselineModel baseline_from_json(const Domain& domain, const nlohmann::ordered_json& j) {
  if (j.at("kind").get<std::string>() != "baseline")
    throw std::invalid_argument("not a baseline model file");
  if (j.at("properties").get<std::vector<std::string>>() != domain.properties)
    throw std::invalid_argument("model properties do not match domain");
  BaselineModel model;
  model.policy = ordering_from_string(j.at("ordering").get<std::string>());
  model.num_objects = j.at("num_objects").get<int>();
  model.predictor = predictor_from_json(j.at("predictor"));
  return model;
}

}  // namespace spare
