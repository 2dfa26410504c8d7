#include "spare/rules.hpp"

#include "spare/parallel.hpp"
#include "spare/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace spare {

double gaussian_log_density(double v, double mean, double var) {
  double r = v - mean;
  return -0.5 * (std::log(2.0 * std::numbers::pi * var) + r * r / var);
}

double GaussianMixture1D::total_weight() const {
  double s = 0.0;
  for (double w : weights) s += w;
  return s;
}

double GaussianMixture1D::log_density(double v) const {
  if (means.empty()) throw std::logic_error("empty mixture cell");
  double best = -std::numeric_limits<double>::infinity();
  std::vector<double> terms(means.size());
  for (std::size_t i = 0; i < means.size(); ++i) {
    terms[i] = std::log(weights[i]) + gaussian_log_density(v, means[i], vars[i]);
    best = std::max(best, terms[i]);
  }
  if (!std::isfinite(best)) return best;
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - best);
  return best + std::log(acc);
}

double StateDistribution::log_density(const State& next) const {
  double acc = 0.0;
  for (int o = 0; o < num_objects; ++o)
    for (int p = 0; p < num_properties; ++p) acc += cell(o, p).log_density(next(o, p));
  return acc;
}

double StateDistribution::log_density_scoped(const State& next, const ObjectSet& objects) const {
  double acc = 0.0;
  for (int o : objects)
    for (int p = 0; p < num_properties; ++p) acc += cell(o, p).log_density(next(o, p));
  return acc;
}

namespace {

// Adds one rule's per-cell prediction into `dist` with total weight
// `rule_weight` per cell: output slots containing the object mix uniformly;
// objects in no output slot get a default-variance Gaussian at the current
// value.
void accumulate_rule_prediction(const Domain& domain, const TransitionRule& rule,
                                const State& state, const ActionInstance& action,
                                double rule_weight, StateDistribution& dist) {
  auto gamma_slots = build_object_lists(domain, rule.sig.gamma, action.targets, state);
  auto delta_slots = build_object_lists(domain, rule.sig.delta, action.targets, state);
  if (!gamma_slots || !delta_slots)
    throw std::logic_error("accumulate_rule_prediction: rule does not apply");

  Eigen::VectorXd x = extract_input(domain, rule.sig.gamma, *gamma_slots, state, action);
  auto [mu, var] = rule.predictor.forward(x);

  int np = domain.num_properties();
  std::vector<std::vector<int>> slots_of(static_cast<std::size_t>(state.num_objects()));
  for (std::size_t j = 0; j < delta_slots->size(); ++j)
    for (int o : (*delta_slots)[j]) slots_of[static_cast<std::size_t>(o)].push_back(static_cast<int>(j));

  for (int o = 0; o < state.num_objects(); ++o) {
    const auto& slots = slots_of[static_cast<std::size_t>(o)];
    for (int p = 0; p < np; ++p) {
      auto& cell = dist.cell(o, p);
      if (slots.empty()) {
        cell.add(state(o, p), rule.v_default(p), rule_weight);
      } else {
        double w = rule_weight / static_cast<double>(slots.size());
        for (int j : slots) cell.add(mu(j * np + p), var(j * np + p), w);
      }
    }
  }
}

}  // namespace

StateDistribution predict(const SpareModel& model, const State& state,
                          const ActionInstance& action) {
  const Domain& domain = *model.domain;
  StateDistribution dist;
  dist.num_objects = state.num_objects();
  dist.num_properties = domain.num_properties();
  dist.cells.resize(static_cast<std::size_t>(dist.num_objects * dist.num_properties));

  int best = 0;
  std::vector<int> scores(model.rules.size());
  for (std::size_t k = 0; k < model.rules.size(); ++k) {
    scores[k] = rule_score(domain, model.rules[k].sig, state, action);
    best = std::max(best, scores[k]);
  }

  if (best == 0) {
    for (int o = 0; o < dist.num_objects; ++o)
      for (int p = 0; p < dist.num_properties; ++p)
        dist.cell(o, p).add(state(o, p), model.sigma_default(p), 1.0);
    return dist;
  }

  int count = 0;
  for (int s : scores) count += (s == best);
  double rule_weight = 1.0 / static_cast<double>(count);
  for (std::size_t k = 0; k < model.rules.size(); ++k)
    if (scores[k] == best)
      accumulate_rule_prediction(domain, model.rules[k], state, action, rule_weight, dist);
  return dist;
}

double per_sample_loss(const SpareModel& model, const Experience& e) {
  return -predict(model, e.state, e.action).log_density(e.next_state);
}

double spare_loss(const SpareModel& model, const std::vector<Experience>& experiences,
                  const Eigen::VectorXd& weights) {
  if (experiences.empty()) throw std::invalid_argument("spare_loss: empty experience set");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < experiences.size(); ++i) {
    double w = weights.size() ? weights(static_cast<Eigen::Index>(i)) : 1.0;
    num += w * per_sample_loss(model, experiences[i]);
    den += w;
  }
  if (den <= 0.0) throw std::invalid_argument("spare_loss: weights sum to zero");
  return num / den;
}

Eigen::VectorXd fit_sigma_default(const std::vector<Experience>& experiences,
                                  const Eigen::VectorXd& weights, double floor) {
  if (experiences.empty()) throw std::invalid_argument("fit_sigma_default: empty experience set");
  int np = experiences.front().instance->domain->num_properties();
  Eigen::VectorXd num = Eigen::VectorXd::Zero(np);
  double den = 0.0;
  for (std::size_t i = 0; i < experiences.size(); ++i) {
    const auto& e = experiences[i];
    double w = weights.size() ? weights(static_cast<Eigen::Index>(i)) : 1.0;
    for (int o = 0; o < e.state.num_objects(); ++o) {
      for (int p = 0; p < np; ++p) {
        double d = e.next_state(o, p) - e.state(o, p);
        num(p) += w * d * d;
      }
      den += w;
    }
  }
  if (den <= 0.0) return Eigen::VectorXd::Constant(np, floor);
  return (num / den).cwiseMax(floor);
}

LearnDistResult learn_dist(const Domain& domain, const std::vector<Experience>& experiences,
                           const Eigen::VectorXd& weights, int template_id,
                           const ReferenceList& gamma, const ReferenceList& delta,
                           const TrainConfig& cfg) {
  const auto& tmpl = domain.action_templates.at(static_cast<std::size_t>(template_id));
  validate_reference_list(gamma, tmpl.arity);
  validate_reference_list(delta, tmpl.arity);

  struct Extracted {
    Eigen::VectorXd x, y;
    double weight;
    const Experience* e;
    std::vector<ObjectSet> delta_slots;
  };
  std::vector<Extracted> rows;
  for (std::size_t i = 0; i < experiences.size(); ++i) {
    const auto& e = experiences[i];
    if (e.action.template_id != template_id) continue;
    auto gamma_slots = build_object_lists(domain, gamma, e.action.targets, e.state);
    if (!gamma_slots) continue;
    auto delta_slots = build_object_lists(domain, delta, e.action.targets, e.state);
    if (!delta_slots) continue;
    Extracted row;
    row.x = extract_input(domain, gamma, *gamma_slots, e.state, e.action);
    row.y = extract_output(domain, *delta_slots, e.next_state);
    row.weight = weights.size() ? weights(static_cast<Eigen::Index>(i)) : 1.0;
    row.e = &e;
    row.delta_slots = std::move(*delta_slots);
    rows.push_back(std::move(row));
  }

  LearnDistResult result;
  result.num_applicable = static_cast<int>(rows.size());
  if (rows.size() < 2) return result;  // nothing to fit

  Eigen::MatrixXd x(rows.size(), rows.front().x.size());
  Eigen::MatrixXd y(rows.size(), rows.front().y.size());
  Eigen::VectorXd w(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    x.row(static_cast<Eigen::Index>(i)) = rows[i].x.transpose();
    y.row(static_cast<Eigen::Index>(i)) = rows[i].y.transpose();
    w(static_cast<Eigen::Index>(i)) = rows[i].weight;
  }
  if (w.sum() <= 0.0) return result;

  result.applicable = true;
  result.rule.sig.template_id = template_id;
  result.rule.sig.gamma = gamma;
  result.rule.sig.gamma.role = ReferenceRole::Input;
  result.rule.sig.delta = delta;
  result.rule.sig.delta.role = ReferenceRole::Output;
  result.rule.predictor = train_alternating(x, y, w, cfg);

  // Default variances from the deviations of objects the rule leaves
  // unpredicted, one pool per property.
  int np = domain.num_properties();
  std::vector<std::vector<double>> devs(static_cast<std::size_t>(np));
  std::vector<std::vector<double>> dev_w(static_cast<std::size_t>(np));
  for (const auto& row : rows) {
    std::vector<bool> predicted(static_cast<std::size_t>(row.e->state.num_objects()), false);
    for (const auto& slot : row.delta_slots)
      for (int o : slot) predicted[static_cast<std::size_t>(o)] = true;
    for (int o = 0; o < row.e->state.num_objects(); ++o) {
      if (predicted[static_cast<std::size_t>(o)]) continue;
      for (int p = 0; p < np; ++p) {
        devs[static_cast<std::size_t>(p)].push_back(row.e->next_state(o, p) - row.e->state(o, p));
        dev_w[static_cast<std::size_t>(p)].push_back(row.weight);
      }
    }
  }
  result.rule.v_default = fit_default_variance(devs, dev_w, cfg.variance_floor);
  return result;
}

SpareModel single_rule_model(const Domain& domain, TransitionRule rule,
                             Eigen::VectorXd sigma_default) {
  SpareModel model;
  model.domain = &domain;
  model.rules.push_back(std::move(rule));
  model.sigma_default = std::move(sigma_default);
  return model;
}

namespace {

bool step_less(const ReferenceStep& a, const ReferenceStep& b) {
  if (a.function_id != b.function_id) return a.function_id < b.function_id;
  return a.arg_slots < b.arg_slots;
}

std::vector<Experience> subset(const std::vector<Experience>& all, const std::vector<int>& idx) {
  std::vector<Experience> out;
  out.reserve(idx.size());
  for (int i : idx) out.push_back(all[static_cast<std::size_t>(i)]);
  return out;
}

Eigen::VectorXd subset_weights(const Eigen::VectorXd& w, const std::vector<int>& idx) {
  if (!w.size()) return {};
  Eigen::VectorXd out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out(static_cast<Eigen::Index>(i)) = w(idx[i]);
  return out;
}

// Per-sample validation losses; samples the rule does not apply to fall back
// to the supplied per-sample losses of the empty-list rule.
std::vector<double> val_losses_with_fallback(const SpareModel& model,
                                             const std::vector<Experience>& val,
                                             const std::vector<double>& fallback) {
  std::vector<double> out(val.size());
  for (std::size_t i = 0; i < val.size(); ++i) {
    const auto& e = val[i];
    int score = rule_score(*model.domain, model.rules.front().sig, e.state, e.action);
    out[i] = score > 0 ? per_sample_loss(model, e) : fallback[i];
  }
  return out;
}

double weighted_mean(const std::vector<double>& values, const Eigen::VectorXd& w) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    double wi = w.size() ? w(static_cast<Eigen::Index>(i)) : 1.0;
    num += wi * values[i];
    den += wi;
  }
  return num / den;
}

}  // namespace

GreedyResult greedy_select(const Domain& domain, const std::vector<Experience>& experiences,
                           const Eigen::VectorXd& weights, int template_id,
                           const GreedyConfig& cfg) {
  const auto& tmpl = domain.action_templates.at(static_cast<std::size_t>(template_id));
  const int n = static_cast<int>(experiences.size());
  if (n < 4) throw std::invalid_argument("greedy_select: too few experiences");

  GreedyResult result;

  // One split for the whole run.
  Rng split_rng(derive_seed(cfg.seed, "split"));
  std::vector<int> perm = split_rng.permutation(n);
  int val_count = std::max(1, static_cast<int>(std::lround(cfg.val_fraction * n)));
  result.val_indices.assign(perm.begin(), perm.begin() + val_count);
  result.train_indices.assign(perm.begin() + val_count, perm.end());
  std::vector<Experience> train = subset(experiences, result.train_indices);
  std::vector<Experience> val = subset(experiences, result.val_indices);
  Eigen::VectorXd train_w = subset_weights(weights, result.train_indices);
  Eigen::VectorXd val_w = subset_weights(weights, result.val_indices);

  result.sigma_default = fit_sigma_default(train, train_w, cfg.train.variance_floor);

  ReferenceList empty_gamma;
  empty_gamma.role = ReferenceRole::Input;
  ReferenceList empty_delta;
  empty_delta.role = ReferenceRole::Output;

  TrainConfig base_cfg = cfg.train;
  base_cfg.seed = derive_seed(cfg.seed, "level", 0);
  LearnDistResult base =
      learn_dist(domain, train, train_w, template_id, empty_gamma, empty_delta, base_cfg);
  if (!base.applicable)
    throw std::runtime_error("greedy_select: empty-list rule applies to no training sample");

  SpareModel base_model = single_rule_model(domain, base.rule, result.sigma_default);
  std::vector<double> fallback(val.size());
  for (std::size_t i = 0; i < val.size(); ++i) fallback[i] = per_sample_loss(base_model, val[i]);
  double l0 = weighted_mean(fallback, val_w);

  result.gamma.role = ReferenceRole::Input;
  result.rule = base_model.rules.front();
  result.accepted_losses.push_back(l0);
  result.explored.push_back({empty_gamma, l0});
  result.levels.push_back({empty_gamma, l0, true, base_model.rules.front().v_default});

  ReferenceList chain;  // the currently extended list (equals accepted prefix until a rejection)
  chain.role = ReferenceRole::Input;
  double chain_loss = l0;
  bool accepting = true;

  for (int level = 1; level <= cfg.max_refs; ++level) {
    // Candidate universe: every reference function applied to every valid
    // argument-slot tuple; steps already in the list are skipped (re-adding
    // one reproduces the same rule).
    int slots = tmpl.arity + chain.size();
    std::vector<ReferenceStep> candidates;
    for (std::size_t f = 0; f < domain.references.size(); ++f) {
      const auto& fn = domain.references[f];
      std::vector<int> tuple(static_cast<std::size_t>(fn.arity), 0);
      while (true) {
        ReferenceStep step{static_cast<int>(f), tuple};
        bool duplicate = false;
        for (const auto& s : chain.steps) duplicate = duplicate || s == step;
        if (!duplicate) candidates.push_back(step);
        int j = fn.arity - 1;
        while (j >= 0) {
          if (++tuple[static_cast<std::size_t>(j)] < slots) break;
          tuple[static_cast<std::size_t>(j)] = 0;
          --j;
        }
        if (j < 0) break;
      }
    }
    if (candidates.empty()) break;

    uint64_t level_seed = derive_seed(cfg.seed, "level", static_cast<uint64_t>(level));
    std::vector<double> losses(candidates.size());
    std::vector<LearnDistResult> trained(candidates.size());
    parallel_for(candidates.size(), [&](std::size_t c) {
      ReferenceList gamma = chain;
      gamma.steps.push_back(candidates[c]);
      ReferenceList delta = gamma;  // Delta mirrors Gamma
      delta.role = ReferenceRole::Output;
      TrainConfig cand_cfg = cfg.train;
      cand_cfg.seed = level_seed;
      LearnDistResult r = learn_dist(domain, train, train_w, template_id, gamma, delta, cand_cfg);
      if (!r.applicable) {
        losses[c] = weighted_mean(fallback, val_w);
        return;
      }
      SpareModel m = single_rule_model(domain, r.rule, result.sigma_default);
      losses[c] = weighted_mean(val_losses_with_fallback(m, val, fallback), val_w);
      trained[c] = std::move(r);
    });

    std::size_t best = 0;
    for (std::size_t c = 1; c < candidates.size(); ++c) {
      if (losses[c] < losses[best] ||
          (losses[c] == losses[best] && step_less(candidates[c], candidates[best])))
        best = c;
    }
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      ReferenceList gamma = chain;
      gamma.steps.push_back(candidates[c]);
      result.explored.push_back({gamma, losses[c]});
    }

    bool improved = losses[best] < chain_loss;
    GreedyLevel info;
    info.gamma = chain;
    info.gamma.steps.push_back(candidates[best]);
    info.val_loss = losses[best];
    info.accepted = accepting && improved;
    if (trained[best].applicable) info.v_default = trained[best].rule.v_default;
    result.levels.push_back(info);

    if (accepting && improved) {
      chain = info.gamma;
      chain_loss = losses[best];
      result.gamma = chain;
      result.rule = trained[best].rule;
      result.accepted_losses.push_back(losses[best]);
    } else if (accepting && !cfg.force_all_levels) {
      break;
    } else {
      accepting = false;
      if (!trained[best].applicable) break;
      chain = info.gamma;  // keep extending the best chain for ablation data
      chain_loss = losses[best];
    }
  }

  result.rule.sig.delta = result.gamma;
  result.rule.sig.delta.role = ReferenceRole::Output;
  return result;
}

nlohmann::ordered_json rule_to_json(const Domain& domain, const TransitionRule& rule) {
  nlohmann::ordered_json j;
  j["template"] = domain.action_templates.at(static_cast<std::size_t>(rule.sig.template_id)).name;
  j["gamma"] = reference_list_signature(domain, rule.sig.gamma);
  j["delta"] = reference_list_signature(domain, rule.sig.delta);
  j["v_default"] =
      std::vector<double>(rule.v_default.data(), rule.v_default.data() + rule.v_default.size());
  j["predictor"] = predictor_to_json(rule.predictor);
  return j;
}

TransitionRule rule_from_json(const Domain& domain, const nlohmann::ordered_json& j) {
  TransitionRule rule;
  rule.sig.template_id = domain.template_index(j.at("template").get<std::string>());
  rule.sig.gamma =
      parse_reference_list(domain, j.at("gamma").get<std::string>(), ReferenceRole::Input);
  rule.sig.delta =
      parse_reference_list(domain, j.at("delta").get<std::string>(), ReferenceRole::Output);
  auto v = j.at("v_default").get<std::vector<double>>();
  rule.v_default = Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
  rule.predictor = predictor_from_json(j.at("predictor"));
  return rule;
}

nlohmann::ordered_json model_to_json(const SpareModel& model) {
  nlohmann::ordered_json j;
  j["format"] = "spare-model";
  j["version"] = 1;
  j["kind"] = "single";
  j["properties"] = model.domain->properties;
  j["sigma_default"] = std::vector<double>(
      model.sigma_default.data(), model.sigma_default.data() + model.sigma_default.size());
  nlohmann::ordered_json rules = nlohmann::ordered_json::array();
  for (const auto& r : model.rules) rules.push_back(rule_to_json(*model.domain, r));
  j["rules"] = std::move(rules);
  return j;
}

SpareModel model_from_json(const Domain& domain, const nlohmann::ordered_json& j) {
  if (j.at("format").get<std::string>() != "spare-model")
    throw std::invalid_argument("not a model file");
  SpareModel model;
  model.domain = &domain;
  if (j.at("properties").get<std::vector<std::string>>() != domain.properties)
    throw std::invalid_argument("model properties do not match domain");
  auto sd = j.at("sigma_default").get<std::vector<double>>();
  model.sigma_default = Eigen::Map<Eigen::VectorXd>(sd.data(), static_cast<Eigen::Index>(sd.size()));
  for (const auto& r : j.at("rules")) model.rules.push_back(rule_from_json(domain, r));
  return model;
}

void save_model_json(const nlohmann::ordered_json& j, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open model file for writing: " + path);
  out << j.dump(2) << '\n';
}

nlohmann::ordered_json load_model_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open model file: " + path);
  return nlohmann::ordered_json::parse(in);
}

}  // namespace spare
