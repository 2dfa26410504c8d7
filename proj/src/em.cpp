#include "spare/em.hpp"

#include "spare/blocks.hpp"
#include "spare/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>

namespace spare {

double ShellDistribution::explored_mass() const {
  double s = 0.0;
  for (const auto& [shell, w] : explored) s += w;
  return s;
}

void ShellDistribution::sort_by_weight() {
  std::stable_sort(explored.begin(), explored.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
}

double count_possible_shells(const Domain& domain, int template_arity, int max_refs) {
  double total = 1.0;  // the empty list
  double level_product = 1.0;
  for (int t = 1; t <= max_refs; ++t) {
    double choices = 0.0;
    int slots = template_arity + t - 1;
    for (const auto& fn : domain.references) choices += std::pow(slots, fn.arity);
    level_product *= choices;
    total += level_product;
  }
  return total;
}

ShellDistribution init_shell_distribution(const Domain& domain,
                                          const std::vector<ShellEval>& explored, double eps,
                                          double unexplored_count) {
  if (explored.empty()) throw std::invalid_argument("init_shell_distribution: no explored shells");
  // Dedupe by signature, keeping the best loss.
  std::map<std::string, std::pair<ReferenceList, double>> best;
  for (const auto& ev : explored) {
    std::string sig = reference_list_signature(domain, ev.gamma);
    auto it = best.find(sig);
    if (it == best.end() || ev.val_loss < it->second.second) best[sig] = {ev.gamma, ev.val_loss};
  }
  double min_loss = std::numeric_limits<double>::infinity();
  for (const auto& [sig, entry] : best) min_loss = std::min(min_loss, entry.second);

  double remaining = std::max(unexplored_count - static_cast<double>(best.size()), 0.0);
  double explored_mass = remaining > 0.0 ? 1.0 - eps : 1.0;

  double norm = 0.0;
  for (const auto& [sig, entry] : best) norm += std::exp(-(entry.second - min_loss));

  ShellDistribution dist;
  for (auto& [sig, entry] : best) {
    Shell shell;
    shell.gamma = entry.first;
    shell.signature = sig;
    double w = explored_mass * std::exp(-(entry.second - min_loss)) / norm;
    dist.explored.emplace_back(std::move(shell), w);
  }
  dist.unexplored_mass = remaining > 0.0 ? eps : 0.0;
  dist.unexplored_count = remaining;
  dist.sort_by_weight();
  return dist;
}

KmeansResult kmeans(const Eigen::MatrixXd& points, int k, int iters, Rng& rng) {
  const int n = static_cast<int>(points.rows());
  if (k <= 0) throw std::invalid_argument("kmeans: k must be positive");
  if (n < k) throw std::invalid_argument("kmeans: fewer points than clusters");

  KmeansResult result;
  result.centers.resize(k, points.cols());

  // k-means++ seeding.
  std::vector<double> min_sq(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  int first = static_cast<int>(rng.integer(static_cast<uint64_t>(n)));
  result.centers.row(0) = points.row(first);
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      double d = (points.row(i) - result.centers.row(c - 1)).squaredNorm();
      min_sq[static_cast<std::size_t>(i)] = std::min(min_sq[static_cast<std::size_t>(i)], d);
      total += min_sq[static_cast<std::size_t>(i)];
    }
    double u = rng.uniform() * total;
    int chosen = n - 1;
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      acc += min_sq[static_cast<std::size_t>(i)];
      if (u < acc) {
        chosen = i;
        break;
      }
    }
    result.centers.row(c) = points.row(chosen);
  }

  result.assignments.assign(static_cast<std::size_t>(n), -1);
  for (int it = 0; it < iters; ++it) {
    // Assign, fixing any empty cluster by stealing the farthest point.
    std::vector<int> assign(static_cast<std::size_t>(n));
    std::vector<double> dist(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      int bestc = 0;
      double bestd = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        double d = (points.row(i) - result.centers.row(c)).squaredNorm();
        if (d < bestd) {
          bestd = d;
          bestc = c;
        }
      }
      assign[static_cast<std::size_t>(i)] = bestc;
      dist[static_cast<std::size_t>(i)] = bestd;
    }
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (int a : assign) ++counts[static_cast<std::size_t>(a)];
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) continue;
      int far = static_cast<int>(std::distance(
          dist.begin(), std::max_element(dist.begin(), dist.end())));
      --counts[static_cast<std::size_t>(assign[static_cast<std::size_t>(far)])];
      assign[static_cast<std::size_t>(far)] = c;
      counts[static_cast<std::size_t>(c)] = 1;
      result.centers.row(c) = points.row(far);
      dist[static_cast<std::size_t>(far)] = 0.0;
    }

    double inertia = 0.0;
    for (int i = 0; i < n; ++i)
      inertia += (points.row(i) - result.centers.row(assign[static_cast<std::size_t>(i)])).squaredNorm();
    result.inertia.push_back(inertia);

    bool stable = assign == result.assignments;
    result.assignments = assign;
    if (stable) break;

    // Update.
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, points.cols());
    for (int i = 0; i < n; ++i) sums.row(assign[static_cast<std::size_t>(i)]) += points.row(i);
    for (int c = 0; c < k; ++c)
      if (counts[static_cast<std::size_t>(c)] > 0)
        result.centers.row(c) = sums.row(c) / counts[static_cast<std::size_t>(c)];
  }
  return result;
}

Eigen::MatrixXd build_membership_features(const SpareModel& seed_model,
                                          const std::vector<Experience>& experiences,
                                          double loglik_scale) {
  const Domain& domain = *seed_model.domain;
  const TransitionRule& rule = seed_model.rules.front();
  const auto& tmpl = domain.action_templates.at(static_cast<std::size_t>(rule.sig.template_id));
  int np = domain.num_properties();
  int gamma_slots = tmpl.arity + rule.sig.gamma.size();
  int delta_slots = tmpl.arity + rule.sig.delta.size();
  int x_dim = tmpl.param_dim + np * gamma_slots;
  int y_dim = np * delta_slots;
  int dim = x_dim + y_dim + 1;
  const double nan = std::numeric_limits<double>::quiet_NaN();

  Eigen::MatrixXd f = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(experiences.size()), dim, nan);
  for (std::size_t i = 0; i < experiences.size(); ++i) {
    const auto& e = experiences[i];
    // Maximal applicable prefix: designate slots until a reference fails.
    std::vector<ObjectSet> slots;
    for (int t : e.action.targets) slots.push_back({t});
    for (const auto& step : rule.sig.gamma.steps) {
      std::vector<ObjectSet> args;
      for (int s : step.arg_slots) args.push_back(slots.at(static_cast<std::size_t>(s)));
      ObjectSet r = apply_reference(domain, step.function_id, e.state, args);
      if (r.empty()) break;
      slots.push_back(std::move(r));
    }

    int cursor = 0;
    for (int a = 0; a < e.action.alpha.size(); ++a) f(static_cast<Eigen::Index>(i), cursor++) = e.action.alpha(a);
    for (std::size_t s = 0; s < slots.size(); ++s) {
      Aggregator agg = Aggregator::Mean;
      if (s >= static_cast<std::size_t>(tmpl.arity))
        agg = domain.references[static_cast<std::size_t>(
                    rule.sig.gamma.steps[s - static_cast<std::size_t>(tmpl.arity)].function_id)]
                  .aggregator;
      for (int p = 0; p < np; ++p) {
        std::vector<double> vals;
        for (int o : slots[s]) vals.push_back(e.state(o, p));
        f(static_cast<Eigen::Index>(i), cursor + static_cast<int>(s) * np + p) =
            slots[s].size() == 1 && agg != Aggregator::Cardinality ? vals.front()
                                                                   : aggregate(agg, vals);
      }
    }
    // y side mirrors the same prefix (delta = gamma for seed rules) with mean
    // aggregation from the next state.
    int y_base = x_dim;
    std::size_t usable = std::min(slots.size(), static_cast<std::size_t>(delta_slots));
    for (std::size_t s = 0; s < usable; ++s) {
      for (int p = 0; p < np; ++p) {
        std::vector<double> vals;
        for (int o : slots[s]) vals.push_back(e.next_state(o, p));
        f(static_cast<Eigen::Index>(i), y_base + static_cast<int>(s) * np + p) =
            aggregate(Aggregator::Mean, vals);
      }
    }
    f(static_cast<Eigen::Index>(i), dim - 1) = per_sample_loss(seed_model, e);
  }

  // Column z-score over the present entries; missing entries sit at the mean.
  for (int c = 0; c < dim; ++c) {
    double sum = 0.0, count = 0.0;
    for (Eigen::Index r = 0; r < f.rows(); ++r)
      if (std::isfinite(f(r, c))) {
        sum += f(r, c);
        count += 1.0;
      }
    double mean = count > 0 ? sum / count : 0.0;
    double var = 0.0;
    for (Eigen::Index r = 0; r < f.rows(); ++r)
      if (std::isfinite(f(r, c))) var += (f(r, c) - mean) * (f(r, c) - mean);
    double std = count > 0 ? std::sqrt(var / count) : 1.0;
    if (std < 1e-12) std = 1.0;
    for (Eigen::Index r = 0; r < f.rows(); ++r)
      f(r, c) = std::isfinite(f(r, c)) ? (f(r, c) - mean) / std : 0.0;
  }
  f.col(dim - 1) *= loglik_scale;
  return f;
}

namespace {

MembershipMatrix membership_from_distances(const Eigen::MatrixXd& points,
                                           const Eigen::MatrixXd& centers,
                                           const std::vector<int>& assignments,
                                           MembershipInit mode) {
  const int n = static_cast<int>(points.rows());
  const int k = static_cast<int>(centers.rows());
  MembershipMatrix m;
  m.z = Eigen::MatrixXd::Zero(n, k);
  for (int i = 0; i < n; ++i) {
    if (mode == MembershipInit::Discrete) {
      m.z(i, assignments[static_cast<std::size_t>(i)]) = 1.0;
      continue;
    }
    Eigen::VectorXd d2(k);
    int zero_at = -1;
    for (int c = 0; c < k; ++c) {
      d2(c) = (points.row(i) - centers.row(c)).squaredNorm();
      if (d2(c) == 0.0 && zero_at < 0) zero_at = c;
    }
    if (zero_at >= 0) {
      m.z(i, zero_at) = 1.0;
      continue;
    }
    Eigen::VectorXd w(k);
    for (int c = 0; c < k; ++c)
      w(c) = mode == MembershipInit::InvDist ? 1.0 / std::sqrt(d2(c)) : 1.0 / d2(c);
    m.z.row(i) = (w / w.sum()).transpose();
  }
  return m;
}

}  // namespace

MembershipMatrix init_membership(const std::vector<Experience>& experiences,
                                 const SpareModel& seed_model, int k, MembershipInit mode,
                                 double loglik_scale, int kmeans_iters, uint64_t seed) {
  Eigen::MatrixXd features = build_membership_features(seed_model, experiences, loglik_scale);
  Rng rng(derive_seed(seed, "kmeans"));
  KmeansResult km = kmeans(features, k, kmeans_iters, rng);
  return membership_from_distances(features, km.centers, km.assignments, mode);
}

namespace {

// Single-rule models for a mixture rule's usable shells with their
// renormalized log-weights, built once so per-sample evaluation does not copy
// networks.
struct MixtureEvaluator {
  std::vector<std::pair<double, SpareModel>> components;  // (log weight, model)
  SpareModel fallback;

  double sample_loss(const Experience& e) const {
    std::vector<double> terms;
    terms.reserve(components.size());
    for (const auto& [log_w, model] : components) {
      if (rule_score(*model.domain, model.rules.front().sig, e.state, e.action) == 0) continue;
      terms.push_back(log_w - per_sample_loss(model, e));
    }
    if (terms.empty()) return per_sample_loss(fallback, e);
    double best = *std::max_element(terms.begin(), terms.end());
    double acc = 0.0;
    for (double t : terms) acc += std::exp(t - best);
    return -(best + std::log(acc));
  }
};

MixtureEvaluator make_evaluator(const Domain& domain, const MixtureRule& rule,
                                const Eigen::VectorXd& sigma_default) {
  MixtureEvaluator eval;
  eval.fallback.domain = &domain;
  eval.fallback.sigma_default = sigma_default;
  double wsum = 0.0;
  std::vector<std::pair<double, const PhiEntry*>> usable;
  for (const auto& entry : rule.phi) {
    if (!entry.trained) continue;
    for (const auto& [s, w] : rule.pi.explored)
      if (s.signature == entry.shell.signature && w > 0.0) {
        usable.emplace_back(w, &entry);
        wsum += w;
        break;
      }
  }
  for (const auto& [w, entry] : usable)
    eval.components.emplace_back(std::log(w / wsum),
                                 single_rule_model(domain, entry->rule, sigma_default));
  return eval;
}

}  // namespace

double mixture_rule_sample_loss(const Domain& domain, const MixtureRule& rule,
                                const Experience& e, const Eigen::VectorXd& sigma_default) {
  return make_evaluator(domain, rule, sigma_default).sample_loss(e);
}

MixtureRule m_step(const Domain& domain, MixtureRule rule,
                   const std::vector<Experience>& experiences, const Eigen::VectorXd& z_column,
                   const Eigen::VectorXd& sigma_default, const TrainConfig& train_cfg,
                   uint64_t seed) {
  rule.pi.sort_by_weight();
  const int kappa = static_cast<int>(std::min<std::size_t>(
      std::max<std::size_t>(rule.phi.size(), 1), rule.pi.explored.size()));

  // Trains the current top-kappa shells; `cache` carries predictors already
  // trained on this M-step's weights.
  auto train_top = [&](const std::vector<PhiEntry>& cache, uint64_t stage_seed) {
    std::vector<PhiEntry> next;
    for (int k = 0; k < kappa; ++k) {
      const Shell& shell = rule.pi.explored[static_cast<std::size_t>(k)].first;
      auto it = std::find_if(cache.begin(), cache.end(), [&](const PhiEntry& p) {
        return p.trained && p.shell.signature == shell.signature;
      });
      if (it != cache.end()) {
        next.push_back(*it);
        continue;
      }
      PhiEntry entry;
      entry.shell = shell;
      ReferenceList delta = shell.gamma;
      delta.role = ReferenceRole::Output;
      TrainConfig cfg = train_cfg;
      cfg.seed = derive_seed(stage_seed, shell.signature);
      LearnDistResult r =
          learn_dist(domain, experiences, z_column, rule.template_id, shell.gamma, delta, cfg);
      if (r.applicable) {
        entry.rule = r.rule;
        entry.trained = true;
      }
      next.push_back(std::move(entry));
    }
    return next;
  };

  rule.phi = train_top({}, derive_seed(seed, "train-a"));

  // Votes: each sample backs the shell whose predictor explains it best;
  // inapplicable shells count as infinitely bad.
  std::vector<SpareModel> shell_models(rule.phi.size());
  for (std::size_t k = 0; k < rule.phi.size(); ++k)
    if (rule.phi[k].trained)
      shell_models[k] = single_rule_model(domain, rule.phi[k].rule, sigma_default);
  std::vector<double> votes(rule.phi.size(), 0.0);
  for (std::size_t i = 0; i < experiences.size(); ++i) {
    const auto& e = experiences[i];
    int best = -1;
    double best_loss = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < rule.phi.size(); ++k) {
      if (!rule.phi[k].trained) continue;
      if (rule_score(domain, rule.phi[k].rule.sig, e.state, e.action) == 0) continue;
      double loss = per_sample_loss(shell_models[k], e);
      if (loss < best_loss) {
        best_loss = loss;
        best = static_cast<int>(k);
      }
    }
    if (best >= 0) votes[static_cast<std::size_t>(best)] += z_column(static_cast<Eigen::Index>(i));
  }

  double vote_total = std::accumulate(votes.begin(), votes.end(), 0.0);
  if (vote_total > 0.0) {
    // Redistribute the top shells' combined mass by vote share.
    double top_mass = 0.0;
    for (std::size_t k = 0; k < rule.phi.size(); ++k)
      top_mass += rule.pi.explored[k].second;
    for (std::size_t k = 0; k < rule.phi.size(); ++k)
      rule.pi.explored[k].second = top_mass * votes[k] / vote_total;
    rule.pi.sort_by_weight();
  }

  // The reweighting may promote different shells into the top set; retrain so
  // predictions use the shells pi now favours.
  rule.phi = train_top(rule.phi, derive_seed(seed, "train-b"));
  return rule;
}

MembershipMatrix e_step(const Domain& domain, const std::vector<MixtureRule>& rules,
                        const std::vector<Experience>& experiences, const MembershipMatrix& z,
                        const Eigen::VectorXd& sigma_default) {
  const int n = static_cast<int>(experiences.size());
  const int k = static_cast<int>(rules.size());
  if (z.z.rows() != n || z.z.cols() != k) throw std::invalid_argument("e_step: shape mismatch");

  MembershipMatrix out;
  out.z = Eigen::MatrixXd::Zero(n, k);
  int degenerate_rows = 0;
  std::vector<MixtureEvaluator> evaluators;
  evaluators.reserve(rules.size());
  for (const auto& rule : rules) evaluators.push_back(make_evaluator(domain, rule, sigma_default));
  std::vector<Eigen::VectorXd> rows(static_cast<std::size_t>(n));
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
    Eigen::VectorXd logits(k);
    for (int j = 0; j < k; ++j) {
      double prior = z.z(static_cast<Eigen::Index>(i), j);
      if (prior <= 0.0) {
        logits(j) = -std::numeric_limits<double>::infinity();
        continue;
      }
      logits(j) = std::log(prior) - evaluators[static_cast<std::size_t>(j)].sample_loss(experiences[i]);
    }
    rows[i] = logits;
  });
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd& logits = rows[static_cast<std::size_t>(i)];
    double best = logits.maxCoeff();
    if (!std::isfinite(best)) {
      out.z.row(i).setConstant(1.0 / k);
      ++degenerate_rows;
      continue;
    }
    Eigen::VectorXd w = (logits.array() - best).exp();
    out.z.row(i) = (w / w.sum()).transpose();
  }
  if (degenerate_rows > 0)
    std::cerr << "e_step: reset " << degenerate_rows << " all-zero membership rows to uniform\n";
  return out;
}

namespace {

std::vector<int> experience_heights(const std::vector<Experience>& experiences) {
  std::vector<int> h(experiences.size());
  for (std::size_t i = 0; i < experiences.size(); ++i)
    h[i] = static_cast<int>(stack_scope(experiences[i]).size());
  return h;
}

}  // namespace

EmResult run_em(const Domain& domain, const std::vector<Experience>& experiences,
                const EmConfig& cfg) {
  if (cfg.num_rules < 1) throw std::invalid_argument("run_em: need at least one rule");
  const int n = static_cast<int>(experiences.size());
  const int K = cfg.num_rules;
  int template_id = experiences.front().action.template_id;

  EmResult result;

  // Seed rule on the full experience set.
  GreedyConfig seed_cfg;
  seed_cfg.max_refs = cfg.max_refs;
  seed_cfg.val_fraction = cfg.val_fraction;
  seed_cfg.train = cfg.train;
  seed_cfg.seed = derive_seed(cfg.seed, "seed-rule");
  GreedyResult seed = greedy_select(domain, experiences, {}, template_id, seed_cfg);
  result.sigma_default = seed.sigma_default;
  SpareModel seed_model = single_rule_model(domain, seed.rule, seed.sigma_default);

  // Membership initialization.
  std::vector<int> heights = experience_heights(experiences);
  if (cfg.oracle_height_prob > 0.0) {
    std::vector<int> distinct = heights;
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    if (static_cast<int>(distinct.size()) > K)
      throw std::invalid_argument("run_em: more stack heights than rules for oracle init");
    result.z.z = Eigen::MatrixXd::Constant(n, K, K > 1 ? (1.0 - cfg.oracle_height_prob) / (K - 1)
                                                       : 1.0);
    for (int i = 0; i < n; ++i) {
      int rule_idx = static_cast<int>(
          std::find(distinct.begin(), distinct.end(), heights[static_cast<std::size_t>(i)]) -
          distinct.begin());
      if (K > 1) result.z.z(i, rule_idx) = cfg.oracle_height_prob;
    }
  } else {
    result.z = init_membership(experiences, seed_model, K, cfg.init, cfg.loglik_scale,
                               cfg.kmeans_iters, derive_seed(cfg.seed, "init-membership"));
  }

  // Trace bookkeeping: distinct heights and each height's target rule (the
  // rule with the largest initial mean membership among that height's
  // samples).
  result.heights = heights;
  std::sort(result.heights.begin(), result.heights.end());
  result.heights.erase(std::unique(result.heights.begin(), result.heights.end()),
                       result.heights.end());
  for (int h : result.heights) {
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(K);
    for (int i = 0; i < n; ++i)
      if (heights[static_cast<std::size_t>(i)] == h) mean += result.z.z.row(i).transpose();
    int target = 0;
    mean.maxCoeff(&target);
    result.target_rule_of_height.push_back(target);
  }

  auto record_trace = [&](int iteration) {
    for (int j = 0; j < K; ++j) {
      EmShellTraceRow row;
      row.iteration = iteration;
      row.rule = j;
      if (j < static_cast<int>(result.rules.size())) {
        const auto& pi = result.rules[static_cast<std::size_t>(j)].pi;
        int top = std::min<int>(cfg.kappa, static_cast<int>(pi.explored.size()));
        for (int t = 0; t < top; ++t)
          row.top_shells.emplace_back(pi.explored[static_cast<std::size_t>(t)].first.signature,
                                      pi.explored[static_cast<std::size_t>(t)].second);
      }
      result.shell_trace.push_back(std::move(row));
    }
    for (std::size_t hi = 0; hi < result.heights.size(); ++hi) {
      int h = result.heights[hi];
      int target = result.target_rule_of_height[hi];
      double acc = 0.0;
      int count = 0;
      for (int i = 0; i < n; ++i)
        if (heights[static_cast<std::size_t>(i)] == h) {
          acc += result.z.z(i, target);
          ++count;
        }
      EmMembershipTraceRow row;
      row.iteration = iteration;
      row.stack_height = h;
      row.target_rule = target;
      row.mean_membership = count > 0 ? acc / count : 0.0;
      result.membership_trace.push_back(row);
    }
  };

  // Per-rule shell distributions from greedy runs on the weighted samples.
  result.rules.resize(static_cast<std::size_t>(K));
  std::vector<MixtureRule>& rules = result.rules;
  parallel_for(static_cast<std::size_t>(K), [&](std::size_t j) {
    GreedyConfig rule_cfg = seed_cfg;
    rule_cfg.seed = derive_seed(cfg.seed, "rule-shells", j);
    GreedyResult g = greedy_select(domain, experiences, result.z.z.col(static_cast<Eigen::Index>(j)),
                                   template_id, rule_cfg);
    MixtureRule rule;
    rule.template_id = template_id;
    rule.pi = init_shell_distribution(
        domain, g.explored, cfg.epsilon,
        count_possible_shells(domain,
                              domain.action_templates.at(static_cast<std::size_t>(template_id)).arity,
                              cfg.max_refs));
    rule.phi.resize(static_cast<std::size_t>(
        std::min<int>(cfg.kappa, static_cast<int>(rule.pi.explored.size()))));
    rules[j] = std::move(rule);
  });
  record_trace(0);

  for (int iter = 1; iter <= cfg.iterations; ++iter) {
    uint64_t iter_seed = derive_seed(cfg.seed, "mstep", static_cast<uint64_t>(iter));
    parallel_for(static_cast<std::size_t>(K), [&](std::size_t j) {
      rules[j] = m_step(domain, std::move(rules[j]), experiences,
                        result.z.z.col(static_cast<Eigen::Index>(j)), result.sigma_default,
                        cfg.train, derive_seed(iter_seed, "rule", j));
    });
    MembershipMatrix next = e_step(domain, rules, experiences, result.z, result.sigma_default);
    double max_change = (next.z - result.z.z).cwiseAbs().maxCoeff();
    result.z = std::move(next);
    record_trace(iter);
    if (cfg.z_stop_threshold > 0.0 && max_change < cfg.z_stop_threshold) break;
  }
  return result;
}

nlohmann::ordered_json em_model_to_json(const Domain& domain, const EmResult& result,
                                        const EmConfig& cfg) {
  nlohmann::ordered_json j;
  j["format"] = "spare-model";
  j["version"] = 1;
  j["kind"] = "em";
  j["properties"] = domain.properties;
  j["K"] = cfg.num_rules;
  j["kappa"] = cfg.kappa;
  j["sigma_default"] = std::vector<double>(
      result.sigma_default.data(), result.sigma_default.data() + result.sigma_default.size());
  nlohmann::ordered_json rules = nlohmann::ordered_json::array();
  for (const auto& rule : result.rules) {
    nlohmann::ordered_json rj;
    rj["template"] = domain.action_templates.at(static_cast<std::size_t>(rule.template_id)).name;
    nlohmann::ordered_json shells = nlohmann::ordered_json::array();
    for (const auto& [shell, w] : rule.pi.explored) {
      nlohmann::ordered_json sj;
      sj["gamma"] = shell.signature;
      sj["weight"] = w;
      shells.push_back(std::move(sj));
    }
    rj["shells"] = std::move(shells);
    rj["unexplored_mass"] = rule.pi.unexplored_mass;
    rj["unexplored_count"] = rule.pi.unexplored_count;
    nlohmann::ordered_json phis = nlohmann::ordered_json::array();
    for (const auto& entry : rule.phi) {
      if (!entry.trained) continue;
      phis.push_back(rule_to_json(domain, entry.rule));
    }
    rj["phi"] = std::move(phis);
    rules.push_back(std::move(rj));
  }
  j["rules"] = std::move(rules);
  return j;
}

}  // namespace spare
