#include <CLI11.hpp>

#include "spare/baseline.hpp"
#include "spare/blocks.hpp"
#include "spare/dataset.hpp"
#include "spare/em.hpp"
#include "spare/experiments.hpp"
#include "spare/metrics.hpp"
#include "spare/rules.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

namespace {

using namespace spare;

std::map<int, double> parse_mix(const std::string& mix) {
  std::map<int, double> out;
  std::istringstream ss(mix);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    auto colon = tok.find(':');
    if (colon == std::string::npos) throw CLI::ValidationError("--mix expects H:WEIGHT pairs");
    out[std::stoi(tok.substr(0, colon))] = std::stod(tok.substr(colon + 1));
  }
  return out;
}

Config load_config(const std::string& path, const std::vector<std::string>& overrides) {
  Config cfg = path.empty() ? Config{} : Config::from_file(path);
  for (const auto& o : overrides) cfg.apply_override(o);
  return cfg;
}

TrainConfig train_config_from(const Config& cfg, uint64_t seed) {
  TrainConfig t;
  t.epochs = cfg.get_int("train.epochs", 300);
  t.block_epochs = cfg.get_int("train.block_epochs", 25);
  t.final_mean_epochs = cfg.get_int("train.final_mean_epochs", 25);
  t.batch_size = cfg.get_int("train.batch_size", 16);
  t.learning_rate = cfg.get_double("train.learning_rate", 1e-3);
  t.var_learning_rate = cfg.get_double("train.var_learning_rate", 0.0);
  t.hidden.assign(static_cast<std::size_t>(cfg.get_int("train.hidden_layers", 2)),
                  cfg.get_int("train.hidden_units", 32));
  t.variance_floor = cfg.get_double("train.variance_floor", 1e-6);
  t.std_variance_floor = cfg.get_double("train.std_variance_floor", 3e-3);
  t.restarts = cfg.get_int("train.restarts", 2);
  t.seed = seed;
  return t;
}

void write_em_trace(const EmResult& r, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open trace file: " + path);
  out << "iteration,rule,top_shells,stack_height,target_rule,mean_target_membership\n";
  for (const auto& row : r.shell_trace) {
    out << row.iteration << ',' << row.rule << ",\"";
    for (std::size_t i = 0; i < row.top_shells.size(); ++i) {
      if (i) out << '|';
      out << row.top_shells[i].first << '=' << row.top_shells[i].second;
    }
    out << "\",,,\n";
  }
  for (const auto& row : r.membership_trace) {
    out << row.iteration << ",,," << row.stack_height << ',' << row.target_rule << ','
        << row.mean_membership << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SPARE lab: learning sparse relational transition models for block pushing"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  app.add_option("--config", config_path, "key=value config file");
  app.add_option("--set", overrides, "config override key=value (repeatable)");

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a pushing dataset (JSONL)");
  int stack_height = 3, extras = 0, count = 1250;
  uint64_t seed = 1;
  std::string mix, out_path = "data.jsonl", target_policy = "bottom";
  double noise_std = 0.005;
  gen->add_option("--stack-height", stack_height);
  gen->add_option("--extras", extras);
  gen->add_option("--count", count);
  gen->add_option("--seed", seed);
  gen->add_option("--mix", mix, "stack height mixture, e.g. 2:0.15,3:0.15,4:0.70");
  gen->add_option("--noise-std", noise_std);
  gen->add_option("--target", target_policy, "bottom | random-stack");
  gen->add_option("--out", out_path)->required();

  // train-single
  auto* ts = app.add_subcommand("train-single", "greedy reference selection + one rule");
  std::string data_path, model_path = "model.json", template_name = "push";
  int max_refs = 3;
  ts->add_option("--data", data_path)->required();
  ts->add_option("--template", template_name);
  ts->add_option("--max-refs", max_refs);
  ts->add_option("--seed", seed);
  ts->add_option("--out", model_path);

  // train-em
  auto* te = app.add_subcommand("train-em", "mixture-rule learning via EM");
  int K = 3, kappa = 3, iters = 10;
  std::string init_mode = "inv-sq-dist", trace_path;
  double loglik_scale = 1.0;
  te->add_option("--data", data_path)->required();
  te->add_option("--K", K);
  te->add_option("--kappa", kappa);
  te->add_option("--iters", iters);
  te->add_option("--init", init_mode, "discrete | inv-dist | inv-sq-dist | oracle:P");
  te->add_option("--loglik-scale", loglik_scale);
  te->add_option("--max-refs", max_refs);
  te->add_option("--seed", seed);
  te->add_option("--out", model_path);
  te->add_option("--trace", trace_path, "per-iteration trace CSV");

  // train-baseline
  auto* tb = app.add_subcommand("train-baseline", "monolithic full-state model");
  std::string ordering = "xtheny";
  tb->add_option("--data", data_path)->required();
  tb->add_option("--ordering", ordering, "none | xtheny | stack");
  tb->add_option("--seed", seed);
  tb->add_option("--out", model_path);

  // eval
  auto* ev = app.add_subcommand("eval", "test log-likelihood of a saved model");
  std::string scope = "all-objects";
  ev->add_option("--model", model_path)->required();
  ev->add_option("--data", data_path)->required();
  ev->add_option("--scope", scope, "stack-only | all-objects");
  ev->add_option("--seed", seed);

  // experiment
  auto* ex = app.add_subcommand("experiment", "run or check a paper-style experiment");
  ex->require_subcommand(1);
  std::string exp_name, out_dir = "results";
  bool check_flag = false;
  auto* ex_run = ex->add_subcommand("run", "run and export metrics");
  ex_run->add_option("name", exp_name)->required();
  ex_run->add_option("--out-dir", out_dir);
  ex_run->add_flag("--check", check_flag, "exit nonzero if an acceptance threshold fails");
  auto* ex_check = ex->add_subcommand("check", "run and verify acceptance thresholds");
  ex_check->add_option("name", exp_name)->required();
  ex_check->add_option("--out-dir", out_dir);

  CLI11_PARSE(app, argc, argv);
  Config cfg = load_config(config_path, overrides);

  try {
    const Domain& domain = blocks_domain();

    if (*gen) {
      SceneConfig scene;
      scene.stack_height = stack_height;
      scene.num_extra_blocks = extras;
      scene.action_noise_std = noise_std;
      if (!mix.empty()) scene.stack_mix = parse_mix(mix);
      if (target_policy == "random-stack") scene.target_policy = TargetPolicy::RandomStackMember;
      write_dataset(out_path, generate_dataset(scene, count, seed));
      std::cout << "wrote " << count << " experiences to " << out_path << "\n";
      return 0;
    }

    if (*ts) {
      auto data = read_dataset(data_path, domain);
      GreedyConfig gc;
      gc.max_refs = max_refs;
      gc.val_fraction = cfg.get_double("spare.val_fraction", 0.15);
      gc.train = train_config_from(cfg, seed);
      gc.seed = seed;
      GreedyResult g = greedy_select(domain, data, {}, domain.template_index(template_name), gc);
      SpareModel model = single_rule_model(domain, g.rule, g.sigma_default);
      save_model_json(model_to_json(model), model_path);
      std::cout << "selected gamma: [" << reference_list_signature(domain, g.gamma) << "]\n";
      for (std::size_t i = 0; i < g.accepted_losses.size(); ++i)
        std::cout << "  refs=" << i << " val_nll=" << g.accepted_losses[i] << "\n";
      std::cout << "wrote " << model_path << "\n";
      return 0;
    }

    if (*te) {
      auto data = read_dataset(data_path, domain);
      EmConfig ec;
      ec.num_rules = K;
      ec.kappa = kappa;
      ec.iterations = iters;
      ec.epsilon = cfg.get_double("em.epsilon", 0.05);
      ec.max_refs = max_refs;
      ec.val_fraction = cfg.get_double("spare.val_fraction", 0.15);
      ec.train = train_config_from(cfg, seed);
      ec.loglik_scale = loglik_scale;
      ec.seed = seed;
      if (init_mode == "discrete") ec.init = MembershipInit::Discrete;
      else if (init_mode == "inv-dist") ec.init = MembershipInit::InvDist;
      else if (init_mode == "inv-sq-dist") ec.init = MembershipInit::InvSqDist;
      else if (init_mode.rfind("oracle:", 0) == 0)
        ec.oracle_height_prob = std::stod(init_mode.substr(7));
      else throw CLI::ValidationError("unknown --init mode: " + init_mode);
      EmResult r = run_em(domain, data, ec);
      save_model_json(em_model_to_json(domain, r, ec), model_path);
      if (!trace_path.empty()) write_em_trace(r, trace_path);
      std::cout << "wrote " << model_path << "\n";
      return 0;
    }

    if (*tb) {
      auto data = read_dataset(data_path, domain);
      BaselineModel model = train_baseline(domain, data, ordering_from_string(ordering),
                                           train_config_from(cfg, seed));
      save_model_json(baseline_to_json(domain, model), model_path);
      std::cout << "wrote " << model_path << "\n";
      return 0;
    }

    if (*ev) {
      auto data = read_dataset(data_path, domain);
      std::vector<ObjectSet> scopes(data.size());
      for (std::size_t i = 0; i < data.size(); ++i) scopes[i] = stack_scope(data[i]);
      EvalScope sc = scope == "stack-only" ? EvalScope::StackOnly : EvalScope::AllObjects;
      auto j = load_model_json(model_path);
      std::string kind = j.at("kind").get<std::string>();
      double ll = 0.0;
      if (kind == "baseline") {
        ll = eval_baseline(domain, baseline_from_json(domain, j), data, scopes, sc, seed);
      } else if (kind == "single") {
        ll = eval_spare(model_from_json(domain, j), data, scopes, sc);
      } else {
        throw std::runtime_error("eval supports kinds 'single' and 'baseline', got: " + kind);
      }
      std::cout << "log_likelihood_per_sample " << ll << "\n";
      return 0;
    }

    if (*ex) {
      bool check = check_flag || ex_check->parsed();
      ExperimentOutput out = run_experiment(exp_name, cfg);
      std::filesystem::create_directories(out_dir);
      std::string csv_path = out_dir + "/" + exp_name + ".csv";
      write_metrics_csv(out.rows, csv_path);
      std::cout << "wrote " << csv_path << "\n";
      bool all_pass = true;
      for (const auto& c : out.checks) {
        std::cout << (c.pass ? "[PASS] " : "[FAIL] ") << c.name;
        if (!c.details.empty()) std::cout << "  (" << c.details << ")";
        std::cout << "\n";
        all_pass = all_pass && c.pass;
      }
      return check && !all_pass ? 1 : 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
