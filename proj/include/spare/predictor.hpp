#pragma once

#include "spare/mlp.hpp"

#include <nlohmann/json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace spare {

struct TrainConfig {
  int epochs = 100;           // alternating budget (mean/variance blocks)
  int block_epochs = 25;      // length of one alternation block
  int final_mean_epochs = 25; // trailing mean-only block after the budget
  int batch_size = 32;
  double learning_rate = 1e-3;      // mean network step size
  double var_learning_rate = 0.0;   // variance network step size; 0 = same as mean
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::vector<int> hidden = {150, 150};
  double variance_floor = 1e-6;
  // Additive floor of the softplus positivity map, in standardized target
  // units. Raising it clamps how small predicted variances can get, which
  // keeps the mean network's per-dimension loss weights bounded (the usual
  // log-variance clamp for heteroscedastic regression).
  double std_variance_floor = 1e-6;
  // Exponential per-epoch decay of the step sizes toward lr * lr_decay over
  // the run (1.0 keeps them constant).
  double lr_decay = 1.0;
  // Independent restarts from reseeded initializations; the run with the best
  // final training NLL wins. Deterministic given the seed.
  int restarts = 1;
  uint64_t seed = 0;

  double var_lr() const { return var_learning_rate > 0 ? var_learning_rate : learning_rate; }
};

// Gaussian regressor over fixed-length vectors: a mean network and a diagonal
// variance network (softplus output plus an additive floor), trained jointly
// on the negative log-likelihood by alternating which network is optimized.
// Inputs and targets are z-scored internally; the statistics live in the
// model so serialized predictors are self-contained.
struct GaussianPredictor {
  Mlp mean_net;
  Mlp var_net;  // outputs raw variance logits
  Eigen::VectorXd x_mean, x_std, y_mean, y_std;
  double floor = 1e-6;      // original units; forward guarantees var >= floor
  double std_floor = 1e-6;  // additive term of the softplus map (standardized units)
  uint64_t seed = 0;

  int input_dim() const { return mean_net.input_dim(); }
  int output_dim() const { return mean_net.output_dim(); }

  // (mu, sigma^2) in original units; sigma^2 >= floor elementwise.
  std::pair<Eigen::VectorXd, Eigen::VectorXd> forward(const Eigen::VectorXd& x) const;
  // Rows are samples.
  std::pair<Eigen::MatrixXd, Eigen::MatrixXd> forward_batch(const Eigen::MatrixXd& x) const;
};

// Identity-standardization predictor around explicitly given networks.
GaussianPredictor make_predictor(Mlp mean_net, Mlp var_net, double floor = 1e-6);

double softplus(double a);

// Mean over samples of w~ * sum_d [ (y_d - mu_d)^2 / var_d + log var_d ],
// with weights normalized to mean one (so duplicating the batch is a no-op).
// Pass an empty weight vector for uniform weights.
double nll(const GaussianPredictor& pred, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
           const Eigen::VectorXd& weights = {});

struct TrainTrace {
  std::vector<double> train_nll;  // entry 0 is the pre-training value, then one per block
  std::vector<double> eval_nll;   // same layout when an eval set is supplied
};

// Alternating schedule: (mean, var) blocks of block_epochs until the epoch
// budget is spent, then final_mean_epochs more of mean-only training. The
// network not being optimized is held fixed. If the final training NLL
// exceeds the initial one, training restarts once with a reseeded
// initialization and the better result is kept. Throws on NaN divergence.
GaussianPredictor train_alternating(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                                    const Eigen::VectorXd& weights, const TrainConfig& cfg,
                                    TrainTrace* trace = nullptr,
                                    const Eigen::MatrixXd* eval_x = nullptr,
                                    const Eigen::MatrixXd* eval_y = nullptr);

// Weighted mean of squared deviations per property, floored. Properties with
// no residuals fall back to the floor.
Eigen::VectorXd fit_default_variance(const std::vector<std::vector<double>>& deviations,
                                     const std::vector<std::vector<double>>& weights,
                                     double floor);

nlohmann::ordered_json predictor_to_json(const GaussianPredictor& pred);
GaussianPredictor predictor_from_json(const nlohmann::ordered_json& j);

}  // namespace spare
