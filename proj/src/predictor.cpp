#include "spare/predictor.hpp"

#include "spare/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace spare {

namespace {

constexpr double kStdGuard = 1e-10;

Eigen::ArrayXXd softplus_array(const Eigen::MatrixXd& a) {
  // log1p(exp(-|a|)) + max(a, 0): stable for both signs.
  return (-a.array().abs()).exp().log1p() + a.array().max(0.0);
}

struct Standardizer {
  Eigen::VectorXd mean, std;

  // Constant columns keep a tiny std: standardized values stay ~0 and the
  // predictor's original-units variance floor takes over on the way back.
  static Standardizer fit(const Eigen::MatrixXd& data, const Eigen::VectorXd& w) {
    Standardizer s;
    double total = w.sum();
    s.mean = (data.transpose() * w) / total;
    Eigen::MatrixXd centered = data.rowwise() - s.mean.transpose();
    Eigen::VectorXd var = (centered.array().square().matrix().transpose() * w) / total;
    s.std = var.array().sqrt().max(kStdGuard).matrix();
    return s;
  }

  Eigen::MatrixXd apply(const Eigen::MatrixXd& data) const {
    return (data.rowwise() - mean.transpose()).array().rowwise() /
           std.transpose().array();
  }
};

double weighted_nll_std(const Eigen::MatrixXd& mu, const Eigen::MatrixXd& raw_var,
                        const Eigen::MatrixXd& y, const Eigen::VectorXd& wnorm, double floor) {
  Eigen::ArrayXXd var = softplus_array(raw_var) + floor;
  Eigen::ArrayXXd resid = (y - mu).array();
  Eigen::ArrayXd per_sample = (resid.square() / var + var.log()).rowwise().sum();
  return (per_sample * wnorm.array()).mean();
}

}  // namespace

double softplus(double a) { return a > 0 ? a + std::log1p(std::exp(-a)) : std::log1p(std::exp(a)); }

std::pair<Eigen::VectorXd, Eigen::VectorXd> GaussianPredictor::forward(
    const Eigen::VectorXd& x) const {
  auto [mu, var] = forward_batch(x.transpose());
  return {mu.row(0).transpose(), var.row(0).transpose()};
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> GaussianPredictor::forward_batch(
    const Eigen::MatrixXd& x) const {
  if (x.cols() != input_dim()) throw std::invalid_argument("forward: input dimension mismatch");
  Eigen::MatrixXd xs = (x.rowwise() - x_mean.transpose()).array().rowwise() /
                       x_std.transpose().array();
  Eigen::MatrixXd mu_std = mean_net.forward(xs);
  Eigen::MatrixXd raw = var_net.forward(xs);
  Eigen::MatrixXd mu =
      (mu_std.array().rowwise() * y_std.transpose().array()).rowwise() + y_mean.transpose().array();
  Eigen::ArrayXXd var_std = softplus_array(raw) + std_floor;
  Eigen::MatrixXd var =
      (var_std.rowwise() * y_std.transpose().array().square()).max(floor).matrix();
  return {std::move(mu), std::move(var)};
}

GaussianPredictor make_predictor(Mlp mean_net, Mlp var_net, double floor) {
  GaussianPredictor p;
  int in = mean_net.input_dim();
  int out = mean_net.output_dim();
  if (var_net.input_dim() != in || var_net.output_dim() != out)
    throw std::invalid_argument("make_predictor: network shapes disagree");
  p.mean_net = std::move(mean_net);
  p.var_net = std::move(var_net);
  p.x_mean = Eigen::VectorXd::Zero(in);
  p.x_std = Eigen::VectorXd::Ones(in);
  p.y_mean = Eigen::VectorXd::Zero(out);
  p.y_std = Eigen::VectorXd::Ones(out);
  p.floor = floor;
  p.std_floor = floor;
  return p;
}

double nll(const GaussianPredictor& pred, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
           const Eigen::VectorXd& weights) {
  if (x.rows() != y.rows() || x.rows() == 0)
    throw std::invalid_argument("nll: empty batch or row mismatch");
  if (!x.allFinite() || !y.allFinite()) throw std::invalid_argument("nll: non-finite data");
  Eigen::VectorXd w = weights.size() ? weights : Eigen::VectorXd::Ones(x.rows());
  if (w.size() != x.rows()) throw std::invalid_argument("nll: weight length mismatch");
  if (w.minCoeff() < 0.0 || w.sum() <= 0.0)
    throw std::invalid_argument("nll: weights must be nonnegative, not all zero");
  Eigen::VectorXd wnorm = w * (static_cast<double>(w.size()) / w.sum());
  auto [mu, var] = pred.forward_batch(x);
  Eigen::ArrayXXd resid = (y - mu).array();
  Eigen::ArrayXd per_sample = (resid.square() / var.array() + var.array().log()).rowwise().sum();
  return (per_sample * wnorm.array()).mean();
}

namespace {

struct TrainState {
  Mlp mean_net, var_net;
  Adam mean_opt, var_opt;
};

enum class BlockKind { Mean, Var };

std::vector<std::pair<BlockKind, int>> build_schedule(const TrainConfig& cfg) {
  std::vector<std::pair<BlockKind, int>> blocks;
  int remaining = cfg.epochs;
  BlockKind kind = BlockKind::Mean;
  while (remaining > 0) {
    int len = std::min(cfg.block_epochs, remaining);
    blocks.emplace_back(kind, len);
    remaining -= len;
    kind = kind == BlockKind::Mean ? BlockKind::Var : BlockKind::Mean;
  }
  if (cfg.final_mean_epochs > 0) blocks.emplace_back(BlockKind::Mean, cfg.final_mean_epochs);
  return blocks;
}

GaussianPredictor train_once(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                             const Eigen::VectorXd& wnorm, const TrainConfig& cfg, uint64_t seed,
                             const Standardizer& sx, const Standardizer& sy, TrainTrace* trace,
                             const Eigen::MatrixXd* eval_x, const Eigen::MatrixXd* eval_y,
                             double* final_train_nll) {
  const Eigen::MatrixXd xs = sx.apply(x);
  const Eigen::MatrixXd ys = sy.apply(y);
  const int n = static_cast<int>(x.rows());
  const double floor = cfg.std_variance_floor;

  Mlp mean_net = make_mlp(static_cast<int>(x.cols()), cfg.hidden, static_cast<int>(y.cols()),
                          Activation::Relu, derive_seed(seed, "mean-net"));
  Mlp var_net = make_mlp(static_cast<int>(x.cols()), cfg.hidden, static_cast<int>(y.cols()),
                         Activation::Relu, derive_seed(seed, "var-net"));
  Adam mean_opt(cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
  Adam var_opt(cfg.var_lr(), cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);

  auto train_nll = [&]() {
    return weighted_nll_std(mean_net.forward(xs), var_net.forward(xs), ys, wnorm, floor);
  };
  auto record = [&]() {
    if (!trace) return;
    trace->train_nll.push_back(train_nll());
    if (eval_x && eval_y) {
      Eigen::MatrixXd exs = sx.apply(*eval_x);
      Eigen::MatrixXd eys = sy.apply(*eval_y);
      Eigen::VectorXd ones = Eigen::VectorXd::Ones(eval_x->rows());
      trace->eval_nll.push_back(
          weighted_nll_std(mean_net.forward(exs), var_net.forward(exs), eys, ones, floor));
    }
  };

  record();

  int total_epochs = 0;
  for (const auto& [kind, len] : build_schedule(cfg)) total_epochs += len;
  int global_epoch = 0;
  for (const auto& [kind, len] : build_schedule(cfg)) {
    for (int e = 0; e < len; ++e, ++global_epoch) {
      double lr_scale =
          cfg.lr_decay >= 1.0
              ? 1.0
              : std::pow(cfg.lr_decay,
                         static_cast<double>(global_epoch) / std::max(1, total_epochs - 1));
      Rng shuffle_rng(derive_seed(seed, "shuffle", static_cast<uint64_t>(global_epoch)));
      std::vector<int> order = shuffle_rng.permutation(n);
      for (int start = 0; start < n; start += cfg.batch_size) {
        int b = std::min(cfg.batch_size, n - start);
        Eigen::MatrixXd xb(b, xs.cols()), yb(b, ys.cols());
        Eigen::VectorXd wb(b);
        for (int i = 0; i < b; ++i) {
          xb.row(i) = xs.row(order[static_cast<std::size_t>(start + i)]);
          yb.row(i) = ys.row(order[static_cast<std::size_t>(start + i)]);
          wb(i) = wnorm(order[static_cast<std::size_t>(start + i)]);
        }
        if (kind == BlockKind::Mean) {
          ForwardCache mc = forward_cached(mean_net, xb);
          Eigen::ArrayXXd var = softplus_array(var_net.forward(xb)) + floor;
          Eigen::ArrayXXd resid = (mc.output() - yb).array();
          Eigen::MatrixXd dmu =
              (2.0 * resid / var).colwise() * (wb.array() / static_cast<double>(b));
          mean_opt.step(mean_net, backward(mean_net, mc, dmu), lr_scale);
        } else {
          ForwardCache vc = forward_cached(var_net, xb);
          Eigen::ArrayXXd raw = vc.output().array();
          Eigen::ArrayXXd var = softplus_array(vc.output()) + floor;
          Eigen::ArrayXXd resid = (mean_net.forward(xb) - yb).array();
          Eigen::ArrayXXd sig = 1.0 / (1.0 + (-raw).exp());  // d softplus / d raw
          Eigen::MatrixXd draw =
              (((1.0 / var) - resid.square() / var.square()) * sig).colwise() *
              (wb.array() / static_cast<double>(b));
          var_opt.step(var_net, backward(var_net, vc, draw), lr_scale);
        }
      }
    }
    record();
    if (!mean_net.forward(xs.topRows(1)).allFinite() ||
        !var_net.forward(xs.topRows(1)).allFinite())
      throw std::runtime_error("train_alternating: NaN divergence");
  }

  double final_nll = train_nll();
  if (!std::isfinite(final_nll)) throw std::runtime_error("train_alternating: NaN divergence");
  if (final_train_nll) *final_train_nll = final_nll;

  GaussianPredictor pred;
  pred.mean_net = std::move(mean_net);
  pred.var_net = std::move(var_net);
  pred.x_mean = sx.mean;
  pred.x_std = sx.std;
  pred.y_mean = sy.mean;
  pred.y_std = sy.std;
  pred.floor = cfg.variance_floor;
  pred.std_floor = cfg.std_variance_floor;
  pred.seed = seed;
  return pred;
}

}  // namespace

GaussianPredictor train_alternating(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                                    const Eigen::VectorXd& weights, const TrainConfig& cfg,
                                    TrainTrace* trace, const Eigen::MatrixXd* eval_x,
                                    const Eigen::MatrixXd* eval_y) {
  if (x.rows() < 2) throw std::invalid_argument("train_alternating: need at least 2 samples");
  if (x.rows() != y.rows()) throw std::invalid_argument("train_alternating: row mismatch");
  if (!x.allFinite() || !y.allFinite())
    throw std::invalid_argument("train_alternating: non-finite data");
  Eigen::VectorXd w = weights.size() ? weights : Eigen::VectorXd::Ones(x.rows());
  if (w.minCoeff() < 0.0 || w.sum() <= 0.0)
    throw std::invalid_argument("train_alternating: bad weights");
  Eigen::VectorXd wnorm = w * (static_cast<double>(w.size()) / w.sum());

  Standardizer sx = Standardizer::fit(x, wnorm);
  Standardizer sy = Standardizer::fit(y, wnorm);

  const Eigen::MatrixXd xs = sx.apply(x);
  const Eigen::MatrixXd ys = sy.apply(y);

  double final_nll = 0.0;
  GaussianPredictor pred =
      train_once(x, y, wnorm, cfg, cfg.seed, sx, sy, trace, eval_x, eval_y, &final_nll);
  for (int r = 1; r < cfg.restarts; ++r) {
    uint64_t restart_seed = derive_seed(cfg.seed, "restart", static_cast<uint64_t>(r));
    double nll_r = 0.0;
    GaussianPredictor cand =
        train_once(x, y, wnorm, cfg, restart_seed, sx, sy, nullptr, nullptr, nullptr, &nll_r);
    if (nll_r < final_nll) {
      final_nll = nll_r;
      pred = std::move(cand);
    }
  }

  // Initial-loss reference: freshly initialized networks at this seed.
  Mlp m0 = make_mlp(static_cast<int>(x.cols()), cfg.hidden, static_cast<int>(y.cols()),
                    Activation::Relu, derive_seed(cfg.seed, "mean-net"));
  Mlp v0 = make_mlp(static_cast<int>(x.cols()), cfg.hidden, static_cast<int>(y.cols()),
                    Activation::Relu, derive_seed(cfg.seed, "var-net"));
  double initial_nll =
      weighted_nll_std(m0.forward(xs), v0.forward(xs), ys, wnorm, cfg.std_variance_floor);
  if (final_nll > initial_nll) {
    uint64_t retry_seed = derive_seed(cfg.seed, "retry");
    double retry_nll = 0.0;
    GaussianPredictor retry =
        train_once(x, y, wnorm, cfg, retry_seed, sx, sy, nullptr, nullptr, nullptr, &retry_nll);
    if (retry_nll < final_nll) pred = std::move(retry);
  }
  return pred;
}

Eigen::VectorXd fit_default_variance(const std::vector<std::vector<double>>& deviations,
                                     const std::vector<std::vector<double>>& weights,
                                     double floor) {
  if (!weights.empty() && weights.size() != deviations.size())
    throw std::invalid_argument("fit_default_variance: weight table shape mismatch");
  Eigen::VectorXd v(static_cast<Eigen::Index>(deviations.size()));
  for (std::size_t p = 0; p < deviations.size(); ++p) {
    const auto& devs = deviations[p];
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < devs.size(); ++i) {
      double w = weights.empty() ? 1.0 : weights[p][i];
      num += w * devs[i] * devs[i];
      den += w;
    }
    v(static_cast<Eigen::Index>(p)) = den > 0.0 ? std::max(num / den, floor) : floor;
  }
  return v;
}

namespace {

nlohmann::ordered_json mlp_to_json(const Mlp& net) {
  nlohmann::ordered_json layers = nlohmann::ordered_json::array();
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    const auto& w = net.weights[l];
    nlohmann::ordered_json layer;
    layer["rows"] = w.rows();
    layer["cols"] = w.cols();
    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(w.size()));
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) flat.push_back(w(i, j));
    layer["w"] = flat;
    layer["b"] = std::vector<double>(net.biases[l].data(),
                                     net.biases[l].data() + net.biases[l].size());
    layers.push_back(std::move(layer));
  }
  return layers;
}

Mlp mlp_from_json(const nlohmann::ordered_json& layers, Activation act) {
  Mlp net;
  net.activation = act;
  for (const auto& layer : layers) {
    Eigen::Index rows = layer.at("rows").get<Eigen::Index>();
    Eigen::Index cols = layer.at("cols").get<Eigen::Index>();
    auto flat = layer.at("w").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(flat.size()) != rows * cols)
      throw std::invalid_argument("predictor json: weight size mismatch");
    Eigen::MatrixXd w(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) w(i, j) = flat[static_cast<std::size_t>(i * cols + j)];
    auto b = layer.at("b").get<std::vector<double>>();
    net.weights.push_back(std::move(w));
    net.biases.push_back(Eigen::Map<Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(b.size())));
  }
  return net;
}

std::vector<double> to_vec(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::VectorXd from_vec(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

nlohmann::ordered_json predictor_to_json(const GaussianPredictor& pred) {
  nlohmann::ordered_json j;
  j["format"] = "spare-predictor";
  j["version"] = 1;
  j["input_dim"] = pred.input_dim();
  j["output_dim"] = pred.output_dim();
  j["floor"] = pred.floor;
  j["std_floor"] = pred.std_floor;
  j["seed"] = pred.seed;
  j["activation"] = pred.mean_net.activation == Activation::Relu ? "relu" : "tanh";
  j["x_mean"] = to_vec(pred.x_mean);
  j["x_std"] = to_vec(pred.x_std);
  j["y_mean"] = to_vec(pred.y_mean);
  j["y_std"] = to_vec(pred.y_std);
  j["mean_net"] = mlp_to_json(pred.mean_net);
  j["var_net"] = mlp_to_json(pred.var_net);
  return j;
}

GaussianPredictor predictor_from_json(const nlohmann::ordered_json& j) {
  if (j.at("format").get<std::string>() != "spare-predictor")
    throw std::invalid_argument("not a predictor file");
  GaussianPredictor pred;
  Activation act = j.at("activation").get<std::string>() == "relu" ? Activation::Relu
                                                                   : Activation::Tanh;
  pred.mean_net = mlp_from_json(j.at("mean_net"), act);
  pred.var_net = mlp_from_json(j.at("var_net"), act);
  pred.floor = j.at("floor").get<double>();
  pred.std_floor = j.at("std_floor").get<double>();
  pred.seed = j.at("seed").get<uint64_t>();
  pred.x_mean = from_vec(j.at("x_mean").get<std::vector<double>>());
  pred.x_std = from_vec(j.at("x_std").get<std::vector<double>>());
  pred.y_mean = from_vec(j.at("y_mean").get<std::vector<double>>());
  pred.y_std = from_vec(j.at("y_std").get<std::vector<double>>());
  return pred;
}

}  // namespace spare
