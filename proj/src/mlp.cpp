#include "spare/mlp.hpp"

#include "spare/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace spare {

namespace {

Eigen::MatrixXd apply_activation(Activation act, const Eigen::MatrixXd& z) {
  if (act == Activation::Relu) return z.cwiseMax(0.0);
  return z.array().tanh().matrix();
}

// Derivative expressed through the pre-activation.
Eigen::MatrixXd activation_grad(Activation act, const Eigen::MatrixXd& z) {
  if (act == Activation::Relu)
    return (z.array() > 0.0).cast<double>().matrix();
  return (1.0 - z.array().tanh().square()).matrix();
}

}  // namespace

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x) const {
  Eigen::MatrixXd h = x;
  for (int l = 0; l < num_layers(); ++l) {
    Eigen::MatrixXd z = h * weights[static_cast<std::size_t>(l)].transpose();
    z.rowwise() += biases[static_cast<std::size_t>(l)].transpose();
    h = l + 1 < num_layers() ? apply_activation(activation, z) : std::move(z);
  }
  return h;
}

Mlp make_mlp(int input, const std::vector<int>& hidden, int output, Activation activation,
             uint64_t seed) {
  if (input <= 0 || output <= 0) throw std::invalid_argument("make_mlp: non-positive dimension");
  Mlp net;
  net.activation = activation;
  std::vector<int> dims;
  dims.push_back(input);
  for (int h : hidden) dims.push_back(h);
  dims.push_back(output);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    int in = dims[l], out = dims[l + 1];
    double scale = activation == Activation::Relu ? std::sqrt(2.0 / in) : std::sqrt(1.0 / in);
    Eigen::MatrixXd w(out, in);
    for (int i = 0; i < out; ++i)
      for (int j = 0; j < in; ++j)
        w(i, j) = scale * counter_normal(seed, l, static_cast<uint64_t>(i), static_cast<uint64_t>(j));
    net.weights.push_back(std::move(w));
    net.biases.push_back(Eigen::VectorXd::Zero(out));
  }
  return net;
}

ForwardCache forward_cached(const Mlp& net, const Eigen::MatrixXd& x) {
  ForwardCache cache;
  cache.post.push_back(x);
  for (int l = 0; l < net.num_layers(); ++l) {
    Eigen::MatrixXd z = cache.post.back() * net.weights[static_cast<std::size_t>(l)].transpose();
    z.rowwise() += net.biases[static_cast<std::size_t>(l)].transpose();
    cache.pre.push_back(z);
    if (l + 1 < net.num_layers()) cache.post.push_back(apply_activation(net.activation, z));
  }
  return cache;
}

MlpGrads backward(const Mlp& net, const ForwardCache& cache, const Eigen::MatrixXd& dout) {
  MlpGrads grads;
  grads.weights.resize(static_cast<std::size_t>(net.num_layers()));
  grads.biases.resize(static_cast<std::size_t>(net.num_layers()));
  Eigen::MatrixXd delta = dout;  // dLoss/dPre for the current layer
  for (int l = net.num_layers() - 1; l >= 0; --l) {
    grads.weights[static_cast<std::size_t>(l)] =
        delta.transpose() * cache.post[static_cast<std::size_t>(l)];
    grads.biases[static_cast<std::size_t>(l)] = delta.colwise().sum().transpose();
    if (l > 0) {
      Eigen::MatrixXd dpost = delta * net.weights[static_cast<std::size_t>(l)];
      delta = dpost.cwiseProduct(
          activation_grad(net.activation, cache.pre[static_cast<std::size_t>(l - 1)]));
    }
  }
  return grads;
}

Adam::Adam(double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(Mlp& net, const MlpGrads& grads, double lr_scale) {
  if (mw_.empty()) {
    for (const auto& w : net.weights) {
      mw_.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
      vw_.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
    }
    for (const auto& b : net.biases) {
      mb_.push_back(Eigen::VectorXd::Zero(b.size()));
      vb_.push_back(Eigen::VectorXd::Zero(b.size()));
    }
  }
  ++t_;
  double lr = lr_ * lr_scale;
  double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    mw_[l] = beta1_ * mw_[l] + (1.0 - beta1_) * grads.weights[l];
    vw_[l] = beta2_ * vw_[l].array().matrix() +
             (1.0 - beta2_) * grads.weights[l].array().square().matrix();
    net.weights[l].array() -=
        lr * (mw_[l].array() / bc1) / ((vw_[l].array() / bc2).sqrt() + eps_);
    mb_[l] = beta1_ * mb_[l] + (1.0 - beta1_) * grads.biases[l];
    vb_[l] = beta2_ * vb_[l].array().matrix() +
             (1.0 - beta2_) * grads.biases[l].array().square().matrix();
    net.biases[l].array() -= lr * (mb_[l].array() / bc1) / ((vb_[l].array() / bc2).sqrt() + eps_);
  }
}

}  // namespace spare
