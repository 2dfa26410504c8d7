#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace spare {

enum class Activation { Relu, Tanh };

// Fully-connected network, hidden activations between layers, linear output.
// Rows of the data matrices are samples.
struct Mlp {
  std::vector<Eigen::MatrixXd> weights;  // weights[l]: (out_l, in_l)
  std::vector<Eigen::VectorXd> biases;
  Activation activation = Activation::Relu;

  int input_dim() const { return weights.empty() ? 0 : static_cast<int>(weights.front().cols()); }
  int output_dim() const { return weights.empty() ? 0 : static_cast<int>(weights.back().rows()); }
  int num_layers() const { return static_cast<int>(weights.size()); }

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const;
};

// Weight (i, j) of layer l depends only on (seed, l, i, j), so enlarging a
// layer keeps the shared entries identical. Scaled He init for Relu, Xavier
// for Tanh; biases start at zero.
Mlp make_mlp(int input, const std::vector<int>& hidden, int output, Activation activation,
             uint64_t seed);

struct MlpGrads {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
};

struct ForwardCache {
  std::vector<Eigen::MatrixXd> pre;   // pre-activation per layer
  std::vector<Eigen::MatrixXd> post;  // post-activation (post[0] is the input)
  const Eigen::MatrixXd& output() const { return pre.back(); }
};

ForwardCache forward_cached(const Mlp& net, const Eigen::MatrixXd& x);

// dLoss/dOutput in `dout` (same shape as the forward output); returns
// parameter gradients.
MlpGrads backward(const Mlp& net, const ForwardCache& cache, const Eigen::MatrixXd& dout);

class Adam {
 public:
  Adam(double lr, double beta1, double beta2, double eps);
  // lr_scale multiplies the base step size (for decay schedules).
  void step(Mlp& net, const MlpGrads& grads, double lr_scale = 1.0);

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Eigen::MatrixXd> mw_, vw_;
  std::vector<Eigen::VectorXd> mb_, vb_;
};

}  // namespace spare
