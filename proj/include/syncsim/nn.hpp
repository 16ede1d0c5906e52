#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "syncsim/rng.hpp"

namespace syncsim::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// weight is (out x in); inputs are column vectors, batches are column blocks.
struct DenseLayer {
  Matrix weight;
  Vector bias;
};

// Feed-forward ReLU network: input -> hidden... -> linear output.
struct MlpParams {
  std::vector<DenseLayer> layers;

  // He-uniform weights (limit sqrt(6 / fan_in)), zero biases.
  static MlpParams he_uniform(int input_dim, std::span<const int> hidden, int output_dim, Rng& rng);
  static MlpParams zeros_like(const MlpParams& other);

  int input_dim() const { return static_cast<int>(layers.front().weight.cols()); }
  int output_dim() const { return static_cast<int>(layers.back().weight.rows()); }
  std::size_t num_parameters() const;
  bool all_finite() const;
};

struct ForwardCache {
  Matrix input;
  std::vector<Matrix> pre;     // hidden pre-activations
  std::vector<Matrix> masks;   // inverted-dropout masks (empty when inactive)
  std::vector<Matrix> output;  // hidden outputs after ReLU and dropout
};

struct ForwardResult {
  Matrix q;
  ForwardCache cache;
};

// Dropout (inverted, after each hidden ReLU) is applied only when training and
// dropout_rate > 0. Throws ShapeError on an input-dimension mismatch.
ForwardResult forward(const MlpParams& params, const Matrix& x, double dropout_rate, bool training,
                      Rng& rng);
// Inference without dropout.
Matrix predict(const MlpParams& params, const Matrix& x);
Vector predict(const MlpParams& params, const Vector& x);

// Gradients of sum(q .* grad_q) with respect to every parameter.
MlpParams backward(const MlpParams& params, const ForwardCache& cache, const Matrix& grad_q);

double global_norm(const MlpParams& grads);
// Rescales grads so the global norm is at most max_norm; max_norm <= 0 disables.
void clip_global_norm(MlpParams& grads, double max_norm);

struct AdamOptions {
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamOptions options;
  MlpParams m;
  MlpParams v;
  std::int64_t t = 0;

  static AdamState for_params(const MlpParams& params, AdamOptions options = {});
};

// Bias-corrected Adam update. Throws DivergenceError on non-finite gradients.
void adam_step(MlpParams& params, const MlpParams& grads, AdamState& state);

// target <- kappa * source + (1 - kappa) * target
void soft_update(MlpParams& target, const MlpParams& source, double kappa);

double max_abs_difference(const MlpParams& a, const MlpParams& b);

nlohmann::ordered_json params_to_json(const MlpParams& params);
// Throws ShapeError on malformed documents.
MlpParams params_from_json(const nlohmann::json& doc);

struct Transition {
  std::vector<double> state;
  int action = 0;
  double reward = 0.0;
  std::vector<double> next_obs;
};

// Fixed-capacity FIFO ring of transitions.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 40000);

  void push(Transition t);
  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }
  // i = 0 is the oldest stored transition.
  const Transition& at(std::size_t i) const;

  // Uniform with replacement. Throws InsufficientSamplesError when size() < batch.
  std::vector<const Transition*> sample(std::size_t batch, Rng& rng) const;

 private:
  std::size_t capacity_;
  std::size_t cursor_ = 0;
  std::vector<Transition> data_;
};

std::vector<Transition> sample_minibatch(const ReplayBuffer& buffer, std::size_t batch, Rng& rng);

}  // namespace syncsim::nn
