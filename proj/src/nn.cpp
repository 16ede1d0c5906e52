#include "syncsim/nn.hpp"

#include <cmath>

#include <fmt/format.h>

#include "syncsim/errors.hpp"

namespace syncsim::nn {

MlpParams MlpParams::he_uniform(int input_dim, std::span<const int> hidden, int output_dim,
                                Rng& rng) {
  MlpParams p;
  int fan_in = input_dim;
  auto add = [&](int out) {
    DenseLayer layer{Matrix(out, fan_in), Vector::Zero(out)};
    const double limit = std::sqrt(6.0 / fan_in);
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (int r = 0; r < out; ++r)
      for (int c = 0; c < fan_in; ++c) layer.weight(r, c) = dist(rng);
    p.layers.push_back(std::move(layer));
    fan_in = out;
  };
  for (int h : hidden) add(h);
  add(output_dim);
  return p;
}

MlpParams MlpParams::zeros_like(const MlpParams& other) {
  MlpParams p;
  for (const auto& l : other.layers)
    p.layers.push_back({Matrix::Zero(l.weight.rows(), l.weight.cols()), Vector::Zero(l.bias.size())});
  return p;
}

std::size_t MlpParams::num_parameters() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

bool MlpParams::all_finite() const {
  for (const auto& l : layers)
    if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
  return true;
}

ForwardResult forward(const MlpParams& params, const Matrix& x, double dropout_rate, bool training,
                      Rng& rng) {
  if (x.rows() != params.input_dim())
    throw ShapeError(fmt::format("input has {} rows, network expects {}", x.rows(), params.input_dim()));
  const bool drop = training && dropout_rate > 0.0;
  const double keep = 1.0 - dropout_rate;
  ForwardResult r;
  r.cache.input = x;
  const Matrix* act = &r.cache.input;
  const std::size_t hidden = params.layers.size() - 1;
  for (std::size_t i = 0; i < hidden; ++i) {
    const auto& layer = params.layers[i];
    Matrix pre = (layer.weight * *act).colwise() + layer.bias;
    Matrix out = pre.cwiseMax(0.0);
    Matrix mask;
    if (drop) {
      std::bernoulli_distribution keep_dist(keep);
      mask.resize(out.rows(), out.cols());
      for (Eigen::Index c = 0; c < mask.cols(); ++c)
        for (Eigen::Index k = 0; k < mask.rows(); ++k) mask(k, c) = keep_dist(rng) ? 1.0 / keep : 0.0;
      out = out.cwiseProduct(mask);
    }
    r.cache.pre.push_back(std::move(pre));
    r.cache.masks.push_back(std::move(mask));
    r.cache.output.push_back(std::move(out));
    act = &r.cache.output.back();
  }
  const auto& last = params.layers.back();
  r.q = (last.weight * *act).colwise() + last.bias;
  return r;
}

Matrix predict(const MlpParams& params, const Matrix& x) {
  if (x.rows() != params.input_dim())
    throw ShapeError(fmt::format("input has {} rows, network expects {}", x.rows(), params.input_dim()));
  Matrix act = x;
  for (std::size_t i = 0; i + 1 < params.layers.size(); ++i) {
    const auto& layer = params.layers[i];
    act = ((layer.weight * act).colwise() + layer.bias).cwiseMax(0.0);
  }
  const auto& last = params.layers.back();
  return (last.weight * act).colwise() + last.bias;
}

Vector predict(const MlpParams& params, const Vector& x) {
  return predict(params, Matrix(x)).col(0);
}

MlpParams backward(const MlpParams& params, const ForwardCache& cache, const Matrix& grad_q) {
  MlpParams grads = MlpParams::zeros_like(params);
  const std::size_t n = params.layers.size();
  Matrix delta = grad_q;
  for (std::size_t i = n; i-- > 0;) {
    const Matrix& in = i == 0 ? cache.input : cache.output[i - 1];
    grads.layers[i].weight = delta * in.transpose();
    grads.layers[i].bias = delta.rowwise().sum();
    if (i == 0) break;
    Matrix upstream = params.layers[i].weight.transpose() * delta;
    if (cache.masks[i - 1].size() > 0) upstream = upstream.cwiseProduct(cache.masks[i - 1]);
    delta = upstream.cwiseProduct((cache.pre[i - 1].array() > 0.0).cast<double>().matrix());
  }
  return grads;
}

double global_norm(const MlpParams& grads) {
  double sq = 0.0;
  for (const auto& l : grads.layers) sq += l.weight.squaredNorm() + l.bias.squaredNorm();
  return std::sqrt(sq);
}

void clip_global_norm(MlpParams& grads, double max_norm) {
  if (max_norm <= 0.0) return;
  const double norm = global_norm(grads);
  if (!(norm > max_norm)) return;
  const double scale = max_norm / norm;
  for (auto& l : grads.layers) {
    l.weight *= scale;
    l.bias *= scale;
  }
}

AdamState AdamState::for_params(const MlpParams& params, AdamOptions options) {
  return {options, MlpParams::zeros_like(params), MlpParams::zeros_like(params), 0};
}

void adam_step(MlpParams& params, const MlpParams& grads, AdamState& state) {
  if (!grads.all_finite()) throw DivergenceError("non-finite gradient in Adam step");
  const auto& o = state.options;
  ++state.t;
  const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(state.t));
  auto update = [&](auto& p, const auto& g, auto& m, auto& v) {
    m = o.beta1 * m + (1.0 - o.beta1) * g;
    v = o.beta2 * v + (1.0 - o.beta2) * g.cwiseProduct(g);
    p.array() -= o.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + o.epsilon);
  };
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    update(params.layers[i].weight, grads.layers[i].weight, state.m.layers[i].weight,
           state.v.layers[i].weight);
    update(params.layers[i].bias, grads.layers[i].bias, state.m.layers[i].bias,
           state.v.layers[i].bias);
  }
}

void soft_update(MlpParams& target, const MlpParams& source, double kappa) {
  for (std::size_t i = 0; i < target.layers.size(); ++i) {
    auto& t = target.layers[i];
    const auto& s = source.layers[i];
    if (kappa == 1.0) {
      t = s;
      continue;
    }
    t.weight = kappa * s.weight + (1.0 - kappa) * t.weight;
    t.bias = kappa * s.bias + (1.0 - kappa) * t.bias;
  }
}

double max_abs_difference(const MlpParams& a, const MlpParams& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    d = std::max(d, (a.layers[i].weight - b.layers[i].weight).cwiseAbs().maxCoeff());
    d = std::max(d, (a.layers[i].bias - b.layers[i].bias).cwiseAbs().maxCoeff());
  }
  return d;
}

nlohmann::ordered_json params_to_json(const MlpParams& params) {
  nlohmann::ordered_json layers = nlohmann::ordered_json::array();
  for (const auto& l : params.layers) {
    std::vector<double> w;
    w.reserve(l.weight.size());
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) w.push_back(l.weight(r, c));
    std::vector<double> b(l.bias.data(), l.bias.data() + l.bias.size());
    layers.push_back({{"weight", {{"rows", l.weight.rows()}, {"cols", l.weight.cols()}, {"data", w}}},
                      {"bias", {{"size", l.bias.size()}, {"data", b}}}});
  }
  return {{"schema", "syncsim.mlp.v1"}, {"layers", layers}};
}

MlpParams params_from_json(const nlohmann::json& doc) {
  try {
    if (doc.at("schema") != "syncsim.mlp.v1") throw ShapeError("unknown parameter schema");
    MlpParams p;
    for (const auto& l : doc.at("layers")) {
      const auto& w = l.at("weight");
      const int rows = w.at("rows");
      const int cols = w.at("cols");
      const auto data = w.at("data").get<std::vector<double>>();
      if (static_cast<int>(data.size()) != rows * cols) throw ShapeError("weight data size mismatch");
      DenseLayer layer{Matrix(rows, cols), Vector(rows)};
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) layer.weight(r, c) = data[r * cols + c];
      const auto bias = l.at("bias").at("data").get<std::vector<double>>();
      if (static_cast<int>(bias.size()) != rows) throw ShapeError("bias size mismatch");
      for (int r = 0; r < rows; ++r) layer.bias(r) = bias[r];
      if (!p.layers.empty() && p.layers.back().weight.rows() != cols)
        throw ShapeError("layer shapes do not chain");
      p.layers.push_back(std::move(layer));
    }
    if (p.layers.empty()) throw ShapeError("network has no layers");
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ShapeError(std::string("malformed parameter document: ") + e.what());
  }
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("replay capacity must be positive");
  data_.reserve(std::min<std::size_t>(capacity, 1 << 16));
}

void ReplayBuffer::push(Transition t) {
  if (data_.size() < capacity_) {
    data_.push_back(std::move(t));
  } else {
    data_[cursor_] = std::move(t);
  }
  cursor_ = (cursor_ + 1) % capacity_;
}

const Transition& ReplayBuffer::at(std::size_t i) const {
  if (i >= data_.size()) throw std::out_of_range("replay index out of range");
  if (data_.size() < capacity_) return data_[i];
  return data_[(cursor_ + i) % capacity_];
}

std::vector<const Transition*> ReplayBuffer::sample(std::size_t batch, Rng& rng) const {
  if (data_.size() < batch || data_.empty())
    throw InsufficientSamplesError(
        fmt::format("replay holds {} transitions, batch needs {}", data_.size(), batch));
  std::uniform_int_distribution<std::size_t> pick(0, data_.size() - 1);
  std::vector<const Transition*> out(batch);
  for (auto& p : out) p = &data_[pick(rng)];
  return out;
}

std::vector<Transition> sample_minibatch(const ReplayBuffer& buffer, std::size_t batch, Rng& rng) {
  std::vector<Transition> out;
  out.reserve(batch);
  for (const Transition* t : buffer.sample(batch, rng)) out.push_back(*t);
  return out;
}

}  // namespace syncsim::nn
