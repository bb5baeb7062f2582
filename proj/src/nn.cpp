#include "vlcae/nn.hpp"

#include <atomic>
#include <cmath>
#include <iostream>
#include <limits>
#include <sstream>

#include "vlcae/error.hpp"

namespace vlcae {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::linear: return "linear";
    case Activation::softmax: return "softmax";
    case Activation::encoder_output: return "encoder-output";
  }
  return "?";
}

namespace {

bool is_output_activation(Activation a) {
  return a == Activation::linear || a == Activation::softmax || a == Activation::encoder_output;
}

void warn_untrained_bn() {
  static std::atomic<bool> warned{false};
  if (!warned.exchange(true)) {
    std::cerr << "warning: batch-norm evaluated before any training step; "
                 "using initial statistics (mean 0, var 1)\n";
  }
}

}  // namespace

BatchNormState make_batchnorm_state(int features) {
  BatchNormState s;
  s.gamma = Vector::Ones(features);
  s.beta = Vector::Zero(features);
  s.running_mean = Vector::Zero(features);
  s.running_var = Vector::Ones(features);
  return s;
}

Matrix batchnorm_forward(const Matrix& z, const BatchNormState& state, Mode mode,
                         const BatchNormConfig& config, BatchNormCache* cache) {
  const auto rows = z.rows();
  RowVector mean;
  RowVector var;
  if (mode == Mode::train) {
    if (rows < 1) throw ConfigError("batchnorm_forward: empty batch");
    mean = z.colwise().mean();
    var = (z.rowwise() - mean).array().square().colwise().mean();
  } else {
    if (!state.trained) warn_untrained_bn();
    mean = state.running_mean.transpose();
    var = state.running_var.transpose();
  }
  const RowVector inv_std = (var.array() + config.epsilon).rsqrt().matrix();
  Matrix normalized = (z.rowwise() - mean).array().rowwise() * inv_std.array();
  Matrix out = (normalized.array().rowwise() * state.gamma.transpose().array()).rowwise() +
               state.beta.transpose().array();
  if (cache) {
    cache->normalized = std::move(normalized);
    cache->inv_std = inv_std;
    cache->batch_mean = mean;
    cache->batch_var = var;
  }
  return out;
}

BatchNormGrad batchnorm_backward(const BatchNormCache& cache, const BatchNormState& state,
                                 const Matrix& upstream) {
  const double rows = static_cast<double>(upstream.rows());
  BatchNormGrad g;
  g.beta = upstream.colwise().sum().transpose();
  g.gamma = (upstream.array() * cache.normalized.array()).colwise().sum().transpose();
  const Matrix dxhat = upstream.array().rowwise() * state.gamma.transpose().array();
  const RowVector sum_dxhat = dxhat.colwise().sum();
  const RowVector sum_dxhat_xhat = (dxhat.array() * cache.normalized.array()).colwise().sum();
  Matrix centered = (rows * dxhat).rowwise() - sum_dxhat;
  centered.array() -= cache.normalized.array().rowwise() * sum_dxhat_xhat.array();
  g.input = (centered.array().rowwise() * (cache.inv_std.array() / rows)).matrix();
  return g;
}

void batchnorm_update_running(BatchNormState& state, const BatchNormCache& cache,
                              const BatchNormConfig& config) {
  const double m = config.momentum;
  state.running_mean = m * state.running_mean + (1.0 - m) * cache.batch_mean.transpose();
  state.running_var = m * state.running_var + (1.0 - m) * cache.batch_var.transpose();
  state.trained = true;
}

Matrix relu(const Matrix& x) { return x.cwiseMax(0.0); }

Matrix softmax_rows(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  constexpr double floor = std::numeric_limits<double>::min();
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double mx = logits.row(r).maxCoeff();
    RowVector e = (logits.row(r).array() - mx).exp().matrix();
    e /= e.sum();
    p.row(r) = e.cwiseMax(floor);
  }
  return p;
}

Network::Network(std::vector<LayerSpec> specs, Rng& rng, BatchNormConfig bn_config)
    : bn_config_(bn_config) {
  layers_.reserve(specs.size());
  for (const auto& spec : specs) {
    if (spec.input_dim < 1 || spec.output_dim < 1) {
      throw ConfigError("layer dims must be >= 1");
    }
    DenseLayer layer;
    layer.spec = spec;
    const double fan_in = spec.input_dim;
    const double limit = is_output_activation(spec.activation)
                             ? std::sqrt(6.0 / (fan_in + spec.output_dim))
                             : std::sqrt(6.0 / fan_in);
    std::uniform_real_distribution<double> dist(-limit, limit);
    layer.weights.resize(spec.output_dim, spec.input_dim);
    for (Eigen::Index i = 0; i < layer.weights.size(); ++i) layer.weights.data()[i] = dist(rng);
    layer.bias = Vector::Zero(spec.output_dim);
    if (spec.batch_norm) layer.bn = make_batchnorm_state(spec.output_dim);
    layers_.push_back(std::move(layer));
  }
  check_chain();
}

Network::Network(std::vector<DenseLayer> layers, BatchNormConfig bn_config)
    : layers_(std::move(layers)), bn_config_(bn_config) {
  check_chain();
}

void Network::check_chain() const {
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    if (layer.weights.rows() != layer.spec.output_dim ||
        layer.weights.cols() != layer.spec.input_dim ||
        layer.bias.size() != layer.spec.output_dim) {
      throw ConfigError("layer " + std::to_string(l) + ": parameter shape does not match spec");
    }
    if (layer.spec.batch_norm != layer.bn.has_value()) {
      throw ConfigError("layer " + std::to_string(l) + ": batch-norm state mismatch");
    }
    if (l > 0 && layers_[l - 1].spec.output_dim != layer.spec.input_dim) {
      throw ConfigError("layer " + std::to_string(l) + ": input dim " +
                        std::to_string(layer.spec.input_dim) + " does not chain from " +
                        std::to_string(layers_[l - 1].spec.output_dim));
    }
    if (layer.spec.activation == Activation::softmax && l + 1 != layers_.size()) {
      throw ConfigError("softmax is only allowed on the final layer");
    }
  }
}

int Network::input_dim() const { return layers_.empty() ? 0 : layers_.front().spec.input_dim; }
int Network::output_dim() const { return layers_.empty() ? 0 : layers_.back().spec.output_dim; }

Matrix Network::forward(const Matrix& x, Mode mode, Tape* tape) const {
  if (x.cols() != input_dim()) {
    throw ConfigError("network input has " + std::to_string(x.cols()) + " columns, expected " +
                      std::to_string(input_dim()));
  }
  if (tape) {
    tape->layers.clear();
    tape->layers.reserve(layers_.size());
    tape->owner = this;
    tape->generation = generation_;
    tape->mode = mode;
  }
  Matrix h = x;
  for (const auto& layer : layers_) {
    Matrix z = h * layer.weights.transpose();
    z.rowwise() += layer.bias.transpose();
    std::optional<BatchNormCache> cache;
    if (layer.bn) {
      cache.emplace();
      z = batchnorm_forward(z, *layer.bn, mode, bn_config_, &*cache);
    }
    Matrix out;
    switch (layer.spec.activation) {
      case Activation::relu: out = relu(z); break;
      case Activation::softmax: out = softmax_rows(z); break;
      case Activation::linear:
      case Activation::encoder_output: out = z; break;
    }
    if (tape) {
      tape->layers.push_back(LayerTape{std::move(h), std::move(z), out, std::move(cache)});
    }
    h = std::move(out);
  }
  return h;
}

NetworkGrad Network::backward(const Tape& tape, const Matrix& upstream) const {
  return backward_impl(tape, upstream, false);
}

NetworkGrad Network::backward_from_logits(const Tape& tape, const Matrix& d_logits) const {
  return backward_impl(tape, d_logits, true);
}

NetworkGrad Network::backward_impl(const Tape& tape, Matrix delta, bool delta_is_pre) const {
  if (tape.owner != this || tape.generation != generation_ ||
      tape.layers.size() != layers_.size()) {
    throw InvariantError("backward: tape does not belong to the current parameters (stale tape)");
  }
  NetworkGrad grad;
  grad.layers.resize(layers_.size());
  for (std::size_t idx = layers_.size(); idx-- > 0;) {
    const auto& layer = layers_[idx];
    const auto& rec = tape.layers[idx];
    if (delta.rows() != rec.output.rows() || delta.cols() != rec.output.cols()) {
      throw ConfigError("backward: upstream gradient shape mismatch");
    }
    Matrix dpre;
    if (idx + 1 == layers_.size() && delta_is_pre) {
      dpre = std::move(delta);
    } else {
      switch (layer.spec.activation) {
        case Activation::relu:
          dpre = (rec.pre_activation.array() > 0.0).select(delta, 0.0);
          break;
        case Activation::softmax: {
          const Vector dot = (delta.array() * rec.output.array()).rowwise().sum();
          dpre = rec.output.array() * (delta.colwise() - dot).array();
          break;
        }
        case Activation::linear:
        case Activation::encoder_output: dpre = std::move(delta); break;
      }
    }
    LayerGrad& g = grad.layers[idx];
    Matrix dz;
    if (layer.bn) {
      if (tape.mode == Mode::train) {
        auto bg = batchnorm_backward(*rec.bn, *layer.bn, dpre);
        dz = std::move(bg.input);
        g.gamma = std::move(bg.gamma);
        g.beta = std::move(bg.beta);
      } else {
        g.beta = dpre.colwise().sum().transpose();
        g.gamma = (dpre.array() * rec.bn->normalized.array()).colwise().sum().transpose();
        dz = dpre.array().rowwise() *
             (layer.bn->gamma.transpose().array() * rec.bn->inv_std.array());
      }
    } else {
      dz = std::move(dpre);
    }
    g.weights = dz.transpose() * rec.input;
    g.bias = dz.colwise().sum().transpose();
    delta = dz * layer.weights;
  }
  grad.input = std::move(delta);
  return grad;
}

void Network::update_running_stats(const Tape& tape) {
  if (tape.owner != this || tape.generation != generation_ || tape.mode != Mode::train) {
    throw InvariantError("update_running_stats: needs a current train-mode tape");
  }
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    if (layers_[l].bn) batchnorm_update_running(*layers_[l].bn, *tape.layers[l].bn, bn_config_);
  }
}

std::vector<std::span<double>> Network::parameter_views() {
  ++generation_;
  std::vector<std::span<double>> views;
  for (auto& layer : layers_) {
    views.emplace_back(layer.weights.data(), static_cast<std::size_t>(layer.weights.size()));
    views.emplace_back(layer.bias.data(), static_cast<std::size_t>(layer.bias.size()));
    if (layer.bn) {
      views.emplace_back(layer.bn->gamma.data(), static_cast<std::size_t>(layer.bn->gamma.size()));
      views.emplace_back(layer.bn->beta.data(), static_cast<std::size_t>(layer.bn->beta.size()));
    }
  }
  return views;
}

std::vector<std::span<const double>> Network::parameter_views() const {
  std::vector<std::span<const double>> views;
  for (const auto& layer : layers_) {
    views.emplace_back(layer.weights.data(), static_cast<std::size_t>(layer.weights.size()));
    views.emplace_back(layer.bias.data(), static_cast<std::size_t>(layer.bias.size()));
    if (layer.bn) {
      views.emplace_back(layer.bn->gamma.data(), static_cast<std::size_t>(layer.bn->gamma.size()));
      views.emplace_back(layer.bn->beta.data(), static_cast<std::size_t>(layer.bn->beta.size()));
    }
  }
  return views;
}

std::vector<std::span<const double>> Network::gradient_views(const NetworkGrad& grad) {
  std::vector<std::span<const double>> views;
  for (const auto& g : grad.layers) {
    views.emplace_back(g.weights.data(), static_cast<std::size_t>(g.weights.size()));
    views.emplace_back(g.bias.data(), static_cast<std::size_t>(g.bias.size()));
    if (g.gamma.size() > 0) {
      views.emplace_back(g.gamma.data(), static_cast<std::size_t>(g.gamma.size()));
      views.emplace_back(g.beta.data(), static_cast<std::size_t>(g.beta.size()));
    }
  }
  return views;
}

std::vector<DenseLayer>& Network::mutable_layers() {
  ++generation_;
  return layers_;
}

Architecture make_architecture(ArchitecturePreset preset, int messages) {
  const int sq = messages * messages;
  std::vector<int> enc;
  switch (preset) {
    case ArchitecturePreset::n8: enc = {2 * sq, sq, std::max(1, sq / 2)}; break;
    case ArchitecturePreset::n12: enc = {24 * sq, 12 * sq, 12 * sq, 6 * sq}; break;
    case ArchitecturePreset::isi: enc = {32 * sq, 16 * sq, 8 * sq, 4 * sq, sq}; break;
  }
  return Architecture{enc, std::vector<int>(enc.rbegin(), enc.rend())};
}

ArchitecturePreset parse_architecture_preset(const std::string& name) {
  if (name == "n8") return ArchitecturePreset::n8;
  if (name == "n12") return ArchitecturePreset::n12;
  if (name == "isi") return ArchitecturePreset::isi;
  throw ConfigError("unknown architecture preset '" + name + "' (expected n8, n12, isi)");
}

std::string to_string(ArchitecturePreset p) {
  switch (p) {
    case ArchitecturePreset::n8: return "n8";
    case ArchitecturePreset::n12: return "n12";
    case ArchitecturePreset::isi: return "isi";
  }
  return "?";
}

int ModelParams::decoder_input_dim() const {
  return codeword_length + 1 + (csi_input ? codeword_length * codeword_length : 0);
}

namespace {

std::vector<LayerSpec> chain_specs(int input, const std::vector<int>& hidden, int output,
                                   Activation out_act, bool bn) {
  std::vector<LayerSpec> specs;
  int prev = input;
  for (int width : hidden) {
    specs.push_back({prev, width, Activation::relu, bn});
    prev = width;
  }
  specs.push_back({prev, output, out_act, false});
  return specs;
}

}  // namespace

ModelParams build_model(int codeword_length, int messages, const Architecture& arch,
                        bool csi_input, bool batch_norm, Rng& rng, BatchNormConfig bn_config) {
  if (codeword_length < 1 || messages < 2) {
    throw ConfigError("build_model: need N >= 1 and M >= 2");
  }
  ModelParams p;
  p.codeword_length = codeword_length;
  p.messages = messages;
  p.csi_input = csi_input;
  p.encoder = Network(chain_specs(messages + 1, arch.encoder_hidden, codeword_length,
                                  Activation::encoder_output, batch_norm),
                      rng, bn_config);
  p.decoder = Network(chain_specs(p.decoder_input_dim(), arch.decoder_hidden, messages,
                                  Activation::softmax, batch_norm),
                      rng, bn_config);
  return p;
}

void validate_model(const ModelParams& p) {
  if (p.encoder.input_dim() != p.messages + 1) {
    throw ConfigError("encoder input dim must be M+1");
  }
  if (p.encoder.output_dim() != p.codeword_length) {
    throw ConfigError("encoder output dim must be N");
  }
  if (p.decoder.input_dim() != p.decoder_input_dim()) {
    throw ConfigError("decoder input dim must be " + std::to_string(p.decoder_input_dim()));
  }
  if (p.decoder.output_dim() != p.messages) throw ConfigError("decoder output dim must be M");
  if (p.decoder.layers().back().spec.activation != Activation::softmax) {
    throw ConfigError("decoder must end in softmax");
  }
}

RowVector encoder_input(int messages, int codeword_length, int message, double dimming) {
  if (message < 0 || message >= messages) {
    throw DomainError("message index " + std::to_string(message) + " outside [0, " +
                      std::to_string(messages) + ")");
  }
  RowVector x = RowVector::Zero(messages + 1);
  x(message) = 1.0;
  x(messages) = dimming / codeword_length;
  return x;
}

RowVector decoder_input(const RowVector& received, double dimming, int codeword_length,
                        const Matrix* csi) {
  const Eigen::Index n = received.size();
  RowVector x(n + 1 + (csi ? csi->size() : 0));
  x.head(n) = received;
  x(n) = dimming / codeword_length;
  if (csi) {
    x.tail(csi->size()) = Eigen::Map<const RowVector>(csi->data(), csi->size());
  }
  return x;
}

RowVector forward_encoder(const ModelParams& params, int message, double dimming, Mode mode) {
  if (!(dimming >= 0.0 && dimming <= params.codeword_length)) {
    throw DomainError("dimming outside [0, N]");
  }
  const Matrix x = encoder_input(params.messages, params.codeword_length, message, dimming);
  return params.encoder.forward(x, mode).row(0);
}

RowVector forward_decoder(const ModelParams& params, const RowVector& received, double dimming,
                          const Matrix* csi, Mode mode) {
  if (!received.allFinite()) throw DomainError("received vector is not finite");
  if (csi && !params.csi_input) {
    throw ConfigError("CSI supplied to a decoder built without CSI input");
  }
  if (!csi && params.csi_input) throw ConfigError("decoder expects CSI input");
  if (received.size() != params.codeword_length) throw ConfigError("received length must be N");
  const Matrix x = decoder_input(received, dimming, params.codeword_length, csi);
  return params.decoder.forward(x, mode).row(0);
}

AdamState make_adam_state(const std::vector<std::span<const double>>& shapes,
                          AdamConfig config) {
  AdamState s;
  s.beta1 = config.beta1;
  s.beta2 = config.beta2;
  s.epsilon = config.epsilon;
  for (const auto& v : shapes) {
    s.first_moment.push_back(Vector::Zero(static_cast<Eigen::Index>(v.size())));
    s.second_moment.push_back(Vector::Zero(static_cast<Eigen::Index>(v.size())));
  }
  return s;
}

void adam_step(const std::vector<std::span<double>>& params,
               const std::vector<std::span<const double>>& grads, AdamState& state,
               double learning_rate, bool ascent) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size()) {
    throw ConfigError("adam_step: tensor count mismatch");
  }
  for (std::size_t t = 0; t < params.size(); ++t) {
    if (params[t].size() != grads[t].size() ||
        static_cast<Eigen::Index>(params[t].size()) != state.first_moment[t].size()) {
      throw ConfigError("adam_step: tensor " + std::to_string(t) + " shape mismatch");
    }
    for (std::size_t i = 0; i < grads[t].size(); ++i) {
      if (!std::isfinite(grads[t][i])) {
        std::ostringstream msg;
        msg << "adam_step: non-finite gradient " << grads[t][i] << " in tensor " << t
            << " at index " << i << " (step " << state.step_count << ")";
        throw NumericalError(msg.str());
      }
    }
  }
  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  const double sign = ascent ? -1.0 : 1.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& m = state.first_moment[k];
    auto& v = state.second_moment[k];
    for (std::size_t i = 0; i < params[k].size(); ++i) {
      const auto j = static_cast<Eigen::Index>(i);
      const double g = sign * grads[k][i];
      m(j) = state.beta1 * m(j) + (1.0 - state.beta1) * g;
      v(j) = state.beta2 * v(j) + (1.0 - state.beta2) * g * g;
      const double mhat = m(j) / c1;
      const double vhat = v(j) / c2;
      params[k][i] -= learning_rate * mhat / (std::sqrt(vhat) + state.epsilon);
    }
  }
}

}  // namespace vlcae
