#pragma once

// Dense network engine for the fixed encoder/decoder chains: affine layers,
// optional batch normalization, ReLU/linear/softmax activations, a recorded
// forward tape for reverse-mode gradients, and Adam.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vlcae/types.hpp"

namespace vlcae {

enum class Activation { relu, linear, softmax, encoder_output };

std::string to_string(Activation a);

struct LayerSpec {
  int input_dim = 1;
  int output_dim = 1;
  Activation activation = Activation::relu;
  bool batch_norm = false;
};

enum class Mode { train, eval };

struct BatchNormConfig {
  double momentum = 0.99;
  double epsilon = 1e-5;
};

struct BatchNormState {
  Vector gamma;
  Vector beta;
  Vector running_mean;
  Vector running_var;
  // False until running statistics have absorbed at least one training batch.
  bool trained = false;
};

BatchNormState make_batchnorm_state(int features);

/// Values kept from a batch-norm forward pass for the backward pass.
struct BatchNormCache {
  Matrix normalized;
  RowVector inv_std;
  RowVector batch_mean;
  RowVector batch_var;
};

/// Normalizes each column. Train mode uses the batch moments and fills `cache`;
/// eval mode uses the running averages.
Matrix batchnorm_forward(const Matrix& z, const BatchNormState& state, Mode mode,
                         const BatchNormConfig& config, BatchNormCache* cache);

struct BatchNormGrad {
  Matrix input;
  Vector gamma;
  Vector beta;
};

/// Gradient through a train-mode batch-norm forward.
BatchNormGrad batchnorm_backward(const BatchNormCache& cache, const BatchNormState& state,
                                 const Matrix& upstream);

/// Folds one batch's moments into the running averages.
void batchnorm_update_running(BatchNormState& state, const BatchNormCache& cache,
                              const BatchNormConfig& config);

struct DenseLayer {
  LayerSpec spec;
  Matrix weights;  // output_dim x input_dim
  Vector bias;
  std::optional<BatchNormState> bn;
};

struct LayerTape {
  Matrix input;
  Matrix pre_activation;
  Matrix output;
  std::optional<BatchNormCache> bn;
};

/// Activations recorded by a forward pass; valid only for the parameter
/// generation it was taken at.
struct Tape {
  std::vector<LayerTape> layers;
  const void* owner = nullptr;
  std::uint64_t generation = 0;
  Mode mode = Mode::train;
};

struct LayerGrad {
  Matrix weights;
  Vector bias;
  Vector gamma;
  Vector beta;
};

struct NetworkGrad {
  std::vector<LayerGrad> layers;
  Matrix input;  // gradient w.r.t. the network input batch
};

Matrix relu(const Matrix& x);
Matrix softmax_rows(const Matrix& logits);

class Network {
 public:
  Network() = default;
  /// Builds and initializes: He-uniform for ReLU layers, Glorot-uniform for
  /// output layers, zero biases, unit batch-norm scale.
  Network(std::vector<LayerSpec> specs, Rng& rng, BatchNormConfig bn_config = {});
  /// Wraps existing layers (checkpoint loading, hand-built test networks).
  Network(std::vector<DenseLayer> layers, BatchNormConfig bn_config = {});

  int input_dim() const;
  int output_dim() const;
  const std::vector<DenseLayer>& layers() const { return layers_; }
  const BatchNormConfig& bn_config() const { return bn_config_; }

  /// Batch forward; rows are samples. Running statistics are not touched.
  Matrix forward(const Matrix& x, Mode mode, Tape* tape = nullptr) const;

  /// Gradient given dLoss/dOutput (output after the final activation).
  NetworkGrad backward(const Tape& tape, const Matrix& upstream) const;
  /// Gradient given dLoss/dPreActivation of the final layer, e.g. the fused
  /// softmax/cross-entropy gradient.
  NetworkGrad backward_from_logits(const Tape& tape, const Matrix& d_logits) const;

  void update_running_stats(const Tape& tape);

  /// Mutable views of every trainable tensor (weights, bias, gamma, beta per
  /// layer). Taking them invalidates outstanding tapes.
  std::vector<std::span<double>> parameter_views();
  std::vector<std::span<const double>> parameter_views() const;
  static std::vector<std::span<const double>> gradient_views(const NetworkGrad& grad);

  /// Mutable layer access for tests and loaders; invalidates tapes.
  std::vector<DenseLayer>& mutable_layers();

 private:
  NetworkGrad backward_impl(const Tape& tape, Matrix delta, bool delta_is_pre) const;
  void check_chain() const;

  std::vector<DenseLayer> layers_;
  BatchNormConfig bn_config_;
  std::uint64_t generation_ = 0;
};

/// Hidden-layer widths for the encoder and decoder.
struct Architecture {
  std::vector<int> encoder_hidden;
  std::vector<int> decoder_hidden;
};

enum class ArchitecturePreset { n8, n12, isi };

/// n8: (2M^2, M^2, M^2/2); n12: (24M^2, 12M^2, 12M^2, 6M^2);
/// isi: (32M^2, 16M^2, 8M^2, 4M^2, M^2). Decoders mirror the encoder.
Architecture make_architecture(ArchitecturePreset preset, int messages);
ArchitecturePreset parse_architecture_preset(const std::string& name);
std::string to_string(ArchitecturePreset p);

struct ModelParams {
  int codeword_length = 0;  // N
  int messages = 0;         // M
  bool csi_input = false;   // decoder receives vec(H)
  Network encoder;
  Network decoder;

  int decoder_input_dim() const;
};

ModelParams build_model(int codeword_length, int messages, const Architecture& arch,
                        bool csi_input, bool batch_norm, Rng& rng,
                        BatchNormConfig bn_config = {});

/// Checks all dimension invariants of the encoder/decoder pair.
void validate_model(const ModelParams& params);

/// Encoder input row [one-hot(message), dimming / N].
RowVector encoder_input(int messages, int codeword_length, int message, double dimming);

/// Decoder input row [received, dimming / N, vec(H) if csi].
RowVector decoder_input(const RowVector& received, double dimming, int codeword_length,
                        const Matrix* csi);

/// Pre-binarization encoder output u for one (message, dimming); message is 0-based.
RowVector forward_encoder(const ModelParams& params, int message, double dimming, Mode mode);

/// Decoder posterior over messages for one received vector.
RowVector forward_decoder(const ModelParams& params, const RowVector& received, double dimming,
                          const Matrix* csi, Mode mode);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::vector<Vector> first_moment;
  std::vector<Vector> second_moment;
  std::int64_t step_count = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

AdamState make_adam_state(const std::vector<std::span<const double>>& shapes,
                          AdamConfig config = {});

/// Bias-corrected Adam update in place. `ascent` negates the gradient so the
/// same rule climbs instead of descends. Throws NumericalError on a
/// non-finite gradient before modifying anything.
void adam_step(const std::vector<std::span<double>>& params,
               const std::vector<std::span<const double>>& grads, AdamState& state,
               double learning_rate, bool ascent);

}  // namespace vlcae
