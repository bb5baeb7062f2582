#pragma once

// Constrained end-to-end training of the encoder/decoder pair under multiple
// average-dimming equality constraints F_d = d.
//
// The primal-dual trainer minimizes the augmented Lagrangian
//   L = C + sum_d lambda_d (F_d - d) + rho sum_d (F_d - d)^2
// by Adam descent on the network parameters and Adam ascent on lambda, with
// the checkpoint restricted to iterates whose deterministic codebooks meet
// every dimming target. The penalty trainer replaces the multiplier term by a
// fixed mu sum_d (F_d - d)^2.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "vlcae/binarizer.hpp"
#include "vlcae/codebook.hpp"
#include "vlcae/nn.hpp"
#include "vlcae/optics.hpp"

namespace vlcae {

struct TrainConfig {
  int codeword_length = 8;
  int messages = 4;
  std::vector<double> dimming_set{2.0, 2.5, 3.0, 3.5, 4.0};

  ArchitecturePreset architecture = ArchitecturePreset::n8;
  std::vector<int> encoder_hidden;  // overrides the preset when non-empty
  std::vector<int> decoder_hidden;
  bool batch_norm = true;

  int batch_size = 500;
  double learning_rate = 1e-3;
  double dual_learning_rate = 1e-3;
  std::int64_t train_samples = 0;  // 0 selects 5e5 * M
  int epochs = 1;
  int validation_samples = 10000;
  int validation_cadence = 100;
  // Extract codebooks after every step and run the full validation whenever
  // they are feasible, so no feasible iterate escapes the checkpoint rule.
  bool screen_every_step = true;
  double feasibility_tolerance = 0.05;
  double rho = 3e-6;
  std::optional<double> penalty_mu;  // set: penalty trainer instead of primal-dual
  bool clamp_duals = false;
  double binarizer_bound = BinarizerSpec::default_bound;
  std::uint64_t seed = 1;

  ChannelSpec channel;  // channel.noise_variance is the training noise
  LedModel led;
  bool csi_input = false;  // decoder receives vec(H)

  std::int64_t effective_train_samples() const;
  std::int64_t iterations() const;
  Architecture resolved_architecture() const;
  void validate() const;
};

struct DualState {
  std::vector<double> lambdas;  // one per dimming target, in dimming_set order
  double rho = 3e-6;
};

/// One mini-batch of (message, dimming) pairs.
struct Batch {
  std::vector<int> messages;
  std::vector<int> dimming_index;
  int size() const { return static_cast<int>(messages.size()); }
};

/// Every random quantity a step consumes, drawn up front so that a step can
/// be re-evaluated exactly (finite-difference checks).
struct BatchRealization {
  Batch batch;
  Matrix uniforms;               // B x N, Bernoulli draws for binarization
  Matrix noise;                  // B x N, already scaled by sigma
  std::vector<Matrix> channels;  // B matrices; empty means identity for all
};

/// Stratified when batch_size >= M * |D| (every pair once, the rest uniform),
/// uniform otherwise.
Batch make_batch(const TrainConfig& config, Rng& rng);
BatchRealization realize_batch(Batch batch, const TrainConfig& config, Rng& rng);

/// -(1/J) sum_j log p_j[label_j]; probabilities floored at 1e-300.
double cross_entropy_cost(const Matrix& probabilities, const std::vector<int>& labels);

/// F_d for one dimming target from the encoder outputs of all M messages
/// (rows of `outputs`): (1/M) sum_b sum_i [g(h(u_b))]_i.
double dimming_constraint(const Matrix& outputs, double offset, const LedModel& led);

/// C + sum_d lambda_d (F_d - d) + rho sum_d (F_d - d)^2.
double lagrangian(double cost, const std::vector<double>& constraint_values,
                  const DualState& duals, const std::vector<double>& targets);

/// Multiplier and quadratic weights of the constraint residuals in the
/// training objective.
struct ObjectiveWeights {
  std::vector<double> linear;
  double quadratic = 0.0;
};

enum class Binarization { stochastic, surrogate };

struct ObjectiveResult {
  double cost = 0.0;
  double value = 0.0;
  std::vector<double> constraint_values;  // mini-batch F_d estimates
  NetworkGrad encoder_grad;
  NetworkGrad decoder_grad;
  Tape encoder_tape;
  Tape decoder_tape;
};

/// Forward and backward pass of the training objective on one realization.
/// `surrogate` replaces the Bernoulli sample by its expectation h(u), making
/// the objective a smooth deterministic function of the parameters.
ObjectiveResult evaluate_objective(const ModelParams& params, const BatchRealization& batch,
                                   const TrainConfig& config, const BinarizerSpec& binarizer,
                                   const ObjectiveWeights& weights, Binarization mode,
                                   bool compute_gradients = true);

struct TrainingState {
  ModelParams params;
  DualState duals;
  AdamState encoder_adam;
  AdamState decoder_adam;
  AdamState dual_adam;
};

TrainingState init_training_state(const TrainConfig& config, Rng& rng);

struct StepDiagnostics {
  double cost = 0.0;
  double objective = 0.0;
  std::vector<double> constraint_values;
  std::vector<double> residuals;  // F_d - d, also the lambda gradient
};

/// One consolidated update: descent on both networks, ascent on lambda.
StepDiagnostics primal_dual_step(TrainingState& state, const BatchRealization& batch,
                                 const TrainConfig& config, const BinarizerSpec& binarizer);

/// One descent step on C + mu sum_d (F_d - d)^2; duals untouched.
StepDiagnostics penalty_step(TrainingState& state, const BatchRealization& batch, double mu,
                             const TrainConfig& config, const BinarizerSpec& binarizer);

/// Fixed held-out samples drawn from an independent stream.
struct ValidationSet {
  std::vector<int> messages;
  std::vector<int> dimming_index;
  Matrix noise;
  std::vector<Matrix> channels;
};

ValidationSet make_validation_set(const TrainConfig& config, Rng& rng);

struct ValidationResult {
  double cost = 0.0;
  double objective = 0.0;
  std::vector<double> constraint_values;  // from deterministic codebooks
  std::vector<double> residuals;
  double max_abs_residual = 0.0;
  bool feasible = false;
};

/// Deterministic-binarization dimming metric of a codebook: average weight for
/// a linear LED, average optical power otherwise.
double codebook_dimming_metric(const Codebook& codebook, const LedModel& led);

ValidationResult validate(const ModelParams& params, const ObjectiveWeights& weights,
                          const ValidationSet& set, const TrainConfig& config,
                          const BinarizerSpec& binarizer);

/// Codebook-only part of validate(): dimming metrics, residuals, feasibility.
ValidationResult screen_feasibility(const ModelParams& params, const TrainConfig& config,
                                    const BinarizerSpec& binarizer);

struct TraceRow {
  std::int64_t iteration = 0;
  double cost = 0.0;
  double objective = 0.0;
  std::vector<double> residuals;
  std::vector<double> lambdas;
  std::optional<ValidationResult> validation;
};

struct CheckpointEvent {
  std::int64_t iteration = 0;
  double objective = 0.0;
};

struct TrainReport {
  std::vector<TraceRow> trace;
  std::vector<CheckpointEvent> checkpoints;
  bool feasible = false;
  std::int64_t best_iteration = -1;
  double best_objective = 0.0;
  double best_cost = 0.0;
  std::vector<double> final_residuals;  // of the returned model
  double wall_clock_seconds = 0.0;
  std::uint64_t seed = 0;
  bool aborted = false;
  std::string abort_reason;
};

struct TrainResult {
  ModelParams params;
  DualState duals;
  BinarizerSpec binarizer;
  TrainReport report;
};

using TraceCallback = std::function<void(const TraceRow&)>;

/// Runs the full loop and returns the feasibility-gated best checkpoint. When
/// no validated iterate is feasible the closest one is returned and
/// report.feasible is false.
TrainResult train(const TrainConfig& config, const TraceCallback& on_row = {});

/// Codebook for any d in D, or for N - d by complementing the codebook of d.
Codebook codebook_for(const ModelParams& params, const BinarizerSpec& binarizer,
                      const TrainConfig& config, double dimming);

/// Comma-separated trace header and rows: iteration, cost, lagrangian,
/// residual_d..., lambda_d..., then validation columns (empty when not validated).
std::string trace_header(const std::vector<double>& dimming_set);
std::string format_trace_row(const TraceRow& row);

}  // namespace vlcae
