#include "vlcae/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <limits>
#include <sstream>

#include "vlcae/error.hpp"

namespace vlcae {

std::int64_t TrainConfig::effective_train_samples() const {
  return train_samples > 0 ? train_samples : static_cast<std::int64_t>(500000) * messages;
}

std::int64_t TrainConfig::iterations() const {
  const std::int64_t per_epoch = (effective_train_samples() + batch_size - 1) / batch_size;
  return per_epoch * std::max(1, epochs);
}

Architecture TrainConfig::resolved_architecture() const {
  Architecture arch = make_architecture(architecture, messages);
  if (!encoder_hidden.empty()) arch.encoder_hidden = encoder_hidden;
  if (!decoder_hidden.empty()) arch.decoder_hidden = decoder_hidden;
  return arch;
}

void TrainConfig::validate() const {
  if (codeword_length < 1) throw ConfigError("codeword_length must be >= 1");
  if (messages < 2) throw ConfigError("messages must be >= 2");
  if (dimming_set.empty()) throw ConfigError("dimming set must not be empty");
  for (std::size_t i = 0; i < dimming_set.size(); ++i) {
    const double d = dimming_set[i];
    if (!(d > 0.0 && d < codeword_length)) {
      throw ConfigError("dimming targets must lie strictly between 0 and N");
    }
    if (i > 0 && !(d > dimming_set[i - 1])) {
      throw ConfigError("dimming set must be strictly increasing");
    }
  }
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (!(dual_learning_rate >= 0.0)) throw ConfigError("dual_learning_rate must be >= 0");
  if (validation_samples < 1) throw ConfigError("validation_samples must be >= 1");
  if (validation_cadence < 1) throw ConfigError("validation_cadence must be >= 1");
  if (!(feasibility_tolerance >= 0.0)) throw ConfigError("feasibility_tolerance must be >= 0");
  if (!(rho >= 0.0)) throw ConfigError("rho must be >= 0");
  if (penalty_mu && !(*penalty_mu >= 0.0)) throw ConfigError("penalty mu must be >= 0");
  if (!(binarizer_bound > 0.0)) throw ConfigError("binarizer bound must be > 0");
  channel.validate(codeword_length);
  led.validate();
  for (int w : encoder_hidden) {
    if (w < 1) throw ConfigError("encoder hidden widths must be >= 1");
  }
  for (int w : decoder_hidden) {
    if (w < 1) throw ConfigError("decoder hidden widths must be >= 1");
  }
}

Batch make_batch(const TrainConfig& config, Rng& rng) {
  const int m = config.messages;
  const int nd = static_cast<int>(config.dimming_set.size());
  Batch batch;
  batch.messages.reserve(static_cast<std::size_t>(config.batch_size));
  batch.dimming_index.reserve(static_cast<std::size_t>(config.batch_size));
  if (config.batch_size >= m * nd) {
    for (int di = 0; di < nd; ++di) {
      for (int b = 0; b < m; ++b) {
        batch.messages.push_back(b);
        batch.dimming_index.push_back(di);
      }
    }
  }
  std::uniform_int_distribution<int> pick_b(0, m - 1);
  std::uniform_int_distribution<int> pick_d(0, nd - 1);
  while (batch.size() < config.batch_size) {
    batch.messages.push_back(pick_b(rng));
    batch.dimming_index.push_back(pick_d(rng));
  }
  return batch;
}

BatchRealization realize_batch(Batch batch, const TrainConfig& config, Rng& rng) {
  const int rows = batch.size();
  const int n = config.codeword_length;
  BatchRealization r;
  r.batch = std::move(batch);
  r.uniforms.resize(rows, n);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (Eigen::Index i = 0; i < r.uniforms.size(); ++i) r.uniforms.data()[i] = unif(rng);
  if (config.channel.kind != ChannelKind::identity) {
    r.channels.reserve(static_cast<std::size_t>(rows));
    for (int j = 0; j < rows; ++j) r.channels.push_back(config.channel.sample_matrix(n, rng));
  }
  r.noise.resize(rows, n);
  std::normal_distribution<double> gauss(0.0, std::sqrt(config.channel.noise_variance));
  for (Eigen::Index i = 0; i < r.noise.size(); ++i) r.noise.data()[i] = gauss(rng);
  return r;
}

double cross_entropy_cost(const Matrix& probabilities, const std::vector<int>& labels) {
  if (static_cast<std::size_t>(probabilities.rows()) != labels.size() || labels.empty()) {
    throw ConfigError("cross_entropy_cost: label count must match probability rows");
  }
  constexpr double floor = 1e-300;
  static std::atomic<bool> warned{false};
  double total = 0.0;
  for (std::size_t j = 0; j < labels.size(); ++j) {
    double p = probabilities(static_cast<Eigen::Index>(j), labels[j]);
    if (p < floor) {
      if (!warned.exchange(true)) {
        std::cerr << "warning: zero probability at the true label; log argument floored\n";
      }
      p = floor;
    }
    total -= std::log(p);
  }
  return total / static_cast<double>(labels.size());
}

double dimming_constraint(const Matrix& outputs, double offset, const LedModel& led) {
  double total = 0.0;
  for (Eigen::Index b = 0; b < outputs.rows(); ++b) {
    total += led_forward(bernoulli_probabilities(outputs.row(b), offset), led).sum();
  }
  return total / static_cast<double>(outputs.rows());
}

double lagrangian(double cost, const std::vector<double>& constraint_values,
                  const DualState& duals, const std::vector<double>& targets) {
  if (constraint_values.size() != targets.size() || duals.lambdas.size() != targets.size()) {
    throw ConfigError("lagrangian: one constraint value and multiplier per target required");
  }
  double value = cost;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const double r = constraint_values[i] - targets[i];
    value += duals.lambdas[i] * r + duals.rho * r * r;
  }
  return value;
}

ObjectiveResult evaluate_objective(const ModelParams& params, const BatchRealization& batch,
                                   const TrainConfig& config, const BinarizerSpec& binarizer,
                                   const ObjectiveWeights& weights, Binarization mode,
                                   bool compute_gradients) {
  const int rows = batch.batch.size();
  const int n = params.codeword_length;
  const int m = params.messages;
  const auto& targets = config.dimming_set;
  const int nd = static_cast<int>(targets.size());
  if (weights.linear.size() != targets.size()) {
    throw ConfigError("objective weights: one multiplier per dimming target required");
  }
  if (!batch.channels.empty() && static_cast<int>(batch.channels.size()) != rows) {
    throw ConfigError("batch realization: one channel per sample required");
  }
  const bool linear_led = config.led.is_linear();

  std::vector<double> offsets;
  for (double d : targets) offsets.push_back(binarizer.offset(d));

  ObjectiveResult res;
  Matrix xe(rows, m + 1);
  for (int j = 0; j < rows; ++j) {
    xe.row(j) = encoder_input(m, n, batch.batch.messages[static_cast<std::size_t>(j)],
                              targets[static_cast<std::size_t>(batch.batch.dimming_index[j])]);
  }
  const Matrix u = params.encoder.forward(xe, Mode::train, &res.encoder_tape);

  Matrix h(rows, n);
  Matrix s(rows, n);
  Matrix xd(rows, params.decoder_input_dim());
  std::vector<double> power(static_cast<std::size_t>(rows));
  for (int j = 0; j < rows; ++j) {
    const int di = batch.batch.dimming_index[static_cast<std::size_t>(j)];
    h.row(j) = bernoulli_probabilities(u.row(j), offsets[static_cast<std::size_t>(di)]);
    if (mode == Binarization::stochastic) {
      for (int i = 0; i < n; ++i) s(j, i) = batch.uniforms(j, i) < h(j, i) ? 1.0 : 0.0;
    } else {
      s.row(j) = h.row(j);
    }
    power[static_cast<std::size_t>(j)] = linear_led ? h.row(j).sum()
                                                    : led_forward(h.row(j), config.led).sum();
    RowVector r = led_forward(s.row(j), config.led);
    const Matrix* channel = batch.channels.empty() ? nullptr : &batch.channels[static_cast<std::size_t>(j)];
    if (channel) r = r * channel->transpose();
    r += batch.noise.row(j);
    xd.row(j) = decoder_input(r, targets[static_cast<std::size_t>(di)], n,
                              params.csi_input ? channel : nullptr);
    if (params.csi_input && !channel) {
      const Matrix identity = Matrix::Identity(n, n);
      xd.row(j) = decoder_input(r, targets[static_cast<std::size_t>(di)], n, &identity);
    }
  }
  const Matrix probs = params.decoder.forward(xd, Mode::train, &res.decoder_tape);
  res.cost = cross_entropy_cost(probs, batch.batch.messages);

  // Group means per (d, b): F_d averages over the messages present for d.
  std::vector<int> counts(static_cast<std::size_t>(nd * m), 0);
  std::vector<double> sums(static_cast<std::size_t>(nd * m), 0.0);
  for (int j = 0; j < rows; ++j) {
    const auto key = static_cast<std::size_t>(batch.batch.dimming_index[static_cast<std::size_t>(j)] * m +
                                              batch.batch.messages[static_cast<std::size_t>(j)]);
    ++counts[key];
    sums[key] += power[static_cast<std::size_t>(j)];
  }
  std::vector<int> present(static_cast<std::size_t>(nd), 0);
  res.constraint_values.assign(static_cast<std::size_t>(nd), 0.0);
  for (int di = 0; di < nd; ++di) {
    double acc = 0.0;
    for (int b = 0; b < m; ++b) {
      const auto key = static_cast<std::size_t>(di * m + b);
      if (counts[key] > 0) {
        ++present[static_cast<std::size_t>(di)];
        acc += sums[key] / counts[key];
      }
    }
    const auto d = static_cast<std::size_t>(di);
    res.constraint_values[d] = present[d] > 0 ? acc / present[d] : targets[d];
  }
  res.value = res.cost;
  std::vector<double> coef(static_cast<std::size_t>(nd));
  for (std::size_t d = 0; d < static_cast<std::size_t>(nd); ++d) {
    const double r = res.constraint_values[d] - targets[d];
    res.value += weights.linear[d] * r + weights.quadratic * r * r;
    coef[d] = weights.linear[d] + 2.0 * weights.quadratic * r;
  }
  if (!compute_gradients) return res;

  Matrix d_logits = probs;
  for (int j = 0; j < rows; ++j) d_logits(j, batch.batch.messages[static_cast<std::size_t>(j)]) -= 1.0;
  d_logits /= static_cast<double>(rows);
  res.decoder_grad = params.decoder.backward_from_logits(res.decoder_tape, d_logits);

  const RowVector ones = RowVector::Ones(n);
  Matrix du(rows, n);
  for (int j = 0; j < rows; ++j) {
    const auto di = static_cast<std::size_t>(batch.batch.dimming_index[static_cast<std::size_t>(j)]);
    RowVector grad = res.decoder_grad.input.row(j).head(n);
    if (!batch.channels.empty()) grad = grad * batch.channels[static_cast<std::size_t>(j)];
    if (!linear_led) grad = led_derivative(s.row(j), config.led).apply_transpose(grad);
    // straight-through: ds/dh = 1
    const auto key = di * static_cast<std::size_t>(m) +
                     static_cast<std::size_t>(batch.batch.messages[static_cast<std::size_t>(j)]);
    const double share = 1.0 / (present[di] * counts[key]);
    const RowVector dpower =
        linear_led ? ones : led_derivative(h.row(j), config.led).apply_transpose(ones);
    grad += (coef[di] * share) * dpower;
    du.row(j) = ste_backward(h.row(j), grad);
  }
  res.encoder_grad = params.encoder.backward(res.encoder_tape, du);
  return res;
}

TrainingState init_training_state(const TrainConfig& config, Rng& rng) {
  TrainingState st;
  st.params = build_model(config.codeword_length, config.messages, config.resolved_architecture(),
                          config.csi_input, config.batch_norm, rng);
  st.duals.lambdas.assign(config.dimming_set.size(), 0.0);
  st.duals.rho = config.rho;
  const auto& enc = st.params.encoder;
  const auto& dec = st.params.decoder;
  st.encoder_adam = make_adam_state(enc.parameter_views());
  st.decoder_adam = make_adam_state(dec.parameter_views());
  st.dual_adam = make_adam_state({std::span<const double>(st.duals.lambdas)});
  return st;
}

namespace {

StepDiagnostics descend(TrainingState& state, const BatchRealization& batch,
                        const TrainConfig& config, const BinarizerSpec& binarizer,
                        const ObjectiveWeights& weights) {
  ObjectiveResult res = evaluate_objective(state.params, batch, config, binarizer, weights,
                                           Binarization::stochastic);
  if (!std::isfinite(res.value)) {
    throw NumericalError("non-finite training objective");
  }
  state.params.encoder.update_running_stats(res.encoder_tape);
  state.params.decoder.update_running_stats(res.decoder_tape);
  adam_step(state.params.encoder.parameter_views(), Network::gradient_views(res.encoder_grad),
            state.encoder_adam, config.learning_rate, false);
  adam_step(state.params.decoder.parameter_views(), Network::gradient_views(res.decoder_grad),
            state.decoder_adam, config.learning_rate, false);
  StepDiagnostics diag;
  diag.cost = res.cost;
  diag.objective = res.value;
  diag.constraint_values = res.constraint_values;
  for (std::size_t d = 0; d < config.dimming_set.size(); ++d) {
    diag.residuals.push_back(res.constraint_values[d] - config.dimming_set[d]);
  }
  return diag;
}

}  // namespace

StepDiagnostics primal_dual_step(TrainingState& state, const BatchRealization& batch,
                                 const TrainConfig& config, const BinarizerSpec& binarizer) {
  const ObjectiveWeights weights{state.duals.lambdas, state.duals.rho};
  StepDiagnostics diag = descend(state, batch, config, binarizer, weights);
  adam_step({std::span<double>(state.duals.lambdas)},
            {std::span<const double>(diag.residuals)}, state.dual_adam,
            config.dual_learning_rate, true);
  if (config.clamp_duals) {
    for (double& l : state.duals.lambdas) l = std::max(l, 0.0);
  }
  return diag;
}

StepDiagnostics penalty_step(TrainingState& state, const BatchRealization& batch, double mu,
                             const TrainConfig& config, const BinarizerSpec& binarizer) {
  const ObjectiveWeights weights{std::vector<double>(config.dimming_set.size(), 0.0), mu};
  return descend(state, batch, config, binarizer, weights);
}

ValidationSet make_validation_set(const TrainConfig& config, Rng& rng) {
  ValidationSet v;
  const int count = config.validation_samples;
  const int n = config.codeword_length;
  std::uniform_int_distribution<int> pick_b(0, config.messages - 1);
  std::uniform_int_distribution<int> pick_d(0, static_cast<int>(config.dimming_set.size()) - 1);
  for (int j = 0; j < count; ++j) {
    v.messages.push_back(pick_b(rng));
    v.dimming_index.push_back(pick_d(rng));
  }
  if (config.channel.kind != ChannelKind::identity) {
    for (int j = 0; j < count; ++j) v.channels.push_back(config.channel.sample_matrix(n, rng));
  }
  v.noise.resize(count, n);
  std::normal_distribution<double> gauss(0.0, std::sqrt(config.channel.noise_variance));
  for (Eigen::Index i = 0; i < v.noise.size(); ++i) v.noise.data()[i] = gauss(rng);
  return v;
}

double codebook_dimming_metric(const Codebook& codebook, const LedModel& led) {
  return led.is_linear() ? audit(codebook).average_weight : average_optical_power(codebook, led);
}

ValidationResult screen_feasibility(const ModelParams& params, const TrainConfig& config,
                                    const BinarizerSpec& binarizer) {
  ValidationResult v;
  for (double d : config.dimming_set) {
    const double metric =
        codebook_dimming_metric(extract_codebook(params, binarizer, d), config.led);
    v.constraint_values.push_back(metric);
    v.residuals.push_back(metric - d);
    v.max_abs_residual = std::max(v.max_abs_residual, std::abs(metric - d));
  }
  v.feasible = v.max_abs_residual <= config.feasibility_tolerance;
  return v;
}

ValidationResult validate(const ModelParams& params, const ObjectiveWeights& weights,
                          const ValidationSet& set, const TrainConfig& config,
                          const BinarizerSpec& binarizer) {
  const auto& targets = config.dimming_set;
  const int n = params.codeword_length;
  ValidationResult v;
  std::vector<Matrix> images;  // g(s_b) per dimming target, M x N
  for (std::size_t d = 0; d < targets.size(); ++d) {
    const Codebook cb = extract_codebook(params, binarizer, targets[d]);
    const double metric = codebook_dimming_metric(cb, config.led);
    v.constraint_values.push_back(metric);
    v.residuals.push_back(metric - targets[d]);
    v.max_abs_residual = std::max(v.max_abs_residual, std::abs(metric - targets[d]));
    Matrix img(cb.messages(), n);
    for (int b = 0; b < cb.messages(); ++b) img.row(b) = led_forward(cb.row(b), config.led);
    images.push_back(std::move(img));
  }
  v.feasible = v.max_abs_residual <= config.feasibility_tolerance;

  const int rows = static_cast<int>(set.messages.size());
  Matrix xd(rows, params.decoder_input_dim());
  const Matrix identity = Matrix::Identity(n, n);
  for (int j = 0; j < rows; ++j) {
    const auto di = static_cast<std::size_t>(set.dimming_index[static_cast<std::size_t>(j)]);
    RowVector r = images[di].row(set.messages[static_cast<std::size_t>(j)]);
    const Matrix* channel = set.channels.empty() ? nullptr : &set.channels[static_cast<std::size_t>(j)];
    if (channel) r = r * channel->transpose();
    r += set.noise.row(j);
    const Matrix* csi = params.csi_input ? (channel ? channel : &identity) : nullptr;
    xd.row(j) = decoder_input(r, targets[di], n, csi);
  }
  const Matrix probs = params.decoder.forward(xd, Mode::eval);
  v.cost = cross_entropy_cost(probs, set.messages);
  v.objective = v.cost;
  for (std::size_t d = 0; d < targets.size(); ++d) {
    v.objective += weights.linear[d] * v.residuals[d] +
                   weights.quadratic * v.residuals[d] * v.residuals[d];
  }
  return v;
}

TrainResult train(const TrainConfig& config, const TraceCallback& on_row) {
  config.validate();
  const auto started = std::chrono::steady_clock::now();
  Rng init_rng = make_rng(config.seed, 0);
  Rng train_rng = make_rng(config.seed, 1);
  Rng validation_rng = make_rng(config.seed, 2);

  TrainingState state = init_training_state(config, init_rng);
  const BinarizerSpec binarizer(config.dimming_set, config.codeword_length,
                                config.binarizer_bound);
  const ValidationSet vset = make_validation_set(config, validation_rng);
  const bool penalty = config.penalty_mu.has_value();
  const std::size_t nd = config.dimming_set.size();

  TrainResult result;
  result.binarizer = binarizer;
  result.report.seed = config.seed;
  TrainReport& report = result.report;

  double best = std::numeric_limits<double>::infinity();
  std::optional<TrainingState> best_state;
  // Closest-to-feasible fallback while nothing feasible has been seen.
  std::optional<TrainingState> fallback;
  double fallback_residual = std::numeric_limits<double>::infinity();
  double fallback_objective = std::numeric_limits<double>::infinity();
  double fallback_cost = 0.0;
  std::int64_t fallback_iteration = -1;

  const std::int64_t total = config.iterations();
  for (std::int64_t t = 1; t <= total; ++t) {
    BatchRealization batch = realize_batch(make_batch(config, train_rng), config, train_rng);
    TraceRow row;
    row.iteration = t;
    try {
      const StepDiagnostics diag =
          penalty ? penalty_step(state, batch, *config.penalty_mu, config, binarizer)
                  : primal_dual_step(state, batch, config, binarizer);
      row.cost = diag.cost;
      row.objective = diag.objective;
      row.residuals = diag.residuals;
    } catch (const NumericalError& e) {
      report.aborted = true;
      report.abort_reason = e.what();
      break;
    }
    row.lambdas = state.duals.lambdas;
    const bool scheduled = t % config.validation_cadence == 0 || t == total;
    if (scheduled ||
        (config.screen_every_step && screen_feasibility(state.params, config, binarizer).feasible)) {
      const ObjectiveWeights weights =
          penalty ? ObjectiveWeights{std::vector<double>(nd, 0.0), *config.penalty_mu}
                  : ObjectiveWeights{state.duals.lambdas, state.duals.rho};
      ValidationResult v = validate(state.params, weights, vset, config, binarizer);
      if (v.feasible && v.objective <= best) {
        best = v.objective;
        best_state = state;
        report.best_iteration = t;
        report.best_objective = v.objective;
        report.best_cost = v.cost;
        report.checkpoints.push_back({t, v.objective});
      } else if (!best_state &&
                 (v.max_abs_residual < fallback_residual ||
                  (v.max_abs_residual == fallback_residual && v.objective < fallback_objective))) {
        fallback = state;
        fallback_residual = v.max_abs_residual;
        fallback_objective = v.objective;
        fallback_cost = v.cost;
        fallback_iteration = t;
      }
      row.validation = std::move(v);
    }
    if (on_row) on_row(row);
    report.trace.push_back(std::move(row));
  }

  if (best_state) {
    report.feasible = true;
  } else if (fallback) {
    best_state = std::move(fallback);
    report.best_iteration = fallback_iteration;
    report.best_objective = fallback_objective;
    report.best_cost = fallback_cost;
  } else {
    best_state = std::move(state);
  }
  result.params = std::move(best_state->params);
  result.duals = std::move(best_state->duals);
  for (double d : config.dimming_set) {
    result.report.final_residuals.push_back(
        codebook_dimming_metric(extract_codebook(result.params, binarizer, d), config.led) - d);
  }
  report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

Codebook codebook_for(const ModelParams& params, const BinarizerSpec& binarizer,
                      const TrainConfig& config, double dimming) {
  const auto& ds = config.dimming_set;
  if (std::find(ds.begin(), ds.end(), dimming) != ds.end()) {
    return extract_codebook(params, binarizer, dimming);
  }
  const double mirrored = config.codeword_length - dimming;
  if (std::find(ds.begin(), ds.end(), mirrored) != ds.end()) {
    return flip_complement(extract_codebook(params, binarizer, mirrored));
  }
  std::ostringstream msg;
  msg << "dimming " << dimming << " is neither a trained target nor the complement of one";
  throw DomainError(msg.str());
}

namespace {

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

std::string trace_header(const std::vector<double>& dimming_set) {
  std::string h = "iteration,cost,lagrangian";
  for (double d : dimming_set) h += ",residual_" + num(d);
  for (double d : dimming_set) h += ",lambda_" + num(d);
  h += ",val_cost,val_lagrangian,val_max_residual,val_feasible";
  return h;
}

std::string format_trace_row(const TraceRow& row) {
  std::string s = std::to_string(row.iteration) + "," + num(row.cost) + "," + num(row.objective);
  for (double r : row.residuals) s += "," + num(r);
  for (double l : row.lambdas) s += "," + num(l);
  if (row.validation) {
    s += "," + num(row.validation->cost) + "," + num(row.validation->objective) + "," +
         num(row.validation->max_abs_residual) + "," + (row.validation->feasible ? "1" : "0");
  } else {
    s += ",,,,";
  }
  return s;
}

}  // namespace vlcae
