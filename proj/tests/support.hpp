#pragma once

// Shared helpers for the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "vlcae/trainer.hpp"

namespace vlcae::testing {

struct GradCheck {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
};

// Central differences over every scalar parameter of both networks, compared
// with the analytic gradient of the same objective. Relative error uses
// max(|analytic|, |numeric|, floor * max(1, |objective|)) as denominator:
// partials far below the objective's own rounding scale are not resolvable by
// differencing.
inline GradCheck check_objective_gradients(const ModelParams& params,
                                           const BatchRealization& batch,
                                           const TrainConfig& config,
                                           const BinarizerSpec& binarizer,
                                           const ObjectiveWeights& weights, double step = 1e-5,
                                           double floor = 1e-6) {
  const ObjectiveResult analytic =
      evaluate_objective(params, batch, config, binarizer, weights, Binarization::surrogate);
  ModelParams probe = params;
  GradCheck out;
  const double scale = floor * std::max(1.0, std::abs(analytic.value));
  auto run = [&](Network& net, const NetworkGrad& grad) {
    const auto grads = Network::gradient_views(grad);
    const std::size_t tensors = grads.size();
    for (std::size_t t = 0; t < tensors; ++t) {
      for (std::size_t i = 0; i < grads[t].size(); ++i) {
        const double original = net.parameter_views()[t][i];
        net.parameter_views()[t][i] = original + step;
        const double plus = evaluate_objective(probe, batch, config, binarizer, weights,
                                               Binarization::surrogate, false)
                                .value;
        net.parameter_views()[t][i] = original - step;
        const double minus = evaluate_objective(probe, batch, config, binarizer, weights,
                                                Binarization::surrogate, false)
                                 .value;
        net.parameter_views()[t][i] = original;
        const double numeric = (plus - minus) / (2.0 * step);
        const double a = grads[t][i];
        const double denom = std::max({std::abs(a), std::abs(numeric), scale});
        out.max_relative_error = std::max(out.max_relative_error, std::abs(a - numeric) / denom);
        ++out.checked;
      }
    }
  };
  run(probe.encoder, analytic.encoder_grad);
  run(probe.decoder, analytic.decoder_grad);
  return out;
}

// Small config for fast gradient and step checks.
inline TrainConfig tiny_config(int n = 4, int m = 4, std::vector<double> dims = {1.5, 2.0}) {
  TrainConfig c;
  c.codeword_length = n;
  c.messages = m;
  c.dimming_set = std::move(dims);
  c.encoder_hidden = {6, 5};
  c.decoder_hidden = {5, 6};
  c.batch_size = 3 * m * static_cast<int>(c.dimming_set.size());
  c.train_samples = 2000;
  c.validation_samples = 200;
  c.validation_cadence = 10;
  return c;
}

}  // namespace vlcae::testing
