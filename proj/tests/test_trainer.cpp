#include <cmath>
#include <utility>

#include "doctest.h"
#include "support.hpp"
#include "vlcae/error.hpp"
#include "vlcae/trainer.hpp"

using namespace vlcae;
using vlcae::testing::check_objective_gradients;
using vlcae::testing::tiny_config;

TEST_CASE("cross-entropy examples") {
  Matrix perfect(2, 2);
  perfect << 1.0, 0.0, 0.0, 1.0;
  CHECK(cross_entropy_cost(perfect, {0, 1}) == 0.0);
  Matrix uniform = Matrix::Constant(3, 4, 0.25);
  CHECK(cross_entropy_cost(uniform, {0, 2, 3}) == doctest::Approx(std::log(4.0)));
  Matrix p(2, 2);
  p << 0.5, 0.5, 0.75, 0.25;
  CHECK(cross_entropy_cost(p, {0, 1}) == doctest::Approx(1.0397207708399179));
  Matrix zero(1, 2);
  zero << 1.0, 0.0;
  CHECK(cross_entropy_cost(zero, {1}) == doctest::Approx(-std::log(1e-300)));
  CHECK_THROWS_AS(cross_entropy_cost(zero, {0, 1}), ConfigError);
}

TEST_CASE("lagrangian examples") {
  DualState duals{{0.5}, 3e-6};
  CHECK(lagrangian(1.0, {5.0}, duals, {3.0}) == doctest::Approx(2.000012).epsilon(1e-14));
  DualState two{{0.3, -0.7}, 3e-6};
  CHECK(lagrangian(0.8, {2.0, 3.5}, two, {2.0, 3.5}) == 0.8);
  DualState none{{0.0}, 0.0};
  CHECK(lagrangian(0.42, {7.0}, none, {1.0}) == 0.42);
}

TEST_CASE("dimming constraint examples") {
  Matrix at_offset = Matrix::Constant(4, 8, 1.3);
  CHECK(dimming_constraint(at_offset, 1.3, LedModel::linear()) == doctest::Approx(4.0));
  Matrix saturated = Matrix::Constant(2, 8, -1e3);
  saturated.block(0, 0, 1, 3).setConstant(1e3);
  saturated.block(1, 5, 1, 3).setConstant(1e3);
  CHECK(dimming_constraint(saturated, 0.0, LedModel::linear()) == doctest::Approx(3.0));
  Matrix ones = Matrix::Constant(3, 8, 1e3);
  const double a = 34.11 - 29.99 + 6.999 - 0.1468;
  CHECK(dimming_constraint(ones, 0.0, LedModel::kingbright()) ==
        doctest::Approx(a + 7 * 1.1 * a).epsilon(1e-12));
}

TEST_CASE("stratified batches contain every (message, dimming) pair") {
  TrainConfig c = tiny_config();
  Rng rng = make_rng(1);
  Batch b = make_batch(c, rng);
  CHECK(b.size() == c.batch_size);
  for (int di = 0; di < 2; ++di) {
    for (int m = 0; m < c.messages; ++m) {
      bool found = false;
      for (int j = 0; j < b.size(); ++j) found = found || (b.messages[j] == m && b.dimming_index[j] == di);
      CHECK(found);
    }
  }
  c.batch_size = 3;
  Batch small = make_batch(c, rng);
  CHECK(small.size() == 3);
}

TEST_CASE("surrogate objective gradients match central differences") {
  for (int seed = 1; seed <= 3; ++seed) {
    CAPTURE(seed);
    TrainConfig c = tiny_config();
    Rng rng = make_rng(seed);
    TrainingState st = init_training_state(c, rng);
    const BinarizerSpec spec(c.dimming_set, c.codeword_length);
    const BatchRealization batch = realize_batch(make_batch(c, rng), c, rng);
    const ObjectiveWeights w{{0.7, -0.4}, 0.3};
    const auto check = check_objective_gradients(st.params, batch, c, spec, w);
    CHECK(check.checked > 100);
    CHECK(check.max_relative_error <= 1e-4);
  }
}

TEST_CASE("gradients with Hammerstein LED, ISI channel and CSI input") {
  TrainConfig c = tiny_config();
  c.led = LedModel::kingbright();
  c.channel.kind = ChannelKind::isi_random;
  c.csi_input = true;
  Rng rng = make_rng(7);
  TrainingState st = init_training_state(c, rng);
  const BinarizerSpec spec(c.dimming_set, c.codeword_length);
  const BatchRealization batch = realize_batch(make_batch(c, rng), c, rng);
  const auto check = check_objective_gradients(st.params, batch, c, spec, {{0.05, 0.02}, 1e-3});
  CHECK(check.max_relative_error <= 1e-4);
}

namespace {

// N=2, M=2, one dimming target; no hidden layers, so the consolidated update
// can be written out by hand below.
struct Toy {
  Matrix we;  // 2 x 3
  Vector be;
  Matrix wd;  // 2 x 3
  Vector bd;
};

ModelParams toy_model(const Toy& t) {
  DenseLayer enc;
  enc.spec = {3, 2, Activation::encoder_output, false};
  enc.weights = t.we;
  enc.bias = t.be;
  DenseLayer dec;
  dec.spec = {3, 2, Activation::softmax, false};
  dec.weights = t.wd;
  dec.bias = t.bd;
  ModelParams p;
  p.codeword_length = 2;
  p.messages = 2;
  p.encoder = Network({enc});
  p.decoder = Network({dec});
  return p;
}

double sig(double z) { return 1.0 / (1.0 + std::exp(-z)); }

double adam_first(double g, double lr) { return lr * g / (std::abs(g) + 1e-8); }

}  // namespace

TEST_CASE("one primal-dual step matches a hand-rolled oracle") {
  Toy t;
  t.we.resize(2, 3);
  t.we << 0.4, -0.3, 0.8, -0.6, 0.5, 0.2;
  t.be = Vector::Zero(2);
  t.be << 0.1, -0.2;
  t.wd.resize(2, 3);
  t.wd << 0.7, -0.5, 0.3, -0.2, 0.9, -0.4;
  t.bd = Vector::Zero(2);
  t.bd << 0.05, -0.05;

  TrainConfig c;
  c.codeword_length = 2;
  c.messages = 2;
  c.dimming_set = {0.75};
  c.learning_rate = 0.01;
  c.dual_learning_rate = 0.02;
  c.rho = 0.1;
  const BinarizerSpec spec(c.dimming_set, 2);
  const double delta = spec.offset(0.75);

  BatchRealization br;
  br.batch.messages = {0, 1};
  br.batch.dimming_index = {0, 0};
  br.uniforms.resize(2, 2);
  br.uniforms << 0.3, 0.9, 0.6, 0.1;
  br.noise.resize(2, 2);
  br.noise << 0.2, -0.1, -0.3, 0.05;

  TrainingState st;
  st.params = toy_model(t);
  st.duals.lambdas = {0.25};
  st.duals.rho = c.rho;
  st.encoder_adam = make_adam_state(std::as_const(st.params.encoder).parameter_views());
  st.decoder_adam = make_adam_state(std::as_const(st.params.decoder).parameter_views());
  st.dual_adam = make_adam_state({std::span<const double>(st.duals.lambdas)});
  const StepDiagnostics diag = primal_dual_step(st, br, c, spec);

  // ---- oracle ----
  const double x2 = 0.75 / 2.0;
  double h[2][2], s[2][2], r[2][2], p[2][2];
  double gwe[2][3] = {}, gbe[2] = {}, gwd[2][3] = {}, gbd[2] = {};
  double fsum = 0.0;
  for (int j = 0; j < 2; ++j) {
    const double x[3] = {j == 0 ? 1.0 : 0.0, j == 1 ? 1.0 : 0.0, x2};
    for (int i = 0; i < 2; ++i) {
      double u = t.be(i);
      for (int k = 0; k < 3; ++k) u += t.we(i, k) * x[k];
      h[j][i] = sig(u - delta);
      s[j][i] = br.uniforms(j, i) < h[j][i] ? 1.0 : 0.0;
      r[j][i] = s[j][i] + br.noise(j, i);
      fsum += h[j][i];
    }
    const double xd[3] = {r[j][0], r[j][1], x2};
    double z[2];
    for (int o = 0; o < 2; ++o) {
      z[o] = t.bd(o);
      for (int k = 0; k < 3; ++k) z[o] += t.wd(o, k) * xd[k];
    }
    const double mx = std::max(z[0], z[1]);
    const double e0 = std::exp(z[0] - mx), e1 = std::exp(z[1] - mx);
    p[j][0] = e0 / (e0 + e1);
    p[j][1] = e1 / (e0 + e1);
  }
  const double f = fsum / 2.0;  // (1/M) sum_b sum_i h
  const double res = f - 0.75;
  const double cost = -(std::log(p[0][0]) + std::log(p[1][1])) / 2.0;
  CHECK(diag.cost == doctest::Approx(cost).epsilon(1e-13));
  CHECK(diag.residuals[0] == doctest::Approx(res).epsilon(1e-13));
  CHECK(diag.objective == doctest::Approx(cost + 0.25 * res + 0.1 * res * res).epsilon(1e-13));

  const double coef = 0.25 + 2.0 * 0.1 * res;
  for (int j = 0; j < 2; ++j) {
    const double x[3] = {j == 0 ? 1.0 : 0.0, j == 1 ? 1.0 : 0.0, x2};
    const double xd[3] = {r[j][0], r[j][1], x2};
    double dz[2] = {p[j][0] - (j == 0), p[j][1] - (j == 1)};
    for (int o = 0; o < 2; ++o) {
      dz[o] /= 2.0;
      gbd[o] += dz[o];
      for (int k = 0; k < 3; ++k) gwd[o][k] += dz[o] * xd[k];
    }
    for (int i = 0; i < 2; ++i) {
      const double dr = dz[0] * t.wd(0, i) + dz[1] * t.wd(1, i);
      const double dh = dr + coef / 2.0;  // straight-through, plus dF/dh = 1/M
      const double du = dh * h[j][i] * (1.0 - h[j][i]);
      gbe[i] += du;
      for (int k = 0; k < 3; ++k) gwe[i][k] += du * x[k];
    }
  }
  const auto& enc = st.params.encoder.layers()[0];
  const auto& dec = st.params.decoder.layers()[0];
  for (int i = 0; i < 2; ++i) {
    CHECK(enc.bias(i) == doctest::Approx(t.be(i) - adam_first(gbe[i], 0.01)).epsilon(1e-13));
    CHECK(dec.bias(i) == doctest::Approx(t.bd(i) - adam_first(gbd[i], 0.01)).epsilon(1e-13));
    for (int k = 0; k < 3; ++k) {
      CHECK(enc.weights(i, k) ==
            doctest::Approx(t.we(i, k) - adam_first(gwe[i][k], 0.01)).epsilon(1e-13));
      CHECK(dec.weights(i, k) ==
            doctest::Approx(t.wd(i, k) - adam_first(gwd[i][k], 0.01)).epsilon(1e-13));
    }
  }
  CHECK(st.duals.lambdas[0] == doctest::Approx(0.25 + adam_first(res, 0.02)).epsilon(1e-13));
}

TEST_CASE("multiplier rises when the constraint is exceeded") {
  TrainConfig c = tiny_config();
  Rng rng = make_rng(4);
  TrainingState st = init_training_state(c, rng);
  const BinarizerSpec spec(c.dimming_set, c.codeword_length);
  const BatchRealization batch = realize_batch(make_batch(c, rng), c, rng);
  const std::vector<double> before = st.duals.lambdas;
  const StepDiagnostics d = primal_dual_step(st, batch, c, spec);
  for (std::size_t i = 0; i < before.size(); ++i) {
    if (d.residuals[i] > 0) CHECK(st.duals.lambdas[i] > before[i]);
    if (d.residuals[i] < 0) CHECK(st.duals.lambdas[i] < before[i]);
  }
}

TEST_CASE("primal-dual with zero rho and frozen zero multipliers equals mu = 0 penalty") {
  TrainConfig c = tiny_config();
  c.rho = 0.0;
  c.dual_learning_rate = 0.0;
  Rng init_a = make_rng(5, 0);
  Rng init_b = make_rng(5, 0);
  TrainingState a = init_training_state(c, init_a);
  TrainingState b = init_training_state(c, init_b);
  const BinarizerSpec spec(c.dimming_set, c.codeword_length);
  Rng data = make_rng(5, 1);
  for (int step = 0; step < 10; ++step) {
    const BatchRealization batch = realize_batch(make_batch(c, data), c, data);
    primal_dual_step(a, batch, c, spec);
    penalty_step(b, batch, 0.0, c, spec);
  }
  const auto pa = a.params.encoder.parameter_views();
  const auto pb = b.params.encoder.parameter_views();
  for (std::size_t t = 0; t < pa.size(); ++t) {
    for (std::size_t i = 0; i < pa[t].size(); ++i) CHECK(pa[t][i] == pb[t][i]);
  }
  const auto qa = a.params.decoder.parameter_views();
  const auto qb = b.params.decoder.parameter_views();
  for (std::size_t t = 0; t < qa.size(); ++t) {
    for (std::size_t i = 0; i < qa[t].size(); ++i) CHECK(qa[t][i] == qb[t][i]);
  }
  CHECK(a.duals.lambdas == std::vector<double>{0.0, 0.0});
}

TEST_CASE("penalty step on a feasible batch follows the pure cost direction") {
  // With F_d = d the penalty gradient vanishes, so mu does not matter.
  TrainConfig c = tiny_config(4, 2, {2.0});
  c.batch_size = 4;
  DenseLayer enc;
  enc.spec = {3, 4, Activation::encoder_output, false};
  enc.weights = Matrix::Zero(4, 3);
  enc.bias = Vector::Zero(4);  // u = 0 = offset for d = N/2, so h = 1/2 and F_d = 2
  Rng rng = make_rng(6);
  ModelParams p;
  p.codeword_length = 4;
  p.messages = 2;
  p.encoder = Network({enc});
  p.decoder = Network({{5, 2, Activation::softmax, false}}, rng);
  const BinarizerSpec spec(c.dimming_set, 4);
  const BatchRealization batch = realize_batch(make_batch(c, rng), c, rng);
  const auto g0 = evaluate_objective(p, batch, c, spec, {{0.0}, 0.0}, Binarization::stochastic);
  const auto g1 = evaluate_objective(p, batch, c, spec, {{0.0}, 0.5}, Binarization::stochastic);
  CHECK(g0.constraint_values[0] == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(g0.encoder_grad.layers[0].weights.isApprox(g1.encoder_grad.layers[0].weights, 1e-15));
}

TEST_CASE("training is reproducible and validation is feasibility gated") {
  TrainConfig c = tiny_config(4, 2, {2.0});
  c.channel.noise_variance = 0.01;
  c.batch_size = 64;
  c.train_samples = 64 * 400;
  c.validation_cadence = 50;
  const TrainResult a = train(c);
  const TrainResult b = train(c);
  REQUIRE(a.report.trace.size() == b.report.trace.size());
  for (std::size_t i = 0; i < a.report.trace.size(); ++i) {
    CHECK(format_trace_row(a.report.trace[i]) == format_trace_row(b.report.trace[i]));
  }
  CHECK(a.report.feasible);
  double last = INFINITY;
  for (const auto& ev : a.report.checkpoints) {
    CHECK(ev.objective <= last);
    last = ev.objective;
  }
  const Codebook cb = extract_codebook(a.params, a.binarizer, 2.0);
  CHECK(std::abs(audit(cb).average_weight - 2.0) <= c.feasibility_tolerance);
  CHECK(audit(cb).min_hamming_distance >= 2);
}

TEST_CASE("multiplier follows the sign of the averaged residual") {
  // Adam's first moment is an EMA(0.9) of the residuals; whenever it is
  // positive the multiplier may not decrease, and vice versa.
  TrainConfig c = tiny_config();
  c.train_samples = c.batch_size * 300;
  const TrainResult r = train(c);
  const std::size_t nd = c.dimming_set.size();
  std::vector<double> ema(nd, 0.0);
  std::vector<double> prev(nd, 0.0);
  int checked = 0;
  for (const auto& row : r.report.trace) {
    for (std::size_t d = 0; d < nd; ++d) {
      ema[d] = 0.9 * ema[d] + (1.0 - 0.9) * row.residuals[d];
      if (ema[d] > 1e-12) {
        CHECK(row.lambdas[d] >= prev[d]);
        ++checked;
      } else if (ema[d] < -1e-12) {
        CHECK(row.lambdas[d] <= prev[d]);
        ++checked;
      }
      prev[d] = row.lambdas[d];
    }
  }
  CHECK(checked > 100);
}

TEST_CASE("complement codebooks for d above N/2") {
  TrainConfig c = tiny_config(4, 2, {1.0, 1.5});
  Rng rng = make_rng(2);
  TrainingState st = init_training_state(c, rng);
  const BinarizerSpec spec(c.dimming_set, 4);
  const Codebook lo = codebook_for(st.params, spec, c, 1.0);
  const Codebook hi = codebook_for(st.params, spec, c, 3.0);
  CHECK(hi.codewords == flip_complement(lo).codewords);
  CHECK_THROWS_AS(codebook_for(st.params, spec, c, 2.0), DomainError);
}

TEST_CASE("config validation") {
  TrainConfig c;
  c.dimming_set = {};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.dimming_set = {3.0, 2.0};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.dimming_set = {2.0, 8.0};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.dimming_set = {2.0};
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  TrainConfig d;
  CHECK(d.effective_train_samples() == 2000000);
  CHECK(d.iterations() == 4000);
}
