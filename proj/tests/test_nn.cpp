#include <cmath>

#include "doctest.h"
#include "vlcae/error.hpp"
#include "vlcae/nn.hpp"

using namespace vlcae;

namespace {

DenseLayer make_layer(int in, int out, Activation act, bool bn = false) {
  DenseLayer l;
  l.spec = {in, out, act, bn};
  l.weights = Matrix::Zero(out, in);
  l.bias = Vector::Zero(out);
  if (bn) l.bn = make_batchnorm_state(out);
  return l;
}

}  // namespace

TEST_CASE("relu and softmax") {
  Matrix x(1, 3);
  x << -1.0, 0.0, 2.0;
  CHECK(relu(x)(0, 0) == 0.0);
  CHECK(relu(x)(0, 2) == 2.0);
  Matrix p = softmax_rows(x);
  CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(p(0, 2) > p(0, 1));
  Matrix big(1, 2);
  big << 1000.0, 0.0;
  Matrix q = softmax_rows(big);
  CHECK(std::isfinite(q(0, 1)));
  CHECK(q(0, 1) > 0.0);
}

TEST_CASE("dense forward matches hand computation") {
  DenseLayer l = make_layer(2, 2, Activation::linear);
  l.weights << 1.0, 2.0, -1.0, 0.5;
  l.bias << 0.1, -0.2;
  Network net({l});
  Matrix x(1, 2);
  x << 3.0, -1.0;
  Matrix y = net.forward(x, Mode::eval);
  CHECK(y(0, 0) == doctest::Approx(1.1));
  CHECK(y(0, 1) == doctest::Approx(-3.7));
}

TEST_CASE("batch norm train mode normalizes and eval uses running stats") {
  BatchNormState s = make_batchnorm_state(2);
  BatchNormConfig cfg;
  Matrix z(4, 2);
  z << 1, 10, 2, 20, 3, 30, 4, 40;
  BatchNormCache cache;
  Matrix out = batchnorm_forward(z, s, Mode::train, cfg, &cache);
  CHECK(out.col(0).mean() == doctest::Approx(0.0).epsilon(1e-12));
  const double var0 = out.col(0).array().square().mean();
  CHECK(var0 == doctest::Approx(1.25 / (1.25 + 1e-5)));
  batchnorm_update_running(s, cache, cfg);
  CHECK(s.trained);
  CHECK(s.running_mean(0) == doctest::Approx(0.01 * 2.5));
  CHECK(s.running_var(1) == doctest::Approx(0.99 + 0.01 * 125.0));
  Matrix e = batchnorm_forward(z.topRows(1), s, Mode::eval, cfg, nullptr);
  CHECK(e(0, 0) == doctest::Approx((1.0 - 0.025) / std::sqrt(s.running_var(0) + 1e-5)));
}

TEST_CASE("batch norm backward matches finite differences") {
  BatchNormState s = make_batchnorm_state(3);
  s.gamma << 1.5, 0.7, -0.3;
  s.beta << 0.1, 0.2, 0.3;
  BatchNormConfig cfg;
  Rng rng = make_rng(5);
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix z(5, 3);
  Matrix w(5, 3);
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    z.data()[i] = g(rng);
    w.data()[i] = g(rng);
  }
  auto loss = [&](const Matrix& zz) {
    return (batchnorm_forward(zz, s, Mode::train, cfg, nullptr).array() * w.array()).sum();
  };
  BatchNormCache cache;
  batchnorm_forward(z, s, Mode::train, cfg, &cache);
  BatchNormGrad grad = batchnorm_backward(cache, s, w);
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    Matrix zp = z;
    Matrix zm = z;
    zp.data()[i] += 1e-6;
    zm.data()[i] -= 1e-6;
    const double numeric = (loss(zp) - loss(zm)) / 2e-6;
    CHECK(grad.input.data()[i] == doctest::Approx(numeric).epsilon(1e-6));
  }
}

TEST_CASE("network initialization and chaining checks") {
  Rng rng = make_rng(1);
  Network net({{3, 4, Activation::relu, true}, {4, 2, Activation::softmax, false}}, rng);
  CHECK(net.input_dim() == 3);
  CHECK(net.output_dim() == 2);
  const double limit = std::sqrt(6.0 / 3.0);
  CHECK(net.layers()[0].weights.cwiseAbs().maxCoeff() <= limit);
  CHECK(net.layers()[0].bias.isZero());
  CHECK_THROWS_AS(Network({{3, 4, Activation::relu, false}, {5, 2, Activation::softmax, false}}, rng),
                  ConfigError);
  CHECK_THROWS_AS(Network({{3, 4, Activation::softmax, false}, {4, 2, Activation::linear, false}}, rng),
                  ConfigError);
}

TEST_CASE("stale tape is rejected after a parameter change") {
  Rng rng = make_rng(2);
  Network net({{2, 3, Activation::relu, false}, {3, 2, Activation::linear, false}}, rng);
  Matrix x = Matrix::Ones(2, 2);
  Tape tape;
  Matrix y = net.forward(x, Mode::train, &tape);
  CHECK_NOTHROW(net.backward(tape, Matrix::Ones(2, 2)));
  net.parameter_views();
  CHECK_THROWS_AS(net.backward(tape, Matrix::Ones(2, 2)), InvariantError);
}

TEST_CASE("network backward matches finite differences") {
  Rng rng = make_rng(3);
  Network net({{3, 5, Activation::relu, true}, {5, 4, Activation::relu, true},
               {4, 2, Activation::linear, false}},
              rng);
  Matrix x(6, 3);
  std::normal_distribution<double> g(0.0, 1.0);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = g(rng);
  Matrix w(6, 2);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = g(rng);
  Tape tape;
  net.forward(x, Mode::train, &tape);
  NetworkGrad grad = net.backward(tape, w);
  const auto gv = Network::gradient_views(grad);
  auto loss = [&] { return (net.forward(x, Mode::train).array() * w.array()).sum(); };
  for (std::size_t t = 0; t < gv.size(); ++t) {
    for (std::size_t i = 0; i < gv[t].size(); ++i) {
      const double orig = net.parameter_views()[t][i];
      net.parameter_views()[t][i] = orig + 1e-6;
      const double plus = loss();
      net.parameter_views()[t][i] = orig - 1e-6;
      const double minus = loss();
      net.parameter_views()[t][i] = orig;
      CHECK(gv[t][i] == doctest::Approx((plus - minus) / 2e-6).epsilon(1e-5));
    }
  }
}

TEST_CASE("architecture presets") {
  Architecture a = make_architecture(ArchitecturePreset::n8, 4);
  CHECK(a.encoder_hidden == std::vector<int>{32, 16, 8});
  CHECK(a.decoder_hidden == std::vector<int>{8, 16, 32});
  Architecture b = make_architecture(ArchitecturePreset::n12, 2);
  CHECK(b.encoder_hidden == std::vector<int>{96, 48, 48, 24});
  Architecture c = make_architecture(ArchitecturePreset::isi, 2);
  CHECK(c.encoder_hidden == std::vector<int>{128, 64, 32, 16, 4});
  CHECK(parse_architecture_preset("n12") == ArchitecturePreset::n12);
  CHECK_THROWS_AS(parse_architecture_preset("n9"), ConfigError);
}

TEST_CASE("model inputs and csi errors") {
  Rng rng = make_rng(4);
  ModelParams p = build_model(8, 4, make_architecture(ArchitecturePreset::n8, 4), false, true, rng);
  validate_model(p);
  RowVector x = encoder_input(4, 8, 2, 3.0);
  CHECK(x.size() == 5);
  CHECK(x(2) == 1.0);
  CHECK(x(4) == doctest::Approx(0.375));
  CHECK_THROWS_AS(encoder_input(4, 8, 4, 3.0), DomainError);
  const Matrix h = Matrix::Identity(8, 8);
  CHECK_THROWS_AS(forward_decoder(p, RowVector::Zero(8), 3.0, &h, Mode::train), ConfigError);
  CHECK(p.decoder_input_dim() == 9);
  ModelParams q = build_model(8, 4, make_architecture(ArchitecturePreset::n8, 4), true, true, rng);
  CHECK(q.decoder_input_dim() == 9 + 64);
  CHECK(decoder_input(RowVector::Zero(8), 4.0, 8, &h).size() == 73);
}

TEST_CASE("adam first step matches hand computation") {
  std::vector<double> p{1.0, -2.0};
  std::vector<double> g{0.5, -0.1};
  AdamState st = make_adam_state({std::span<const double>(p)});
  adam_step({std::span<double>(p)}, {std::span<const double>(g)}, st, 0.01, false);
  // m_hat = g, v_hat = g^2 after one step
  CHECK(p[0] == doctest::Approx(0.9900000002).epsilon(1e-12));
  CHECK(p[1] == doctest::Approx(-1.990000001).epsilon(1e-12));
  // second step, gradient (0.2, 0.3)
  std::vector<double> g2{0.2, 0.3};
  adam_step({std::span<double>(p)}, {std::span<const double>(g2)}, st, 0.01, false);
  const double m0 = (0.9 * 0.05 + 0.1 * 0.2) / (1 - 0.81);
  const double v0 = (0.999 * 0.001 * 0.25 + 0.001 * 0.04) / (1 - 0.998001);
  CHECK(p[0] == doctest::Approx(0.9900000002 - 0.01 * m0 / (std::sqrt(v0) + 1e-8)).epsilon(1e-12));
}

TEST_CASE("adam ascent, zero-gradient fixed point, non-finite guard") {
  std::vector<double> lam{0.0};
  std::vector<double> res{0.1};
  AdamState st = make_adam_state({std::span<const double>(lam)});
  adam_step({std::span<double>(lam)}, {std::span<const double>(res)}, st, 1e-3, true);
  CHECK(lam[0] > 0.0);

  std::vector<double> p{0.3, 0.4};
  std::vector<double> z{0.0, 0.0};
  AdamState s2 = make_adam_state({std::span<const double>(p)});
  for (int i = 0; i < 5; ++i) adam_step({std::span<double>(p)}, {std::span<const double>(z)}, s2, 0.1, false);
  CHECK(p[0] == 0.3);
  CHECK(p[1] == 0.4);

  std::vector<double> bad{std::nan(""), 1.0};
  CHECK_THROWS_AS(adam_step({std::span<double>(p)}, {std::span<const double>(bad)}, s2, 0.1, false),
                  NumericalError);
  CHECK(p[1] == 0.4);
}
