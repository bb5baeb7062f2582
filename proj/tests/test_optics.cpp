#include <cmath>

#include "doctest.h"
#include "vlcae/error.hpp"
#include "vlcae/optics.hpp"

using namespace vlcae;

namespace {

// Direct evaluation of sum_k a_k z^k with std::pow, independent of the Horner form.
double poly_oracle(const std::vector<double>& a, double z) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * std::pow(z, static_cast<double>(k + 1));
  return s;
}

}  // namespace

TEST_CASE("linear LED is the identity") {
  RowVector z(3);
  z << 0.2, 1.0, 0.0;
  CHECK(led_forward(z, LedModel::linear()) == z);
  CHECK(LedModel::linear().is_linear());
  CHECK_FALSE(LedModel::kingbright().is_linear());
}

TEST_CASE("Kingbright all-ones output matches polynomial oracle") {
  const LedModel led = LedModel::kingbright();
  const double first = poly_oracle(led.coefficients, 1.0);
  CHECK(first == doctest::Approx(10.9722).epsilon(1e-12));
  RowVector g = led_forward(RowVector::Ones(8), led);
  CHECK(std::abs(g(0) - first) <= 1e-9);
  for (int i = 1; i < 8; ++i) CHECK(std::abs(g(i) - 1.1 * first) <= 1e-9);
  CHECK(g.sum() == doctest::Approx(first + 7 * 1.1 * first).epsilon(1e-12));
}

TEST_CASE("Hammerstein memory uses the previous input only") {
  const LedModel led = LedModel::kingbright();
  RowVector z(4);
  z << 0.5, 0.0, 1.0, 0.25;
  RowVector g = led_forward(z, led);
  const auto& a = led.coefficients;
  CHECK(g(0) == doctest::Approx(poly_oracle(a, 0.5)));
  CHECK(g(1) == doctest::Approx(0.1 * poly_oracle(a, 0.5)));
  CHECK(g(2) == doctest::Approx(poly_oracle(a, 1.0)));
  CHECK(g(3) == doctest::Approx(poly_oracle(a, 0.25) + 0.1 * poly_oracle(a, 1.0)));
  CHECK(poly_oracle(a, 0.5) == doctest::Approx(10.4232).epsilon(1e-12));
}

TEST_CASE("LED Jacobian at zero and against finite differences") {
  const LedModel led = LedModel::kingbright();
  LedJacobian j0 = led_derivative(RowVector::Zero(4), led);
  CHECK(j0.diagonal(0) == doctest::Approx(34.11));
  CHECK(j0.subdiagonal(1) == doctest::Approx(3.411));
  CHECK(j0.subdiagonal(0) == 0.0);

  RowVector z(5);
  z << 0.1, 0.9, 0.4, 0.7, 0.2;
  Matrix dense = led_derivative(z, led).dense();
  for (int k = 0; k < 5; ++k) {
    RowVector zp = z;
    RowVector zm = z;
    zp(k) += 1e-6;
    zm(k) -= 1e-6;
    RowVector col = (led_forward(zp, led) - led_forward(zm, led)) / 2e-6;
    for (int i = 0; i < 5; ++i) CHECK(dense(i, k) == doctest::Approx(col(i)).epsilon(1e-7));
  }
  RowVector up(5);
  up << 1.0, -2.0, 0.5, 0.3, 4.0;
  RowVector viaDense = up * dense;
  RowVector viaApply = led_derivative(z, led).apply_transpose(up);
  for (int i = 0; i < 5; ++i) CHECK(viaApply(i) == doctest::Approx(viaDense(i)));
}

TEST_CASE("ISI geometry at P = 0") {
  const IsiGeometry g = isi_geometry(0.0);
  CHECK(g.los_distance == doctest::Approx(3.3541019662496845).epsilon(1e-12));
  CHECK(std::abs(g.gain - 0.14792899408284024) <= 1e-12);
  CHECK(std::abs(g.delay_ratio - 1.8027756377319946) <= 1e-12);
  const IsiGeometry f = isi_geometry(0.0, IsiDelayMode::fractional);
  CHECK(f.delay_ratio == doctest::Approx(0.8027756377319946).epsilon(1e-12));
}

TEST_CASE("ISI geometry at interior positions") {
  CHECK(isi_geometry(1.0).gain == doctest::Approx(0.18948096885813149).epsilon(1e-12));
  CHECK(isi_geometry(1.0).delay_ratio == doctest::Approx(1.5365907428821479).epsilon(1e-12));
  CHECK(isi_geometry(2.5).gain == doctest::Approx(0.59171597633136095).epsilon(1e-12));
  CHECK(isi_geometry(2.5).delay_ratio == doctest::Approx(1.2018504251546631).epsilon(1e-12));
  CHECK_THROWS_AS(isi_geometry(-0.1), DomainError);
  CHECK_THROWS_AS(isi_geometry(3.5), DomainError);
}

TEST_CASE("ISI matrix is lower bidiagonal Toeplitz") {
  const IsiChannel c = make_isi_channel(0.7, 8);
  const Matrix& h = c.matrix;
  for (int i = 0; i < 8; ++i) {
    for (int j = 0; j < 8; ++j) {
      if (i == j) {
        CHECK(h(i, j) == h(0, 0));
      } else if (i == j + 1) {
        CHECK(h(i, j) == h(1, 0));
      } else {
        CHECK(h(i, j) == 0.0);
      }
    }
  }
  CHECK(h(0, 0) == 1.0 + c.geometry.gain * (1.0 - c.geometry.delay_ratio));
  CHECK(h(1, 0) == c.geometry.gain * c.geometry.delay_ratio);
}

TEST_CASE("channel sampling") {
  Rng rng = make_rng(3);
  ChannelSpec spec;
  CHECK(spec.sample_matrix(4, rng) == Matrix::Identity(4, 4));
  spec.kind = ChannelKind::isi_random;
  Matrix a = spec.sample_matrix(4, rng);
  Matrix b = spec.sample_matrix(4, rng);
  CHECK(a != b);
  CHECK(a(0, 1) == 0.0);
  for (int t = 0; t < 1000; ++t) {
    const double p = sample_geometry(rng);
    CHECK((p >= 0.0 && p <= 3.0));
  }
  spec.kind = ChannelKind::fixed;
  CHECK_THROWS_AS(spec.validate(4), ConfigError);
  spec.fixed_matrix = Matrix::Identity(4, 4);
  CHECK_NOTHROW(spec.validate(4));
  CHECK_THROWS_AS(spec.validate(5), ConfigError);
}

TEST_CASE("matrix text parsing") {
  Matrix m = parse_matrix_text("1 0\n# comment\n0.5   2\n");
  CHECK(m.rows() == 2);
  CHECK(m(1, 0) == 0.5);
  try {
    parse_matrix_text("1 0\n0.5 x\n");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
  try {
    parse_matrix_text("1 0\n1 2 3\n");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
}

TEST_CASE("transmit applies LED, channel and noise") {
  Rng rng = make_rng(9);
  RowVector bits(3);
  bits << 1, 0, 1;
  Matrix h = Matrix::Identity(3, 3);
  h(1, 0) = 0.5;
  RowVector r = transmit(bits, h, LedModel::linear(), 0.0, rng);
  CHECK(r(0) == 1.0);
  CHECK(r(1) == 0.5);
  CHECK(r(2) == 1.0);
  double acc = 0.0;
  double acc2 = 0.0;
  const int n = 20000;
  for (int t = 0; t < n; ++t) {
    RowVector x = RowVector::Zero(1);
    add_noise(x, 0.25, rng);
    acc += x(0);
    acc2 += x(0) * x(0);
  }
  CHECK(std::abs(acc / n) < 4 * 0.5 / std::sqrt(n));
  CHECK(acc2 / n == doctest::Approx(0.25).epsilon(0.05));
}
