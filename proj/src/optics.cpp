#include "vlcae/optics.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "vlcae/error.hpp"

namespace vlcae {

LedModel LedModel::linear() { return LedModel{}; }

LedModel LedModel::kingbright() { return LedModel{{34.11, -29.99, 6.999, -0.1468}, 0.1}; }

bool LedModel::is_linear() const {
  return coefficients.size() == 1 && coefficients[0] == 1.0 && memory == 0.0;
}

void LedModel::validate() const {
  if (coefficients.empty()) throw ConfigError("LED model needs at least one coefficient");
  for (double a : coefficients) {
    if (!std::isfinite(a)) throw ConfigError("LED coefficient is not finite");
  }
  if (!std::isfinite(memory)) throw ConfigError("LED memory factor is not finite");
}

namespace {

double polynomial(const std::vector<double>& a, double z) {
  // sum_{k=1..K} a_k z^k, Horner form
  double acc = 0.0;
  for (auto it = a.rbegin(); it != a.rend(); ++it) acc = (acc + *it) * z;
  return acc;
}

double polynomial_derivative(const std::vector<double>& a, double z) {
  double acc = 0.0;
  for (std::size_t k = a.size(); k-- > 0;) acc = acc * z + static_cast<double>(k + 1) * a[k];
  return acc;
}

}  // namespace

RowVector led_forward(const RowVector& z, const LedModel& led) {
  if (led.is_linear()) return z;
  RowVector g(z.size());
  double previous = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const double current = polynomial(led.coefficients, z(i));
    g(i) = current + led.memory * previous;
    previous = current;
  }
  return g;
}

LedJacobian led_derivative(const RowVector& z, const LedModel& led) {
  LedJacobian j;
  j.diagonal.resize(z.size());
  j.subdiagonal = RowVector::Zero(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    j.diagonal(i) = polynomial_derivative(led.coefficients, z(i));
    if (i > 0) j.subdiagonal(i) = led.memory * polynomial_derivative(led.coefficients, z(i - 1));
  }
  return j;
}

Matrix LedJacobian::dense() const {
  const auto n = diagonal.size();
  Matrix m = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    m(i, i) = diagonal(i);
    if (i > 0) m(i, i - 1) = subdiagonal(i);
  }
  return m;
}

RowVector LedJacobian::apply_transpose(const RowVector& upstream) const {
  RowVector out = upstream.cwiseProduct(diagonal);
  for (Eigen::Index i = 1; i < upstream.size(); ++i) out(i - 1) += subdiagonal(i) * upstream(i);
  return out;
}

IsiDelayMode parse_isi_delay_mode(const std::string& name) {
  if (name == "literal") return IsiDelayMode::literal;
  if (name == "fractional") return IsiDelayMode::fractional;
  throw ConfigError("unknown isi delay mode '" + name + "' (expected literal, fractional)");
}

std::string to_string(IsiDelayMode mode) {
  return mode == IsiDelayMode::literal ? "literal" : "fractional";
}

IsiGeometry isi_geometry(double position, IsiDelayMode mode) {
  if (!(position >= 0.0 && position <= IsiGeometry::room_size)) {
    throw DomainError("photodetector position must lie in [0, 3]");
  }
  IsiGeometry g;
  const double p = position;
  g.position = p;
  g.los_distance = std::sqrt((1.5 - p) * (1.5 - p) + 9.0);
  const double wall_hit = 4.5 / (4.5 - p);
  g.led_wall_distance = std::sqrt(wall_hit * wall_hit + 2.25);
  g.wall_pd_distance = std::sqrt((3.0 - p) * (3.0 - p) + (3.0 - wall_hit) * (3.0 - wall_hit));
  const double reflected = g.led_wall_distance + g.wall_pd_distance;
  g.gain = std::pow(g.los_distance, 4) / std::pow(reflected, 4);
  g.delay_seconds = reflected / IsiGeometry::speed_of_light;
  const double ratio = g.delay_seconds / IsiGeometry::bit_interval;
  g.delay_ratio = mode == IsiDelayMode::literal ? ratio : ratio - std::floor(ratio);
  return g;
}

Matrix isi_matrix(int codeword_length, double gain, double delay_ratio) {
  Matrix h = Matrix::Zero(codeword_length, codeword_length);
  for (int i = 0; i < codeword_length; ++i) {
    h(i, i) = 1.0 + gain * (1.0 - delay_ratio);
    if (i > 0) h(i, i - 1) = gain * delay_ratio;
  }
  return h;
}

IsiChannel make_isi_channel(double position, int codeword_length, IsiDelayMode mode) {
  IsiChannel c;
  c.geometry = isi_geometry(position, mode);
  c.matrix = isi_matrix(codeword_length, c.geometry.gain, c.geometry.delay_ratio);
  return c;
}

double sample_geometry(Rng& rng) {
  std::uniform_real_distribution<double> dist(0.0, IsiGeometry::room_size);
  return dist(rng);
}

ChannelKind parse_channel_kind(const std::string& name) {
  if (name == "identity") return ChannelKind::identity;
  if (name == "fixed") return ChannelKind::fixed;
  if (name == "isi_random" || name == "isi") return ChannelKind::isi_random;
  throw ConfigError("unknown channel model '" + name + "' (expected identity, fixed, isi_random)");
}

std::string to_string(ChannelKind kind) {
  switch (kind) {
    case ChannelKind::identity: return "identity";
    case ChannelKind::fixed: return "fixed";
    case ChannelKind::isi_random: return "isi_random";
  }
  return "?";
}

Matrix ChannelSpec::sample_matrix(int codeword_length, Rng& rng) const {
  switch (kind) {
    case ChannelKind::identity: return Matrix::Identity(codeword_length, codeword_length);
    case ChannelKind::fixed: return fixed_matrix;
    case ChannelKind::isi_random:
      return make_isi_channel(sample_geometry(rng), codeword_length, delay_mode).matrix;
  }
  return {};
}

void ChannelSpec::validate(int codeword_length) const {
  if (!(noise_variance > 0.0) || !std::isfinite(noise_variance)) {
    throw ConfigError("noise variance must be finite and > 0");
  }
  if (kind == ChannelKind::fixed) {
    if (fixed_matrix.rows() != codeword_length || fixed_matrix.cols() != codeword_length) {
      throw ConfigError("fixed channel matrix must be N x N");
    }
    if (!fixed_matrix.allFinite()) throw ConfigError("fixed channel matrix is not finite");
  }
}

Matrix parse_matrix_text(const std::string& text) {
  std::vector<std::vector<double>> rows;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::vector<double> row;
    std::string tok;
    while (ls >> tok) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw ParseError("not a number: '" + tok + "'", line_no);
      }
    }
    if (row.empty()) continue;
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw ParseError("row has " + std::to_string(row.size()) + " entries, expected " +
                           std::to_string(rows.front().size()),
                       line_no);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError("matrix file is empty", 0);
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    }
  }
  return m;
}

Matrix load_matrix_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open matrix file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_matrix_text(buf.str());
}

void add_noise(RowVector& signal, double noise_variance, Rng& rng) {
  if (noise_variance <= 0.0) return;
  std::normal_distribution<double> noise(0.0, std::sqrt(noise_variance));
  for (Eigen::Index i = 0; i < signal.size(); ++i) signal(i) += noise(rng);
}

RowVector transmit(const RowVector& bits, const Matrix& channel, const LedModel& led,
                   double noise_variance, Rng& rng) {
  RowVector r = led_forward(bits, led) * channel.transpose();
  add_noise(r, noise_variance, rng);
  return r;
}

}  // namespace vlcae
