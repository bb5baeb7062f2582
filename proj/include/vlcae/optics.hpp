#pragma once

// Optical channel layer: LED electro-optic transfer (Hammerstein polynomial
// with one-tap memory), channel matrices (identity, fixed, random two-path
// ISI), and additive Gaussian noise.

#include <string>
#include <vector>

#include "vlcae/types.hpp"

namespace vlcae {

/// [g(z)]_i = sum_k a_k z_i^k + memory * sum_k a_k z_{i-1}^k, with z_0 = 0.
struct LedModel {
  std::vector<double> coefficients{1.0};  // a_1..a_K
  double memory = 0.0;                    // zeta

  static LedModel linear();
  /// Kingbright blue T-1 3/4: K=4, zeta=0.1.
  static LedModel kingbright();
  bool is_linear() const;
  void validate() const;
};

RowVector led_forward(const RowVector& z, const LedModel& led);

/// Jacobian of led_forward: nonzero only on the diagonal and first subdiagonal.
struct LedJacobian {
  RowVector diagonal;     // d g_i / d z_i
  RowVector subdiagonal;  // entry i holds d g_i / d z_{i-1}; entry 0 is 0

  Matrix dense() const;
  /// J^T * upstream.
  RowVector apply_transpose(const RowVector& upstream) const;
};

LedJacobian led_derivative(const RowVector& z, const LedModel& led);

enum class IsiDelayMode { literal, fractional };

IsiDelayMode parse_isi_delay_mode(const std::string& name);
std::string to_string(IsiDelayMode mode);

struct IsiGeometry {
  static constexpr double room_size = 3.0;         // meters
  static constexpr double bit_interval = 1e-8;     // T, seconds
  static constexpr double speed_of_light = 3.0e8;  // c, m/s

  double position = 0.0;           // P
  double los_distance = 0.0;       // LED -> PD
  double led_wall_distance = 0.0;  // LED -> wall
  double wall_pd_distance = 0.0;   // wall -> PD
  double gain = 0.0;               // gamma
  double delay_seconds = 0.0;      // tau_d
  double delay_ratio = 0.0;        // Delta as used in H
};

/// Pure function of the photodetector position P in [0, 3].
IsiGeometry isi_geometry(double position, IsiDelayMode mode = IsiDelayMode::literal);

/// Lower-bidiagonal Toeplitz matrix: diagonal 1 + gain(1 - delay), subdiagonal gain * delay.
Matrix isi_matrix(int codeword_length, double gain, double delay_ratio);

struct IsiChannel {
  Matrix matrix;
  IsiGeometry geometry;
};

IsiChannel make_isi_channel(double position, int codeword_length,
                            IsiDelayMode mode = IsiDelayMode::literal);

/// Photodetector position, uniform on [0, 3].
double sample_geometry(Rng& rng);

enum class ChannelKind { identity, fixed, isi_random };

ChannelKind parse_channel_kind(const std::string& name);
std::string to_string(ChannelKind kind);

struct ChannelSpec {
  ChannelKind kind = ChannelKind::identity;
  Matrix fixed_matrix;  // used when kind == fixed
  double noise_variance = 0.1;
  IsiDelayMode delay_mode = IsiDelayMode::literal;

  /// Channel realization for one codeword; only isi_random consumes randomness.
  Matrix sample_matrix(int codeword_length, Rng& rng) const;
  bool is_random() const { return kind == ChannelKind::isi_random; }
  void validate(int codeword_length) const;
};

/// Reads whitespace-separated rows; all rows must have equal length.
Matrix load_matrix_file(const std::string& path);
Matrix parse_matrix_text(const std::string& text);

/// Adds i.i.d. Gaussian(0, noise_variance) samples to `signal` in place.
void add_noise(RowVector& signal, double noise_variance, Rng& rng);

/// r = H g(s) + n.
RowVector transmit(const RowVector& bits, const Matrix& channel, const LedModel& led,
                   double noise_variance, Rng& rng);

}  // namespace vlcae
