#pragma once

// Binarization of the encoder output: Bernoulli sampling with probability
// h(u) = sigmoid(u - offset_d) while training, unit-step thresholding at
// evaluation, and the straight-through gradient through h.

#include <map>
#include <vector>

#include "vlcae/types.hpp"

namespace vlcae {

double sigmoid(double z);
double softplus(double z);

/// Offset such that the mean of sigmoid(z - offset) over z in [-bound, bound]
/// equals dimming / codeword_length. Bisection on the softplus antiderivative.
/// Throws DomainError unless 0 < dimming / codeword_length < 1.
double solve_offset(double dimming, int codeword_length, double bound);

/// Mean of sigmoid(z - offset) over [-bound, bound], in closed form.
double sigmoid_window_mean(double offset, double bound);

class BinarizerSpec {
 public:
  static constexpr double default_bound = 4.0;

  BinarizerSpec() = default;
  /// Solves one offset per dimming target.
  BinarizerSpec(const std::vector<double>& dimming_targets, int codeword_length,
                double bound = default_bound);
  /// Restores a previously solved table (checkpoint loading).
  BinarizerSpec(std::map<double, double> offsets, int codeword_length, double bound);

  double offset(double dimming) const;
  double bound() const { return bound_; }
  int codeword_length() const { return codeword_length_; }
  const std::map<double, double>& offsets() const { return offsets_; }

 private:
  std::map<double, double> offsets_;
  int codeword_length_ = 0;
  double bound_ = default_bound;
};

/// h(u) = sigmoid(u - offset), elementwise.
RowVector bernoulli_probabilities(const RowVector& u, double offset);

struct StochasticBinarization {
  RowVector bits;           // exactly 0.0 or 1.0
  RowVector probabilities;  // h(u), cached for the backward pass
};

StochasticBinarization stochastic_binarize(const RowVector& u, double offset, Rng& rng);

/// s_i = 1 iff u_i >= offset.
RowVector deterministic_binarize(const RowVector& u, double offset);

/// Straight-through gradient: upstream * h * (1 - h).
RowVector ste_backward(const RowVector& probabilities, const RowVector& upstream);

}  // namespace vlcae
