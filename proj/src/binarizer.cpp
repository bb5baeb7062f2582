#include "vlcae/binarizer.hpp"

#include <cmath>
#include <sstream>

#include "vlcae/error.hpp"

namespace vlcae {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double softplus(double z) {
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

double sigmoid_window_mean(double offset, double bound) {
  return (softplus(bound - offset) - softplus(-bound - offset)) / (2.0 * bound);
}

double solve_offset(double dimming, int codeword_length, double bound) {
  if (codeword_length < 1) throw DomainError("solve_offset: codeword length must be >= 1");
  if (!(bound > 0.0)) throw DomainError("solve_offset: range bound must be > 0");
  const double target = dimming / codeword_length;
  if (!(target > 0.0 && target < 1.0)) {
    std::ostringstream msg;
    msg << "solve_offset: dimming ratio " << target << " outside (0, 1)";
    throw DomainError(msg.str());
  }
  // sigmoid is symmetric about its offset.
  if (target == 0.5) return 0.0;
  // The window mean decreases monotonically in the offset.
  double lo = -1.0;
  double hi = 1.0;
  while (sigmoid_window_mean(lo, bound) < target) lo *= 2.0;
  while (sigmoid_window_mean(hi, bound) > target) hi *= 2.0;
  for (int iter = 0; iter < 200; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (sigmoid_window_mean(mid, bound) > target) {
      lo = mid;
    } else {
      hi = mid;
    }
    if (hi - lo < 1e-15 * std::max(1.0, std::abs(mid))) break;
  }
  return 0.5 * (lo + hi);
}

BinarizerSpec::BinarizerSpec(const std::vector<double>& dimming_targets, int codeword_length,
                             double bound)
    : codeword_length_(codeword_length), bound_(bound) {
  for (double d : dimming_targets) offsets_[d] = solve_offset(d, codeword_length, bound);
}

BinarizerSpec::BinarizerSpec(std::map<double, double> offsets, int codeword_length,
                             double bound)
    : offsets_(std::move(offsets)), codeword_length_(codeword_length), bound_(bound) {}

double BinarizerSpec::offset(double dimming) const {
  const auto it = offsets_.find(dimming);
  if (it == offsets_.end()) {
    std::ostringstream msg;
    msg << "no binarization offset for dimming target " << dimming;
    throw DomainError(msg.str());
  }
  return it->second;
}

RowVector bernoulli_probabilities(const RowVector& u, double offset) {
  RowVector h(u.size());
  for (Eigen::Index i = 0; i < u.size(); ++i) h(i) = sigmoid(u(i) - offset);
  return h;
}

StochasticBinarization stochastic_binarize(const RowVector& u, double offset, Rng& rng) {
  StochasticBinarization out;
  out.probabilities = bernoulli_probabilities(u, offset);
  out.bits.resize(u.size());
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    out.bits(i) = unif(rng) < out.probabilities(i) ? 1.0 : 0.0;
  }
  return out;
}

RowVector deterministic_binarize(const RowVector& u, double offset) {
  RowVector s(u.size());
  for (Eigen::Index i = 0; i < u.size(); ++i) s(i) = u(i) >= offset ? 1.0 : 0.0;
  return s;
}

RowVector ste_backward(const RowVector& probabilities, const RowVector& upstream) {
  return (upstream.array() * probabilities.array() * (1.0 - probabilities.array())).matrix();
}

}  // namespace vlcae
