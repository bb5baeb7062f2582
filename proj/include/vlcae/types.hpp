#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>

namespace vlcae {

/// Row-major dense matrix, one sample per row when used for batches.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

/// All randomness flows through explicitly passed engines of this type.
using Rng = std::mt19937_64;

/// Derives an independent stream from a base seed and a stream index.
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    0x5eedu};
  return Rng(seq);
}

}  // namespace vlcae
