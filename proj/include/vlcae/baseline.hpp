#pragma once

// Classical comparison system: randomized hill-climbing search for
// (semi-)constant-weight codebooks with large minimum Hamming distance, and
// maximum-likelihood (nearest-image) decoding.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vlcae/codebook.hpp"
#include "vlcae/optics.hpp"

namespace vlcae {

enum class ConstraintKind { strict, relaxed, nonlinear };

ConstraintKind parse_constraint_kind(const std::string& name);
std::string to_string(ConstraintKind kind);

struct SearchConfig {
  int codeword_length = 8;
  int messages = 4;
  double dimming = 4.0;
  ConstraintKind kind = ConstraintKind::strict;
  std::optional<int> target_min_distance;
  std::int64_t max_iterations = 20000;
  int restarts = 20;
  std::uint64_t seed = 1;
  LedModel led;                        // nonlinear kind only
  double feasibility_tolerance = 0.05;  // nonlinear kind only
};

struct SearchTraceRow {
  int restart = 0;
  std::int64_t iteration = 0;
  int min_distance = 0;
  int pairs_at_min = 0;
};

struct SearchResult {
  Codebook codebook;
  int min_distance = 0;
  bool feasible = false;
  std::vector<SearchTraceRow> trace;  // one row per accepted improvement
};

/// Restarts x (max_iterations / restarts) single-codeword moves. A move is
/// accepted when (min distance, -pairs at min distance) does not get worse.
/// Across restarts, ties in min distance go to the larger second-smallest
/// distance. Throws DomainError for infeasible (N, M, d, kind) combinations.
SearchResult search_codebook(const SearchConfig& config, Rng& rng);
SearchResult search_codebook(const SearchConfig& config);

/// Highest minimum distance over all strict constant-weight codebooks, by
/// exhaustive enumeration; only for tiny (N, M).
int brute_force_cwc_distance(int codeword_length, int messages, int weight);

/// argmin_b |r - H g(s_b)|^2, lowest index on ties.
int ml_decode(const RowVector& received, const Codebook& codebook, const Matrix& channel,
              const LedModel& led);
/// Same with precomputed images H g(s_b) as rows.
int ml_decode_images(const RowVector& received, const Matrix& images);
Matrix codeword_images(const Codebook& codebook, const Matrix& channel, const LedModel& led);

enum class CsiMode { perfect, perturbed, none };

struct CsiModel {
  CsiMode mode = CsiMode::perfect;
  double error_variance = 0.0;
};

/// "perfect", "none" or "perturbed:<variance>".
CsiModel parse_csi(const std::string& text);
std::string to_string(const CsiModel& csi);

/// H + E with E i.i.d. Gaussian(0, error_variance) on the nonzero entries of H.
Matrix perturb_csi(const Matrix& channel, double error_variance, Rng& rng);

std::string format_search_trace(const std::vector<SearchTraceRow>& trace);

}  // namespace vlcae
