#pragma once

// Monte Carlo symbol-error-rate measurement for learned transceivers and the
// classical ML baseline, plus report comparison.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vlcae/baseline.hpp"
#include "vlcae/binarizer.hpp"
#include "vlcae/codebook.hpp"
#include "vlcae/nn.hpp"
#include "vlcae/optics.hpp"

namespace vlcae {

/// Gaussian tail probability via erfc.
double q_function(double x);

struct ConfidenceInterval {
  double low = 0.0;
  double high = 1.0;
};

/// Wilson score interval; z = 1.959964 gives 95%.
ConfidenceInterval wilson_interval(std::int64_t errors, std::int64_t trials,
                                   double z = 1.959963984540054);

/// Noise variance for an SNR in dB where SNR = E_s / sigma^2. Linear LED:
/// E_s = d / N. Otherwise E_s = (1/N) sum_i E_b[g(s_b)]_i over `codebook`,
/// which is then required.
double snr_to_sigma(double dimming, int codeword_length, double snr_db, const LedModel& led,
                    const Codebook* codebook = nullptr);

/// Inverse for the linear LED: 10 log10(d / (N sigma^2)).
double sigma_to_snr_db(double dimming, int codeword_length, double noise_variance);

struct EvalConfig {
  std::vector<double> snr_db{0.0, 2.0, 4.0, 6.0, 8.0, 10.0};
  std::int64_t trials_per_point = 100000;
  std::vector<double> dimming;
  ChannelSpec channel;  // noise_variance is ignored; it follows from the SNR
  LedModel led;
  CsiModel csi;
  std::uint64_t seed = 7;
  int threads = 1;
  std::int64_t chunk_size = 10000;  // trials per independent rng stream

  void validate() const;
};

struct SerRow {
  std::string system;
  double dimming = 0.0;
  double snr_db = 0.0;
  std::int64_t trials = 0;
  std::int64_t errors = 0;
  double ser = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
};

struct EvalReport {
  std::vector<SerRow> rows;
  std::vector<std::string> notes;
};

struct DnnSystem {
  const ModelParams* params = nullptr;
  const BinarizerSpec* binarizer = nullptr;
};

struct MlSystem {
  std::vector<Codebook> codebooks;  // matched to EvalConfig::dimming by their d
};

/// Per (d, SNR): uniform messages, deterministic codewords, fresh channel
/// (random-ISI) and noise per trial, decode and count errors. Results depend
/// only on the seed and chunk size, not on the thread count.
EvalReport measure_ser(const std::string& name, const DnnSystem& system, const EvalConfig& config);
EvalReport measure_ser(const std::string& name, const MlSystem& system, const EvalConfig& config);

/// Comma-separated: system,d,snr_db,trials,errors,ser,ci_low,ci_high.
std::string format_eval_csv(const EvalReport& report);
EvalReport parse_eval_csv(const std::string& text);
/// Plain-text table: one line per SNR, one column per (system, d).
std::string format_eval_summary(const EvalReport& report);

EvalReport filter_system(const EvalReport& report, const std::string& system);

struct GapRow {
  double dimming = 0.0;
  double snr_db = 0.0;
  double ser_a = 0.0;
  double ser_b = 0.0;
  double ratio = 0.0;  // ser_a / ser_b
  bool ci_overlap = false;
};

struct GapSummary {
  double dimming = 0.0;
  std::optional<double> snr_a;  // SNR where the SER curve crosses the target
  std::optional<double> snr_b;
  std::optional<double> gain_db;  // snr_b - snr_a; positive means a is better
  bool reliable = false;
};

struct Comparison {
  std::vector<GapRow> rows;
  std::vector<GapSummary> summaries;
  double target_ser = 1e-3;
};

/// Matches rows by (d, SNR). The dB gap interpolates log10(SER) linearly in
/// dB; it is unreliable when the two systems' CIs overlap at the bracketing points.
Comparison compare(const EvalReport& a, const EvalReport& b, double target_ser = 1e-3);
std::string format_comparison(const Comparison& comparison);

}  // namespace vlcae
