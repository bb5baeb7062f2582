#include "vlcae/baseline.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>
#include <tuple>

#include "vlcae/error.hpp"

namespace vlcae {

ConstraintKind parse_constraint_kind(const std::string& name) {
  if (name == "strict") return ConstraintKind::strict;
  if (name == "relaxed") return ConstraintKind::relaxed;
  if (name == "nonlinear") return ConstraintKind::nonlinear;
  throw ConfigError("unknown constraint kind '" + name + "' (expected strict, relaxed, nonlinear)");
}

std::string to_string(ConstraintKind kind) {
  switch (kind) {
    case ConstraintKind::strict: return "strict";
    case ConstraintKind::relaxed: return "relaxed";
    case ConstraintKind::nonlinear: return "nonlinear";
  }
  return "?";
}

namespace {

struct Score {
  bool feasible = true;
  double infeasibility = 0.0;  // |power - d| for the nonlinear kind
  int min_distance = 0;
  int pairs_at_min = 0;
  int second_min = 0;

  // Local acceptance order.
  auto climb_key() const {
    return std::make_tuple(feasible, -infeasibility, min_distance, -pairs_at_min);
  }
  // Cross-restart order.
  auto final_key() const {
    return std::make_tuple(feasible, -infeasibility, min_distance, second_min, -pairs_at_min);
  }
};

Score score_of(const Codebook& cb, const SearchConfig& cfg) {
  Score s;
  int best = std::numeric_limits<int>::max();
  int second = std::numeric_limits<int>::max();
  int count = 0;
  const auto& c = cb.codewords;
  for (std::size_t i = 0; i < c.size(); ++i) {
    for (std::size_t j = i + 1; j < c.size(); ++j) {
      const int d = hamming_distance(c[i], c[j]);
      if (d < best) {
        second = best;
        best = d;
        count = 1;
      } else if (d == best) {
        ++count;
      } else if (d < second) {
        second = d;
      }
    }
  }
  s.min_distance = best == std::numeric_limits<int>::max() ? 0 : best;
  s.second_min = second == std::numeric_limits<int>::max() ? s.min_distance : second;
  s.pairs_at_min = count;
  if (cfg.kind == ConstraintKind::nonlinear) {
    s.infeasibility = std::abs(average_optical_power(cb, cfg.led) - cfg.dimming);
    s.feasible = s.infeasibility <= cfg.feasibility_tolerance;
    if (s.feasible) s.infeasibility = 0.0;
  }
  return s;
}

Codeword random_weight_word(int n, int weight, Rng& rng) {
  Codeword w(static_cast<std::size_t>(n), 0);
  std::fill(w.begin(), w.begin() + weight, std::uint8_t{1});
  std::shuffle(w.begin(), w.end(), rng);
  return w;
}

Codeword random_word(int n, Rng& rng) {
  std::bernoulli_distribution coin(0.5);
  Codeword w(static_cast<std::size_t>(n));
  for (auto& bit : w) bit = coin(rng) ? 1 : 0;
  return w;
}

std::int64_t binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  std::int64_t r = 1;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

int strict_weight(const SearchConfig& cfg) {
  const double rounded = std::round(cfg.dimming);
  if (std::abs(rounded - cfg.dimming) > 1e-9) {
    throw DomainError("strict constant-weight search needs an integer dimming target");
  }
  return static_cast<int>(rounded);
}

Codebook initial_codebook(const SearchConfig& cfg, Rng& rng) {
  const int n = cfg.codeword_length;
  const int m = cfg.messages;
  Codebook cb;
  cb.codeword_length = n;
  cb.dimming = cfg.dimming;
  cb.provenance = Provenance::searched;
  switch (cfg.kind) {
    case ConstraintKind::strict: {
      const int w = strict_weight(cfg);
      for (int b = 0; b < m; ++b) cb.codewords.push_back(random_weight_word(n, w, rng));
      break;
    }
    case ConstraintKind::relaxed: {
      const auto total = static_cast<std::size_t>(std::llround(cfg.dimming * m));
      std::vector<std::uint8_t> bits(static_cast<std::size_t>(n * m), 0);
      std::fill(bits.begin(), bits.begin() + static_cast<std::ptrdiff_t>(total), std::uint8_t{1});
      std::shuffle(bits.begin(), bits.end(), rng);
      for (int b = 0; b < m; ++b) {
        cb.codewords.emplace_back(bits.begin() + b * n, bits.begin() + (b + 1) * n);
      }
      break;
    }
    case ConstraintKind::nonlinear:
      for (int b = 0; b < m; ++b) cb.codewords.push_back(random_word(n, rng));
      break;
  }
  return cb;
}

// Proposes a neighbour that keeps the constraint kind's invariant.
void propose(Codebook& cb, const SearchConfig& cfg, Rng& rng) {
  const int n = cfg.codeword_length;
  const int m = cfg.messages;
  std::uniform_int_distribution<int> pick_b(0, m - 1);
  std::uniform_int_distribution<int> pick_i(0, n - 1);
  std::bernoulli_distribution coin(0.5);
  switch (cfg.kind) {
    case ConstraintKind::strict: {
      auto& c = cb.codewords[static_cast<std::size_t>(pick_b(rng))];
      if (coin(rng)) {
        c = random_weight_word(n, strict_weight(cfg), rng);
      } else {
        // swap one 1 with one 0
        std::vector<int> ones;
        std::vector<int> zeros;
        for (int i = 0; i < n; ++i) (c[static_cast<std::size_t>(i)] ? ones : zeros).push_back(i);
        if (ones.empty() || zeros.empty()) return;
        std::uniform_int_distribution<std::size_t> po(0, ones.size() - 1);
        std::uniform_int_distribution<std::size_t> pz(0, zeros.size() - 1);
        std::swap(c[static_cast<std::size_t>(ones[po(rng)])],
                  c[static_cast<std::size_t>(zeros[pz(rng)])]);
      }
      break;
    }
    case ConstraintKind::relaxed: {
      // paired flip: a 1 in codeword a becomes 0, a 0 in codeword b becomes 1
      for (int attempt = 0; attempt < 64; ++attempt) {
        auto& a = cb.codewords[static_cast<std::size_t>(pick_b(rng))];
        auto& b = cb.codewords[static_cast<std::size_t>(pick_b(rng))];
        const auto i = static_cast<std::size_t>(pick_i(rng));
        const auto j = static_cast<std::size_t>(pick_i(rng));
        if (a[i] == 1 && b[j] == 0 && (&a != &b || i != j)) {
          a[i] = 0;
          b[j] = 1;
          return;
        }
      }
      break;
    }
    case ConstraintKind::nonlinear: {
      auto& c = cb.codewords[static_cast<std::size_t>(pick_b(rng))];
      if (coin(rng)) {
        c = random_word(n, rng);
      } else {
        auto& bit = c[static_cast<std::size_t>(pick_i(rng))];
        bit = static_cast<std::uint8_t>(1 - bit);
      }
      break;
    }
  }
}

void check_feasible(const SearchConfig& cfg) {
  if (cfg.codeword_length < 1 || cfg.messages < 2) {
    throw DomainError("search needs N >= 1 and M >= 2");
  }
  if (cfg.max_iterations < 1 || cfg.restarts < 1) {
    throw DomainError("search needs a positive iteration budget and restart count");
  }
  switch (cfg.kind) {
    case ConstraintKind::strict: {
      const int w = strict_weight(cfg);
      if (w < 0 || w > cfg.codeword_length) throw DomainError("weight outside [0, N]");
      if (binomial(cfg.codeword_length, w) < cfg.messages) {
        throw DomainError("fewer distinct constant-weight words than messages");
      }
      break;
    }
    case ConstraintKind::relaxed: {
      const double total = cfg.dimming * cfg.messages;
      if (std::abs(total - std::round(total)) > 1e-9) {
        throw DomainError("relaxed search needs d * M to be an integer");
      }
      if (cfg.dimming < 0.0 || cfg.dimming > cfg.codeword_length) {
        throw DomainError("dimming outside [0, N]");
      }
      break;
    }
    case ConstraintKind::nonlinear:
      cfg.led.validate();
      break;
  }
}

}  // namespace

SearchResult search_codebook(const SearchConfig& config, Rng& rng) {
  check_feasible(config);
  const std::int64_t per_restart = std::max<std::int64_t>(1, config.max_iterations / config.restarts);
  SearchResult result;
  std::optional<Score> best_score;
  for (int restart = 0; restart < config.restarts; ++restart) {
    Codebook current = initial_codebook(config, rng);
    Score current_score = score_of(current, config);
    result.trace.push_back({restart, 0, current_score.min_distance, current_score.pairs_at_min});
    for (std::int64_t it = 1; it <= per_restart; ++it) {
      if (config.target_min_distance && current_score.feasible &&
          current_score.min_distance >= *config.target_min_distance) {
        break;
      }
      Codebook candidate = current;
      propose(candidate, config, rng);
      const Score s = score_of(candidate, config);
      if (s.climb_key() >= current_score.climb_key()) {
        if (s.climb_key() > current_score.climb_key()) {
          result.trace.push_back({restart, it, s.min_distance, s.pairs_at_min});
        }
        current = std::move(candidate);
        current_score = s;
      }
    }
    if (!best_score || current_score.final_key() > best_score->final_key()) {
      best_score = current_score;
      result.codebook = current;
    }
    if (config.target_min_distance && best_score->feasible &&
        best_score->min_distance >= *config.target_min_distance) {
      break;
    }
  }
  result.min_distance = best_score->min_distance;
  result.feasible = best_score->feasible;
  return result;
}

SearchResult search_codebook(const SearchConfig& config) {
  Rng rng = make_rng(config.seed, 3);
  return search_codebook(config, rng);
}

int brute_force_cwc_distance(int codeword_length, int messages, int weight) {
  std::vector<Codeword> words;
  for (int mask = 0; mask < (1 << codeword_length); ++mask) {
    if (__builtin_popcount(static_cast<unsigned>(mask)) != weight) continue;
    Codeword w(static_cast<std::size_t>(codeword_length));
    for (int i = 0; i < codeword_length; ++i) w[static_cast<std::size_t>(i)] = (mask >> i) & 1;
    words.push_back(std::move(w));
  }
  if (static_cast<int>(words.size()) < messages) return 0;
  // Subsets of size M in lexicographic order, pruned by the current best.
  int best = 0;
  std::vector<std::size_t> chosen;
  std::function<void(std::size_t, int)> rec = [&](std::size_t start, int dmin) {
    if (static_cast<int>(chosen.size()) == messages) {
      best = std::max(best, dmin);
      return;
    }
    for (std::size_t k = start; k < words.size(); ++k) {
      int d = dmin;
      for (std::size_t c : chosen) d = std::min(d, hamming_distance(words[c], words[k]));
      if (d <= best) continue;
      chosen.push_back(k);
      rec(k + 1, d);
      chosen.pop_back();
    }
  };
  rec(0, codeword_length + 1);
  return best;
}

Matrix codeword_images(const Codebook& codebook, const Matrix& channel, const LedModel& led) {
  Matrix images(codebook.messages(), codebook.codeword_length);
  for (int b = 0; b < codebook.messages(); ++b) {
    images.row(b) = led_forward(codebook.row(b), led) * channel.transpose();
  }
  return images;
}

int ml_decode_images(const RowVector& received, const Matrix& images) {
  int best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (Eigen::Index b = 0; b < images.rows(); ++b) {
    const double dist = (received - images.row(b)).squaredNorm();
    if (dist < best_dist) {
      best_dist = dist;
      best = static_cast<int>(b);
    }
  }
  return best;
}

int ml_decode(const RowVector& received, const Codebook& codebook, const Matrix& channel,
              const LedModel& led) {
  return ml_decode_images(received, codeword_images(codebook, channel, led));
}

CsiModel parse_csi(const std::string& text) {
  if (text == "perfect") return {CsiMode::perfect, 0.0};
  if (text == "none") return {CsiMode::none, 0.0};
  const std::string prefix = "perturbed:";
  if (text.rfind(prefix, 0) == 0) {
    double var = 0.0;
    try {
      std::size_t used = 0;
      const std::string tail = text.substr(prefix.size());
      var = std::stod(tail, &used);
      if (used != tail.size()) throw std::invalid_argument(tail);
    } catch (const std::exception&) {
      throw ConfigError("invalid CSI error variance in '" + text + "'");
    }
    if (!(var >= 0.0)) throw ConfigError("CSI error variance must be >= 0");
    return {CsiMode::perturbed, var};
  }
  throw ConfigError("unknown CSI mode '" + text + "' (expected perfect, none, perturbed:<var>)");
}

std::string to_string(const CsiModel& csi) {
  switch (csi.mode) {
    case CsiMode::perfect: return "perfect";
    case CsiMode::none: return "none";
    case CsiMode::perturbed: {
      std::ostringstream s;
      s << "perturbed:" << csi.error_variance;
      return s.str();
    }
  }
  return "?";
}

Matrix perturb_csi(const Matrix& channel, double error_variance, Rng& rng) {
  if (!(error_variance >= 0.0)) throw DomainError("CSI error variance must be >= 0");
  if (error_variance == 0.0) return channel;
  Matrix est = channel;
  std::normal_distribution<double> gauss(0.0, std::sqrt(error_variance));
  for (Eigen::Index i = 0; i < est.size(); ++i) {
    if (channel.data()[i] != 0.0) est.data()[i] += gauss(rng);
  }
  return est;
}

std::string format_search_trace(const std::vector<SearchTraceRow>& trace) {
  std::ostringstream out;
  out << "restart,iteration,min_distance,pairs_at_min\n";
  for (const auto& r : trace) {
    out << r.restart << "," << r.iteration << "," << r.min_distance << "," << r.pairs_at_min
        << "\n";
  }
  return out.str();
}

}  // namespace vlcae
