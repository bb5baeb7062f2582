#include "vlcae/evaluator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "vlcae/error.hpp"

namespace vlcae {

double q_function(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }

ConfidenceInterval wilson_interval(std::int64_t errors, std::int64_t trials, double z) {
  if (trials <= 0) throw DomainError("Wilson interval needs at least one trial");
  if (errors < 0 || errors > trials) throw DomainError("error count outside [0, trials]");
  const double n = static_cast<double>(trials);
  const double p = static_cast<double>(errors) / n;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double center = (p + z2 / (2.0 * n)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
  return {errors == 0 ? 0.0 : std::max(0.0, center - half),
          errors == trials ? 1.0 : std::min(1.0, center + half)};
}

double snr_to_sigma(double dimming, int codeword_length, double snr_db, const LedModel& led,
                    const Codebook* codebook) {
  if (!std::isfinite(snr_db)) throw DomainError("SNR must be finite");
  const double snr = std::pow(10.0, snr_db / 10.0);
  if (led.is_linear()) return dimming / (codeword_length * snr);
  if (!codebook) throw DomainError("nonlinear LED SNR needs the codebook to compute E_s");
  const double symbol_energy = average_optical_power(*codebook, led) / codeword_length;
  return symbol_energy / snr;
}

double sigma_to_snr_db(double dimming, int codeword_length, double noise_variance) {
  return 10.0 * std::log10(dimming / (codeword_length * noise_variance));
}

void EvalConfig::validate() const {
  if (snr_db.empty()) throw ConfigError("eval: SNR grid must not be empty");
  if (!std::is_sorted(snr_db.begin(), snr_db.end())) {
    throw ConfigError("eval: SNR grid must be sorted");
  }
  if (trials_per_point < 1) throw ConfigError("eval: trials must be >= 1");
  if (dimming.empty()) throw ConfigError("eval: no dimming targets");
  if (threads < 1) throw ConfigError("eval: threads must be >= 1");
  if (chunk_size < 1) throw ConfigError("eval: chunk size must be >= 1");
  led.validate();
}

namespace {

// One (d, SNR) point split into chunks with their own streams.
struct Task {
  std::size_t point;
  std::int64_t begin;
  std::int64_t count;
  std::uint64_t stream;
};

template <typename ChunkFn>
std::vector<std::int64_t> run_chunks(const EvalConfig& config, std::size_t points,
                                     const ChunkFn& fn) {
  std::vector<Task> tasks;
  for (std::size_t p = 0; p < points; ++p) {
    std::int64_t chunk = 0;
    for (std::int64_t begin = 0; begin < config.trials_per_point; begin += config.chunk_size) {
      const std::int64_t count = std::min(config.chunk_size, config.trials_per_point - begin);
      tasks.push_back({p, begin, count, (static_cast<std::uint64_t>(p) << 32) |
                                            static_cast<std::uint64_t>(chunk++)});
    }
  }
  std::vector<std::int64_t> errors(tasks.size(), 0);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t t = next++; t < tasks.size(); t = next++) {
      Rng rng = make_rng(config.seed, tasks[t].stream);
      errors[t] = fn(tasks[t].point, tasks[t].count, rng);
    }
  };
  const int nthreads = std::max(1, std::min<int>(config.threads, static_cast<int>(tasks.size())));
  if (nthreads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < nthreads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  std::vector<std::int64_t> per_point(points, 0);
  for (std::size_t t = 0; t < tasks.size(); ++t) per_point[tasks[t].point] += errors[t];
  return per_point;
}

struct PointSpec {
  std::size_t dimming_index;
  double dimming;
  double snr_db;
  double noise_variance;
};

EvalReport assemble(const std::string& name, const std::vector<PointSpec>& points,
                    const std::vector<std::int64_t>& errors, std::int64_t trials) {
  EvalReport report;
  for (std::size_t p = 0; p < points.size(); ++p) {
    SerRow row;
    row.system = name;
    row.dimming = points[p].dimming;
    row.snr_db = points[p].snr_db;
    row.trials = trials;
    row.errors = errors[p];
    row.ser = static_cast<double>(errors[p]) / static_cast<double>(trials);
    const auto ci = wilson_interval(errors[p], trials);
    row.ci_low = ci.low;
    row.ci_high = ci.high;
    report.rows.push_back(row);
  }
  return report;
}

const Codebook& find_codebook(const std::vector<Codebook>& books, double dimming) {
  for (const auto& cb : books) {
    if (cb.dimming == dimming) return cb;
  }
  std::ostringstream msg;
  msg << "no codebook for dimming " << dimming;
  throw ConfigError(msg.str());
}

std::vector<PointSpec> make_points(const EvalConfig& config, const std::vector<Codebook>& books,
                                   int codeword_length) {
  std::vector<PointSpec> points;
  for (std::size_t di = 0; di < config.dimming.size(); ++di) {
    const double d = config.dimming[di];
    const Codebook& cb = find_codebook(books, d);
    for (double snr : config.snr_db) {
      points.push_back({di, d, snr, snr_to_sigma(d, codeword_length, snr, config.led, &cb)});
    }
  }
  return points;
}

int argmax_row(const Matrix& m, Eigen::Index r) {
  Eigen::Index idx = 0;
  m.row(r).maxCoeff(&idx);
  return static_cast<int>(idx);
}

}  // namespace

EvalReport measure_ser(const std::string& name, const DnnSystem& system,
                       const EvalConfig& config) {
  config.validate();
  if (!system.params || !system.binarizer) throw ConfigError("DNN system is incomplete");
  const ModelParams& params = *system.params;
  if (params.csi_input && config.csi.mode == CsiMode::none) {
    throw ConfigError("decoder was trained with CSI input; evaluation CSI cannot be 'none'");
  }
  const int n = params.codeword_length;
  const int m = params.messages;
  std::vector<Codebook> books;
  std::vector<Matrix> images;
  for (double d : config.dimming) {
    books.push_back(extract_codebook(params, *system.binarizer, d));
    Matrix img(m, n);
    for (int b = 0; b < m; ++b) img.row(b) = led_forward(books.back().row(b), config.led);
    images.push_back(std::move(img));
  }
  const auto points = make_points(config, books, n);

  auto chunk = [&](std::size_t p, std::int64_t count, Rng& rng) -> std::int64_t {
    const PointSpec& pt = points[p];
    std::uniform_int_distribution<int> pick(0, m - 1);
    Matrix xd(count, params.decoder_input_dim());
    std::vector<int> sent(static_cast<std::size_t>(count));
    for (std::int64_t t = 0; t < count; ++t) {
      const int b = pick(rng);
      sent[static_cast<std::size_t>(t)] = b;
      const Matrix h = config.channel.sample_matrix(n, rng);
      RowVector r = images[pt.dimming_index].row(b) * h.transpose();
      add_noise(r, pt.noise_variance, rng);
      if (params.csi_input) {
        const Matrix est = config.csi.mode == CsiMode::perturbed
                               ? perturb_csi(h, config.csi.error_variance, rng)
                               : h;
        xd.row(t) = decoder_input(r, pt.dimming, n, &est);
      } else {
        xd.row(t) = decoder_input(r, pt.dimming, n, nullptr);
      }
    }
    const Matrix probs = params.decoder.forward(xd, Mode::eval);
    std::int64_t errs = 0;
    for (std::int64_t t = 0; t < count; ++t) errs += argmax_row(probs, t) != sent[static_cast<std::size_t>(t)];
    return errs;
  };
  EvalReport report = assemble(name, points, run_chunks(config, points.size(), chunk),
                               config.trials_per_point);
  for (const auto& cb : books) {
    const auto a = audit(cb);
    std::ostringstream note;
    note << name << " d=" << cb.dimming << " average_weight=" << a.average_weight
         << " min_distance=" << a.min_hamming_distance << " duplicates=" << a.duplicate_count;
    report.notes.push_back(note.str());
  }
  return report;
}

EvalReport measure_ser(const std::string& name, const MlSystem& system,
                       const EvalConfig& config) {
  config.validate();
  if (config.csi.mode == CsiMode::none) {
    throw ConfigError("ML decoding needs channel knowledge (CSI perfect or perturbed)");
  }
  if (system.codebooks.empty()) throw ConfigError("ML system has no codebooks");
  const int n = system.codebooks.front().codeword_length;
  std::vector<const Codebook*> books;
  std::vector<Matrix> fixed_images;
  const bool fixed = !config.channel.is_random() && config.csi.mode == CsiMode::perfect;
  Rng unused = make_rng(0);
  for (double d : config.dimming) {
    books.push_back(&find_codebook(system.codebooks, d));
    if (fixed) {
      fixed_images.push_back(
          codeword_images(*books.back(), config.channel.sample_matrix(n, unused), config.led));
    }
  }
  const auto points = make_points(config, system.codebooks, n);

  auto chunk = [&](std::size_t p, std::int64_t count, Rng& rng) -> std::int64_t {
    const PointSpec& pt = points[p];
    const Codebook& cb = *books[pt.dimming_index];
    Matrix tx(cb.messages(), n);
    for (int b = 0; b < cb.messages(); ++b) tx.row(b) = led_forward(cb.row(b), config.led);
    std::uniform_int_distribution<int> pick(0, cb.messages() - 1);
    std::int64_t errs = 0;
    for (std::int64_t t = 0; t < count; ++t) {
      const int b = pick(rng);
      const Matrix h = config.channel.sample_matrix(n, rng);
      RowVector r = tx.row(b) * h.transpose();
      add_noise(r, pt.noise_variance, rng);
      int decoded = 0;
      if (fixed) {
        decoded = ml_decode_images(r, fixed_images[pt.dimming_index]);
      } else {
        const Matrix est = config.csi.mode == CsiMode::perturbed
                               ? perturb_csi(h, config.csi.error_variance, rng)
                               : h;
        decoded = ml_decode_images(r, tx * est.transpose());
      }
      errs += decoded != b;
    }
    return errs;
  };
  EvalReport report = assemble(name, points, run_chunks(config, points.size(), chunk),
                               config.trials_per_point);
  for (const Codebook* cb : books) {
    const auto a = audit(*cb);
    std::ostringstream note;
    note << name << " d=" << cb->dimming << " average_weight=" << a.average_weight
         << " min_distance=" << a.min_hamming_distance << " duplicates=" << a.duplicate_count;
    report.notes.push_back(note.str());
  }
  return report;
}

namespace {

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

}  // namespace

std::string format_eval_csv(const EvalReport& report) {
  std::string out = "system,d,snr_db,trials,errors,ser,ci_low,ci_high\n";
  for (const auto& r : report.rows) {
    out += r.system + "," + num(r.dimming) + "," + num(r.snr_db) + "," +
           std::to_string(r.trials) + "," + std::to_string(r.errors) + "," + num(r.ser) + "," +
           num(r.ci_low) + "," + num(r.ci_high) + "\n";
  }
  return out;
}

EvalReport parse_eval_csv(const std::string& text) {
  EvalReport report;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1 && line.rfind("system,", 0) == 0) continue;
    const auto f = split(line, ',');
    if (f.size() != 8) throw ParseError("expected 8 comma-separated fields", line_no);
    try {
      SerRow r;
      r.system = f[0];
      r.dimming = std::stod(f[1]);
      r.snr_db = std::stod(f[2]);
      r.trials = std::stoll(f[3]);
      r.errors = std::stoll(f[4]);
      r.ser = std::stod(f[5]);
      r.ci_low = std::stod(f[6]);
      r.ci_high = std::stod(f[7]);
      report.rows.push_back(r);
    } catch (const std::exception&) {
      throw ParseError("invalid numeric field", line_no);
    }
  }
  return report;
}

std::string format_eval_summary(const EvalReport& report) {
  std::vector<std::pair<std::string, double>> columns;
  std::set<double> snrs;
  std::map<std::tuple<std::string, double, double>, double> ser;
  for (const auto& r : report.rows) {
    const auto key = std::make_pair(r.system, r.dimming);
    if (std::find(columns.begin(), columns.end(), key) == columns.end()) columns.push_back(key);
    snrs.insert(r.snr_db);
    ser[{r.system, r.dimming, r.snr_db}] = r.ser;
  }
  std::ostringstream out;
  char buf[64];
  out << "SER vs SNR (dB)\n";
  std::snprintf(buf, sizeof buf, "%10s", "snr_db");
  out << buf;
  for (const auto& [sys, d] : columns) {
    std::ostringstream h;
    h << sys << "@d=" << d;
    std::snprintf(buf, sizeof buf, " %16s", h.str().c_str());
    out << buf;
  }
  out << "\n";
  for (double s : snrs) {
    std::snprintf(buf, sizeof buf, "%10.3f", s);
    out << buf;
    for (const auto& [sys, d] : columns) {
      const auto it = ser.find({sys, d, s});
      if (it == ser.end()) {
        std::snprintf(buf, sizeof buf, " %16s", "-");
      } else {
        std::snprintf(buf, sizeof buf, " %16.6e", it->second);
      }
      out << buf;
    }
    out << "\n";
  }
  for (const auto& n : report.notes) out << "# " << n << "\n";
  return out.str();
}

EvalReport filter_system(const EvalReport& report, const std::string& system) {
  EvalReport out;
  for (const auto& r : report.rows) {
    if (r.system == system) out.rows.push_back(r);
  }
  return out;
}

namespace {

bool overlaps(const SerRow& a, const SerRow& b) {
  return a.ci_low <= b.ci_high && b.ci_low <= a.ci_high;
}

// SNR at which a sorted SER curve crosses `target`, log-linear interpolation.
std::optional<double> crossing(const std::vector<const SerRow*>& curve, double target,
                               std::size_t* bracket) {
  for (std::size_t i = 0; i + 1 < curve.size(); ++i) {
    const double s0 = curve[i]->ser;
    const double s1 = curve[i + 1]->ser;
    if (s0 >= target && s1 < target && s0 > 0.0 && s1 > 0.0) {
      const double l0 = std::log10(s0);
      const double l1 = std::log10(s1);
      const double frac = (l0 - std::log10(target)) / (l0 - l1);
      if (bracket) *bracket = i;
      return curve[i]->snr_db + frac * (curve[i + 1]->snr_db - curve[i]->snr_db);
    }
    if (s0 == target) {
      if (bracket) *bracket = i;
      return curve[i]->snr_db;
    }
  }
  return std::nullopt;
}

}  // namespace

Comparison compare(const EvalReport& a, const EvalReport& b, double target_ser) {
  Comparison cmp;
  cmp.target_ser = target_ser;
  std::map<double, std::vector<std::pair<const SerRow*, const SerRow*>>> by_d;
  for (const auto& ra : a.rows) {
    for (const auto& rb : b.rows) {
      if (ra.dimming == rb.dimming && ra.snr_db == rb.snr_db) {
        by_d[ra.dimming].emplace_back(&ra, &rb);
        GapRow g;
        g.dimming = ra.dimming;
        g.snr_db = ra.snr_db;
        g.ser_a = ra.ser;
        g.ser_b = rb.ser;
        g.ratio = rb.ser > 0.0 ? ra.ser / rb.ser : (ra.ser == 0.0 ? 1.0 : INFINITY);
        g.ci_overlap = overlaps(ra, rb);
        cmp.rows.push_back(g);
        break;
      }
    }
  }
  for (auto& [d, pairs] : by_d) {
    std::sort(pairs.begin(), pairs.end(),
              [](const auto& x, const auto& y) { return x.first->snr_db < y.first->snr_db; });
    std::vector<const SerRow*> ca;
    std::vector<const SerRow*> cb;
    for (const auto& [x, y] : pairs) {
      ca.push_back(x);
      cb.push_back(y);
    }
    GapSummary s;
    s.dimming = d;
    std::size_t ia = 0;
    std::size_t ib = 0;
    s.snr_a = crossing(ca, target_ser, &ia);
    s.snr_b = crossing(cb, target_ser, &ib);
    if (s.snr_a && s.snr_b) {
      s.gain_db = *s.snr_b - *s.snr_a;
      bool any_overlap = false;
      for (std::size_t i : {ia, ia + 1, ib, ib + 1}) {
        if (i < ca.size()) any_overlap = any_overlap || overlaps(*ca[i], *cb[i]);
      }
      s.reliable = !any_overlap;
    }
    cmp.summaries.push_back(s);
  }
  return cmp;
}

std::string format_comparison(const Comparison& cmp) {
  std::ostringstream out;
  char buf[160];
  out << "d,snr_db,ser_a,ser_b,ratio_a_over_b,ci_overlap\n";
  for (const auto& r : cmp.rows) {
    std::snprintf(buf, sizeof buf, "%g,%g,%.6e,%.6e,%.6g,%d\n", r.dimming, r.snr_db, r.ser_a,
                  r.ser_b, r.ratio, r.ci_overlap ? 1 : 0);
    out << buf;
  }
  out << "\n# gap at target SER " << cmp.target_ser << " (positive: first system better)\n";
  out << "d,snr_a,snr_b,gain_db,reliable\n";
  for (const auto& s : cmp.summaries) {
    auto f = [](const std::optional<double>& v) {
      if (!v) return std::string("n/a");
      char b[32];
      std::snprintf(b, sizeof b, "%.4f", *v);
      return std::string(b);
    };
    out << s.dimming << "," << f(s.snr_a) << "," << f(s.snr_b) << "," << f(s.gain_db) << ","
        << (s.reliable ? "yes" : "no") << "\n";
  }
  return out.str();
}

}  // namespace vlcae
