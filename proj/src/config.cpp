#include "vlcae/config.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "vlcae/error.hpp"

namespace vlcae {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double to_double(const std::string& s) {
  const char* begin = s.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (s.empty() || *end != '\0') throw ConfigError("expected a number, got '" + s + "'");
  return v;
}

long long to_int(const std::string& s) {
  const char* begin = s.c_str();
  char* end = nullptr;
  const long long v = std::strtoll(begin, &end, 10);
  if (s.empty() || *end != '\0') {
    // allow 5e5 style integers
    const double d = to_double(s);
    if (d != static_cast<double>(static_cast<long long>(d))) {
      throw ConfigError("expected an integer, got '" + s + "'");
    }
    return static_cast<long long>(d);
  }
  return v;
}

bool to_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError("expected true/false, got '" + s + "'");
}

std::vector<double> to_doubles(const std::string& s) {
  std::vector<double> out;
  for (const auto& item : split_list(s, ',')) out.push_back(to_double(item));
  return out;
}

std::vector<int> to_ints(const std::string& s) {
  std::vector<int> out;
  for (const auto& item : split_list(s, ',')) out.push_back(static_cast<int>(to_int(item)));
  return out;
}

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

template <typename T>
std::string join(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ", ";
    if constexpr (std::is_floating_point_v<T>) {
      out += num(v[i]);
    } else {
      out += std::to_string(v[i]);
    }
  }
  return out;
}

Matrix to_matrix(const std::string& s) {
  std::string text;
  for (const auto& row : split_list(s, ';')) text += row + "\n";
  return parse_matrix_text(text);
}

std::string format_matrix(const Matrix& m) {
  std::string out;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    if (r) out += "; ";
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c) out += " ";
      out += num(m(r, c));
    }
  }
  return out;
}

using Setter = std::function<void(RunConfig&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"code.codeword_length",
       [](RunConfig& c, const std::string& v) { c.train.codeword_length = static_cast<int>(to_int(v)); }},
      {"code.messages",
       [](RunConfig& c, const std::string& v) { c.train.messages = static_cast<int>(to_int(v)); }},
      {"code.dimming", [](RunConfig& c, const std::string& v) { c.train.dimming_set = to_doubles(v); }},
      {"network.architecture",
       [](RunConfig& c, const std::string& v) { c.train.architecture = parse_architecture_preset(v); }},
      {"network.encoder_hidden", [](RunConfig& c, const std::string& v) { c.train.encoder_hidden = to_ints(v); }},
      {"network.decoder_hidden", [](RunConfig& c, const std::string& v) { c.train.decoder_hidden = to_ints(v); }},
      {"network.batch_norm", [](RunConfig& c, const std::string& v) { c.train.batch_norm = to_bool(v); }},
      {"network.csi_input", [](RunConfig& c, const std::string& v) { c.train.csi_input = to_bool(v); }},
      {"training.batch_size",
       [](RunConfig& c, const std::string& v) { c.train.batch_size = static_cast<int>(to_int(v)); }},
      {"training.learning_rate", [](RunConfig& c, const std::string& v) { c.train.learning_rate = to_double(v); }},
      {"training.dual_learning_rate",
       [](RunConfig& c, const std::string& v) { c.train.dual_learning_rate = to_double(v); }},
      {"training.train_samples", [](RunConfig& c, const std::string& v) { c.train.train_samples = to_int(v); }},
      {"training.epochs", [](RunConfig& c, const std::string& v) { c.train.epochs = static_cast<int>(to_int(v)); }},
      {"training.validation_samples",
       [](RunConfig& c, const std::string& v) { c.train.validation_samples = static_cast<int>(to_int(v)); }},
      {"training.validation_cadence",
       [](RunConfig& c, const std::string& v) { c.train.validation_cadence = static_cast<int>(to_int(v)); }},
      {"training.screen_every_step",
       [](RunConfig& c, const std::string& v) { c.train.screen_every_step = to_bool(v); }},
      {"training.feasibility_tolerance",
       [](RunConfig& c, const std::string& v) { c.train.feasibility_tolerance = to_double(v); }},
      {"training.rho", [](RunConfig& c, const std::string& v) { c.train.rho = to_double(v); }},
      {"training.penalty_mu",
       [](RunConfig& c, const std::string& v) {
         if (v.empty() || v == "none") {
           c.train.penalty_mu.reset();
         } else {
           c.train.penalty_mu = to_double(v);
         }
       }},
      {"training.clamp_duals", [](RunConfig& c, const std::string& v) { c.train.clamp_duals = to_bool(v); }},
      {"training.binarizer_bound",
       [](RunConfig& c, const std::string& v) { c.train.binarizer_bound = to_double(v); }},
      {"training.seed",
       [](RunConfig& c, const std::string& v) { c.train.seed = static_cast<std::uint64_t>(to_int(v)); }},
      {"training.noise_variance",
       [](RunConfig& c, const std::string& v) { c.train.channel.noise_variance = to_double(v); }},
      {"channel.kind", [](RunConfig& c, const std::string& v) { c.train.channel.kind = parse_channel_kind(v); }},
      {"channel.matrix",
       [](RunConfig& c, const std::string& v) { c.train.channel.fixed_matrix = v.empty() ? Matrix() : to_matrix(v); }},
      {"channel.matrix_file",
       [](RunConfig& c, const std::string& v) {
         if (!v.empty()) c.train.channel.fixed_matrix = load_matrix_file(v);
       }},
      {"channel.isi_delay_mode",
       [](RunConfig& c, const std::string& v) { c.train.channel.delay_mode = parse_isi_delay_mode(v); }},
      {"led.preset",
       [](RunConfig& c, const std::string& v) {
         if (v == "linear") {
           c.train.led = LedModel::linear();
         } else if (v == "kingbright") {
           c.train.led = LedModel::kingbright();
         } else {
           throw ConfigError("unknown LED preset '" + v + "' (expected linear, kingbright)");
         }
       }},
      {"led.coefficients", [](RunConfig& c, const std::string& v) { c.train.led.coefficients = to_doubles(v); }},
      {"led.memory", [](RunConfig& c, const std::string& v) { c.train.led.memory = to_double(v); }},
      {"eval.snr_db", [](RunConfig& c, const std::string& v) { c.eval.snr_db = to_doubles(v); }},
      {"eval.trials", [](RunConfig& c, const std::string& v) { c.eval.trials_per_point = to_int(v); }},
      {"eval.dimming", [](RunConfig& c, const std::string& v) { c.eval.dimming = to_doubles(v); }},
      {"eval.csi", [](RunConfig& c, const std::string& v) { c.eval.csi = parse_csi(v); }},
      {"eval.seed", [](RunConfig& c, const std::string& v) { c.eval.seed = static_cast<std::uint64_t>(to_int(v)); }},
      {"eval.chunk_size", [](RunConfig& c, const std::string& v) { c.eval.chunk_size = to_int(v); }},
      {"baseline.kind", [](RunConfig& c, const std::string& v) { c.search.kind = parse_constraint_kind(v); }},
      {"baseline.target_min_distance",
       [](RunConfig& c, const std::string& v) {
         if (v.empty() || v == "none") {
           c.search.target_min_distance.reset();
         } else {
           c.search.target_min_distance = static_cast<int>(to_int(v));
         }
       }},
      {"baseline.max_iterations", [](RunConfig& c, const std::string& v) { c.search.max_iterations = to_int(v); }},
      {"baseline.restarts", [](RunConfig& c, const std::string& v) { c.search.restarts = static_cast<int>(to_int(v)); }},
      {"baseline.seed",
       [](RunConfig& c, const std::string& v) { c.search.seed = static_cast<std::uint64_t>(to_int(v)); }},
  };
  return table;
}

const std::vector<std::string>& required_keys() {
  static const std::vector<std::string> keys = {"code.codeword_length", "code.messages",
                                                "code.dimming"};
  return keys;
}

void apply(RunConfig& config, const std::string& key, const std::string& value, int line) {
  const auto& table = setters();
  const auto it = table.find(key);
  if (it == table.end()) {
    if (line > 0) throw ParseError("unknown key '" + key + "'", line);
    throw ConfigError("unknown key '" + key + "'");
  }
  try {
    it->second(config, value);
  } catch (const ParseError& e) {
    throw ParseError(key + ": " + e.what(), line);
  } catch (const std::exception& e) {
    if (line > 0) throw ParseError(key + ": " + e.what(), line);
    throw ConfigError(key + ": " + e.what());
  }
}

}  // namespace

void sync_derived_fields(RunConfig& config) {
  config.eval.led = config.train.led;
  config.eval.channel = config.train.channel;
  config.search.codeword_length = config.train.codeword_length;
  config.search.messages = config.train.messages;
  config.search.led = config.train.led;
  config.search.feasibility_tolerance = config.train.feasibility_tolerance;
}

RunConfig parse_run_config(const std::string& text) {
  RunConfig config;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ParseError("unterminated section header", line_no);
      section = trim(line.substr(1, line.size() - 2));
      static const std::set<std::string> sections = {"code", "network", "training", "channel",
                                                     "led", "eval", "baseline"};
      if (!sections.count(section)) throw ParseError("unknown section [" + section + "]", line_no);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("expected 'key = value'", line_no);
    if (section.empty()) throw ParseError("key outside of any [section]", line_no);
    const std::string key = section + "." + trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!seen.insert(key).second) throw ParseError("duplicate key '" + key + "'", line_no);
    apply(config, key, value, line_no);
  }
  for (const auto& key : required_keys()) {
    if (!seen.count(key)) throw ConfigError("missing required field '" + key + "'");
  }
  if (config.train.dimming_set.empty()) {
    throw ConfigError("required field 'code.dimming' is empty");
  }
  sync_derived_fields(config);
  return config;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str());
}

void apply_override(RunConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override must look like section.key=value");
  apply(config, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)), 0);
  sync_derived_fields(config);
}

std::string format_run_config(const RunConfig& c) {
  const TrainConfig& t = c.train;
  std::ostringstream out;
  out << "[code]\n"
      << "codeword_length = " << t.codeword_length << "\n"
      << "messages = " << t.messages << "\n"
      << "dimming = " << join(t.dimming_set) << "\n\n";
  out << "[network]\n"
      << "architecture = " << to_string(t.architecture) << "\n"
      << "encoder_hidden = " << join(t.encoder_hidden) << "\n"
      << "decoder_hidden = " << join(t.decoder_hidden) << "\n"
      << "batch_norm = " << (t.batch_norm ? "true" : "false") << "\n"
      << "csi_input = " << (t.csi_input ? "true" : "false") << "\n\n";
  out << "[training]\n"
      << "batch_size = " << t.batch_size << "\n"
      << "learning_rate = " << num(t.learning_rate) << "\n"
      << "dual_learning_rate = " << num(t.dual_learning_rate) << "\n"
      << "train_samples = " << t.train_samples << "\n"
      << "epochs = " << t.epochs << "\n"
      << "validation_samples = " << t.validation_samples << "\n"
      << "validation_cadence = " << t.validation_cadence << "\n"
      << "screen_every_step = " << (t.screen_every_step ? "true" : "false") << "\n"
      << "feasibility_tolerance = " << num(t.feasibility_tolerance) << "\n"
      << "rho = " << num(t.rho) << "\n"
      << "penalty_mu = " << (t.penalty_mu ? num(*t.penalty_mu) : std::string("none")) << "\n"
      << "clamp_duals = " << (t.clamp_duals ? "true" : "false") << "\n"
      << "binarizer_bound = " << num(t.binarizer_bound) << "\n"
      << "seed = " << t.seed << "\n"
      << "noise_variance = " << num(t.channel.noise_variance) << "\n\n";
  out << "[channel]\n"
      << "kind = " << to_string(t.channel.kind) << "\n"
      << "matrix = " << format_matrix(t.channel.fixed_matrix) << "\n"
      << "isi_delay_mode = " << to_string(t.channel.delay_mode) << "\n\n";
  out << "[led]\n"
      << "coefficients = " << join(t.led.coefficients) << "\n"
      << "memory = " << num(t.led.memory) << "\n\n";
  out << "[eval]\n"
      << "snr_db = " << join(c.eval.snr_db) << "\n"
      << "trials = " << c.eval.trials_per_point << "\n"
      << "dimming = " << join(c.eval.dimming) << "\n"
      << "csi = " << to_string(c.eval.csi) << "\n"
      << "seed = " << c.eval.seed << "\n"
      << "chunk_size = " << c.eval.chunk_size << "\n\n";
  out << "[baseline]\n"
      << "kind = " << to_string(c.search.kind) << "\n"
      << "target_min_distance = "
      << (c.search.target_min_distance ? std::to_string(*c.search.target_min_distance)
                                       : std::string("none"))
      << "\n"
      << "max_iterations = " << c.search.max_iterations << "\n"
      << "restarts = " << c.search.restarts << "\n"
      << "seed = " << c.search.seed << "\n";
  return out.str();
}

std::string default_config_text() {
  return R"(# vlcae run configuration.
# Syntax: [section] headers, key = value, '#' starts a comment.
# Lists are comma-separated. Matrices are rows separated by ';'.

[code]
# N, bits per codeword.
codeword_length = 8
# M = 2^k messages.
messages = 4
# Dimming targets d (average codeword weight), strictly increasing, 0 < d < N.
# Targets N - d are served by complementing the codebook of d.
dimming = 2, 2.5, 3, 3.5, 4

[network]
# Hidden-layer preset: n8 (2M^2, M^2, M^2/2), n12 (24,12,12,6 x M^2),
# isi (32,16,8,4,1 x M^2). The decoder mirrors the encoder.
architecture = n8
# Explicit hidden widths; empty keeps the preset.
encoder_hidden =
decoder_hidden =
# Batch normalization on hidden layers.
batch_norm = true
# Feed vec(H) to the decoder.
csi_input = false

[training]
batch_size = 500
learning_rate = 0.001
# Adam step size for the multiplier ascent.
dual_learning_rate = 0.001
# Messages drawn per epoch; 0 means 5e5 * M.
train_samples = 0
epochs = 1
validation_samples = 10000
# Validate (and maybe checkpoint) every this many mini-batches.
validation_cadence = 100
# Also check codebook feasibility after every step and validate feasible iterates.
screen_every_step = true
# A codebook is feasible when max_d |metric - d| <= this.
feasibility_tolerance = 0.05
# Quadratic weight of the augmented Lagrangian.
rho = 3e-6
# A number switches to the penalty trainer C + mu sum (F_d - d)^2.
penalty_mu = none
# Clamp multipliers at zero after each ascent step.
clamp_duals = false
# Window bound B used to solve the binarizer offsets.
binarizer_bound = 4
seed = 1
# Training noise variance sigma^2.
noise_variance = 0.1

[channel]
# identity, fixed (uses matrix or matrix_file) or isi_random (fresh PD position per sample).
kind = identity
# Inline N x N matrix, rows separated by ';'. matrix_file reads whitespace-separated rows.
matrix =
# literal uses tau/T as is; fractional uses its fractional part.
isi_delay_mode = literal

[led]
# Polynomial coefficients a_1..a_K of g and the memory factor zeta.
# 'preset = kingbright' or 'preset = linear' sets both.
coefficients = 1
memory = 0

[eval]
snr_db = 0, 2, 4, 6, 8, 10
trials = 100000
# Empty evaluates every code.dimming target.
dimming =
# perfect, none, or perturbed:<variance>.
csi = perfect
seed = 7
# Trials per independent random stream.
chunk_size = 10000

[baseline]
# strict (every codeword weight d), relaxed (average weight d), nonlinear (average optical power d).
kind = strict
# Stop early once this minimum distance is reached; none searches the full budget.
target_min_distance = none
max_iterations = 20000
restarts = 20
seed = 1
)";
}

}  // namespace vlcae
