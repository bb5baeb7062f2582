#include "vlcae/codebook.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "vlcae/binarizer.hpp"
#include "vlcae/error.hpp"
#include "vlcae/nn.hpp"
#include "vlcae/optics.hpp"

namespace vlcae {

std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::learned: return "learned";
    case Provenance::searched: return "searched";
    case Provenance::fixture: return "fixture";
  }
  return "?";
}

Provenance parse_provenance(const std::string& name) {
  if (name == "learned") return Provenance::learned;
  if (name == "searched") return Provenance::searched;
  if (name == "fixture") return Provenance::fixture;
  throw ConfigError("unknown provenance '" + name + "'");
}

RowVector Codebook::row(int message) const {
  const auto& c = codewords.at(static_cast<std::size_t>(message));
  RowVector r(static_cast<Eigen::Index>(c.size()));
  for (std::size_t i = 0; i < c.size(); ++i) r(static_cast<Eigen::Index>(i)) = c[i];
  return r;
}

void Codebook::validate() const {
  if (codeword_length < 1) throw ConfigError("codebook: N must be >= 1");
  if (codewords.empty()) throw ConfigError("codebook: no codewords");
  for (std::size_t b = 0; b < codewords.size(); ++b) {
    if (static_cast<int>(codewords[b].size()) != codeword_length) {
      throw ConfigError("codebook: codeword " + std::to_string(b) + " has wrong length");
    }
    for (auto bit : codewords[b]) {
      if (bit > 1) throw ConfigError("codebook: codeword " + std::to_string(b) + " not binary");
    }
  }
}

int hamming_weight(const Codeword& c) {
  return static_cast<int>(std::count(c.begin(), c.end(), std::uint8_t{1}));
}

int hamming_distance(const Codeword& a, const Codeword& b) {
  int d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += a[i] != b[i];
  return d;
}

CodebookAudit audit(const Codebook& codebook) {
  codebook.validate();
  CodebookAudit a;
  int total = 0;
  for (const auto& c : codebook.codewords) {
    a.weights.push_back(hamming_weight(c));
    total += a.weights.back();
  }
  a.average_weight = static_cast<double>(total) / codebook.messages();
  a.min_hamming_distance = codebook.messages() > 1 ? std::numeric_limits<int>::max() : 0;
  std::set<Codeword> seen;
  for (std::size_t i = 0; i < codebook.codewords.size(); ++i) {
    if (!seen.insert(codebook.codewords[i]).second) ++a.duplicate_count;
    for (std::size_t j = i + 1; j < codebook.codewords.size(); ++j) {
      const int d = hamming_distance(codebook.codewords[i], codebook.codewords[j]);
      ++a.distance_spectrum[d];
      a.min_hamming_distance = std::min(a.min_hamming_distance, d);
    }
  }
  return a;
}

double average_optical_power(const Codebook& codebook, const LedModel& led) {
  double total = 0.0;
  for (int b = 0; b < codebook.messages(); ++b) total += led_forward(codebook.row(b), led).sum();
  return total / codebook.messages();
}

Codebook flip_complement(const Codebook& codebook) {
  Codebook out = codebook;
  out.dimming = codebook.codeword_length - codebook.dimming;
  for (auto& c : out.codewords) {
    for (auto& bit : c) bit = static_cast<std::uint8_t>(1 - bit);
  }
  return out;
}

Codebook extract_codebook(const ModelParams& params, const BinarizerSpec& binarizer,
                          double dimming) {
  const double offset = binarizer.offset(dimming);
  Matrix x(params.messages, params.messages + 1);
  for (int b = 0; b < params.messages; ++b) {
    x.row(b) = encoder_input(params.messages, params.codeword_length, b, dimming);
  }
  const Matrix u = params.encoder.forward(x, Mode::eval);
  Codebook cb;
  cb.codeword_length = params.codeword_length;
  cb.dimming = dimming;
  cb.provenance = Provenance::learned;
  for (int b = 0; b < params.messages; ++b) {
    const RowVector s = deterministic_binarize(u.row(b), offset);
    Codeword c(static_cast<std::size_t>(s.size()));
    for (Eigen::Index i = 0; i < s.size(); ++i) c[static_cast<std::size_t>(i)] = s(i) > 0.5;
    cb.codewords.push_back(std::move(c));
  }
  return cb;
}

namespace {

struct FixtureTable {
  const char* id;
  double dimming;
  std::vector<const char*> rows;
};

const std::vector<FixtureTable>& fixture_tables() {
  static const std::vector<FixtureTable> tables = {
      {"IIa", 4.0, {"01110111", "10000101", "01011000", "10101010"}},
      {"IIb",
       2.5,
       {"10010001", "01010000", "01000011", "00011010", "00100001", "10100010", "11001000",
        "00000100"}},
      {"IIc",
       3.5,
       {"11001001", "10101010", "00010110", "00110000", "01000010", "00000101", "00011011",
        "01110011", "01101111", "10011100", "10100111", "01011000", "10000000", "01100100",
        "11010101", "00101001"}},
      {"IId",
       4.0,
       {"01011001", "00101011", "01111110", "00110000", "01000010", "00010111", "10011010",
        "11110011", "11001111", "00001100", "10100110", "11101000", "10000001", "01100101",
        "11010100", "10111101"}},
  };
  return tables;
}

Codeword parse_bits(const std::string& text, int line) {
  Codeword c;
  for (char ch : text) {
    if (ch == '0' || ch == '1') {
      c.push_back(static_cast<std::uint8_t>(ch - '0'));
    } else if (ch != ' ' && ch != '\t' && ch != '\r') {
      throw ParseError(std::string("invalid codeword symbol '") + ch + "'", line);
    }
  }
  return c;
}

}  // namespace

std::vector<std::string> fixture_ids() {
  std::vector<std::string> ids;
  for (const auto& t : fixture_tables()) ids.emplace_back(t.id);
  return ids;
}

Codebook load_fixture(const std::string& table_id) {
  for (const auto& t : fixture_tables()) {
    if (table_id == t.id) {
      Codebook cb;
      cb.codeword_length = 8;
      cb.dimming = t.dimming;
      cb.provenance = Provenance::fixture;
      for (const char* r : t.rows) cb.codewords.push_back(parse_bits(r, 0));
      return cb;
    }
  }
  throw ConfigError("unknown fixture '" + table_id + "' (expected IIa, IIb, IIc, IId)");
}

std::string format_codebook(const Codebook& codebook) {
  std::ostringstream out;
  out.precision(17);
  out << "# vlcae codebook\n";
  out << "N " << codebook.codeword_length << "\n";
  out << "M " << codebook.messages() << "\n";
  out << "d " << codebook.dimming << "\n";
  out << "provenance " << to_string(codebook.provenance) << "\n";
  for (const auto& c : codebook.codewords) {
    for (auto bit : c) out << static_cast<char>('0' + bit);
    out << "\n";
  }
  return out.str();
}

Codebook parse_codebook(const std::string& text) {
  Codebook cb;
  int declared_m = -1;
  bool have_n = false;
  bool have_d = false;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key)) continue;
    if (key == "N" || key == "M" || key == "d" || key == "provenance") {
      std::string value;
      if (!(ls >> value)) throw ParseError("missing value for '" + key + "'", line_no);
      try {
        if (key == "N") {
          cb.codeword_length = std::stoi(value);
          have_n = true;
        } else if (key == "M") {
          declared_m = std::stoi(value);
        } else if (key == "d") {
          cb.dimming = std::stod(value);
          have_d = true;
        } else {
          cb.provenance = parse_provenance(value);
        }
      } catch (const ConfigError& e) {
        throw ParseError(e.what(), line_no);
      } catch (const std::exception&) {
        throw ParseError("invalid value '" + value + "' for '" + key + "'", line_no);
      }
      continue;
    }
    if (!have_n) throw ParseError("codeword before 'N' header", line_no);
    Codeword c = parse_bits(line, line_no);
    if (static_cast<int>(c.size()) != cb.codeword_length) {
      throw ParseError("codeword has " + std::to_string(c.size()) + " symbols, expected " +
                           std::to_string(cb.codeword_length),
                       line_no);
    }
    cb.codewords.push_back(std::move(c));
  }
  if (!have_n) throw ParseError("missing 'N' header", 0);
  if (!have_d) throw ParseError("missing 'd' header", 0);
  if (cb.codewords.empty()) throw ParseError("no codewords", 0);
  if (declared_m >= 0 && declared_m != cb.messages()) {
    throw ParseError("header declares M=" + std::to_string(declared_m) + " but file has " +
                         std::to_string(cb.messages()) + " codewords",
                     line_no);
  }
  return cb;
}

void save_codebook(const Codebook& codebook, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path);
  out << format_codebook(codebook);
}

Codebook load_codebook(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open codebook file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_codebook(buf.str());
}

}  // namespace vlcae
