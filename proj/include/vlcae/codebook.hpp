#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "vlcae/types.hpp"

namespace vlcae {

struct ModelParams;
class BinarizerSpec;
struct LedModel;

using Codeword = std::vector<std::uint8_t>;

enum class Provenance { learned, searched, fixture };

std::string to_string(Provenance p);
Provenance parse_provenance(const std::string& name);

struct Codebook {
  int codeword_length = 0;  // N
  double dimming = 0.0;     // d
  std::vector<Codeword> codewords;
  Provenance provenance = Provenance::learned;

  int messages() const { return static_cast<int>(codewords.size()); }
  RowVector row(int message) const;
  /// Throws ConfigError when a codeword has the wrong length or a non-binary symbol.
  void validate() const;
};

struct CodebookAudit {
  double average_weight = 0.0;
  int min_hamming_distance = 0;
  int duplicate_count = 0;
  std::vector<int> weights;
  std::map<int, int> distance_spectrum;  // distance -> number of unordered pairs
};

int hamming_weight(const Codeword& c);
int hamming_distance(const Codeword& a, const Codeword& b);

/// Exhaustive pairwise statistics.
CodebookAudit audit(const Codebook& codebook);

/// (1/M) sum_b sum_i [g(s_b)]_i.
double average_optical_power(const Codebook& codebook, const LedModel& led);

/// Inverts every bit: a codebook for dimming d becomes one for N - d.
Codebook flip_complement(const Codebook& codebook);

/// Unit-step binarization of the eval-mode encoder output for every message.
Codebook extract_codebook(const ModelParams& params, const BinarizerSpec& binarizer,
                          double dimming);

/// Published N=8 learned codebooks: "IIa" (k=2, d=4), "IIb" (k=3, d=2.5),
/// "IIc" (k=4, d=3.5), "IId" (k=4, d=4).
Codebook load_fixture(const std::string& table_id);
std::vector<std::string> fixture_ids();

/// Text format: '#' comments, header lines "N <int>", "M <int>", "d <real>",
/// optional "provenance <name>", then one codeword per line as 0/1 characters.
std::string format_codebook(const Codebook& codebook);
Codebook parse_codebook(const std::string& text);
void save_codebook(const Codebook& codebook, const std::string& path);
Codebook load_codebook(const std::string& path);

}  // namespace vlcae
