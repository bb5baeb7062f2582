#pragma once

// Plain-text run configuration: `[section]` headers and `key = value` lines,
// `#` comments. Lists are comma-separated, matrices are rows separated by `;`.

#include <string>
#include <vector>

#include "vlcae/baseline.hpp"
#include "vlcae/evaluator.hpp"
#include "vlcae/trainer.hpp"

namespace vlcae {

struct RunConfig {
  TrainConfig train;
  EvalConfig eval;       // eval.dimming empty means "same as code.dimming"
  SearchConfig search;   // dimming/N/M/LED come from [code] and [led]
};

/// Parses a config file body. Syntax and value errors raise ParseError with
/// the offending line; missing required keys (code.codeword_length,
/// code.messages, code.dimming) raise ConfigError naming the key.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);

/// Applies one `section.key=value` override on top of a parsed config.
void apply_override(RunConfig& config, const std::string& assignment);

/// Canonical text form; parse_run_config(format_run_config(c)) == c.
std::string format_run_config(const RunConfig& config);

/// Fully commented default config.
std::string default_config_text();

/// Copies [code]/[led]/[channel] into the eval and search sections.
void sync_derived_fields(RunConfig& config);

}  // namespace vlcae
