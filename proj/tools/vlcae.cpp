// vlcae command-line tool: train, eval, baseline, audit, compare.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "vlcae/baseline.hpp"
#include "vlcae/checkpoint.hpp"
#include "vlcae/codebook.hpp"
#include "vlcae/config.hpp"
#include "vlcae/error.hpp"
#include "vlcae/evaluator.hpp"
#include "vlcae/trainer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace vlcae;

namespace {

constexpr const char* tool_version = "0.1.0";

enum Exit { ok = 0, runtime_failure = 1, config_failure = 2, infeasible = 3 };

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

std::string dim_tag(double d) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", d);
  return buf;
}

// Options every run-type subcommand understands.
struct CommonOptions {
  std::string config_path;
  std::string manifest_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  int threads = 1;
  std::string out_dir = "vlcae_out";
  bool allow_infeasible = false;
  std::string isi_delay_mode;
  std::string csi;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config_path, "Run config file");
  cmd->add_option("--manifest", o.manifest_path,
                  "Reproduce the run recorded in a manifest.json (config snapshot and seed)");
  cmd->add_option("--set", o.overrides, "Override a config value: section.key=value")
      ->take_all();
  cmd->add_option("--seed", o.seed, "Seed for this subcommand");
  cmd->add_option("--threads", o.threads, "Worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--out-dir", o.out_dir, "Directory for artifacts");
  cmd->add_flag("--allow-infeasible", o.allow_infeasible,
                "Exit 0 even when a feasibility audit fails");
  cmd->add_option("--isi-delay-mode", o.isi_delay_mode, "literal or fractional");
  cmd->add_option("--csi", o.csi, "perfect, none or perturbed:<variance>");
}

struct Loaded {
  RunConfig config;
  std::string source_text;
  std::optional<std::uint64_t> manifest_seed;
};

Loaded load_config(const CommonOptions& o, bool required) {
  Loaded l;
  if (!o.manifest_path.empty()) {
    const json m = json::parse(read_file(o.manifest_path));
    l.source_text = m.at("config").get<std::string>();
    if (m.contains("seed")) l.manifest_seed = m.at("seed").get<std::uint64_t>();
  } else if (!o.config_path.empty()) {
    l.source_text = read_file(o.config_path);
  } else if (required) {
    throw ConfigError("--config or --manifest is required");
  } else {
    l.source_text = default_config_text();
  }
  try {
    l.config = parse_run_config(l.source_text);
  } catch (const ParseError& e) {
    const std::string where = !o.manifest_path.empty() ? o.manifest_path : o.config_path;
    throw ConfigError(where + ": " + e.what());
  }
  for (const auto& ov : o.overrides) apply_override(l.config, ov);
  if (!o.isi_delay_mode.empty()) {
    l.config.train.channel.delay_mode = parse_isi_delay_mode(o.isi_delay_mode);
  }
  if (!o.csi.empty()) l.config.eval.csi = parse_csi(o.csi);
  sync_derived_fields(l.config);
  return l;
}

json manifest_base(const std::string& command, const RunConfig& config, std::uint64_t seed) {
  json m;
  m["tool"] = "vlcae";
  m["version"] = tool_version;
  m["command"] = command;
  m["seed"] = seed;
  m["config"] = format_run_config(config);
  return m;
}

void finish_manifest(json& m, const fs::path& dir, const std::vector<std::string>& artifacts,
                     double seconds, const std::string& started) {
  json arts = json::array();
  for (const auto& a : artifacts) {
    arts.push_back({{"path", a}, {"hash", content_hash(read_file((dir / a).string()))}});
  }
  m["artifacts"] = arts;
  m["started_utc"] = started;
  m["finished_utc"] = utc_now();
  m["wall_clock_seconds"] = seconds;
  write_file(dir / "manifest.json", m.dump(2) + "\n");
}

json residual_json(const std::vector<double>& dims, const std::vector<double>& values) {
  json j = json::object();
  for (std::size_t i = 0; i < dims.size() && i < values.size(); ++i) j[dim_tag(dims[i])] = values[i];
  return j;
}

json audit_json(const Codebook& cb, const LedModel& led) {
  const CodebookAudit a = audit(cb);
  json spectrum = json::object();
  for (const auto& [dist, count] : a.distance_spectrum) spectrum[std::to_string(dist)] = count;
  json j;
  j["dimming"] = cb.dimming;
  j["average_weight"] = a.average_weight;
  j["min_distance"] = a.min_hamming_distance;
  j["duplicates"] = a.duplicate_count;
  j["weights"] = a.weights;
  j["distance_spectrum"] = spectrum;
  if (!led.is_linear()) j["average_optical_power"] = average_optical_power(cb, led);
  return j;
}

// ---------------------------------------------------------------- train

int cmd_train(const CommonOptions& o) {
  const std::string started = utc_now();
  const auto t0 = std::chrono::steady_clock::now();
  Loaded l = load_config(o, true);
  TrainConfig& tc = l.config.train;
  if (l.manifest_seed) tc.seed = *l.manifest_seed;
  if (o.seed) tc.seed = *o.seed;
  tc.validate();

  const fs::path dir(o.out_dir);
  fs::create_directories(dir / "codebooks");
  write_file(dir / "config.ini", format_run_config(l.config));

  // Append-only trace: header first, then one flushed line per iteration.
  std::ofstream trace(dir / "train_trace.csv", std::ios::binary | std::ios::trunc);
  trace << trace_header(tc.dimming_set) << "\n";
  trace.flush();
  TrainResult result = train(tc, [&](const TraceRow& row) {
    trace << format_trace_row(row) << "\n";
    trace.flush();
  });
  trace.close();

  Checkpoint ck{result.params, result.duals, result.binarizer, tc.dimming_set, tc.seed,
                format_run_config(l.config)};
  save_checkpoint(ck, (dir / "checkpoint.bin").string());

  std::vector<std::string> artifacts = {"config.ini", "train_trace.csv", "checkpoint.bin"};
  json books = json::array();
  bool all_feasible = true;
  for (double d : tc.dimming_set) {
    const Codebook cb = codebook_for(result.params, result.binarizer, tc, d);
    const std::string name = "codebooks/codebook_d" + dim_tag(d) + ".txt";
    save_codebook(cb, (dir / name).string());
    artifacts.push_back(name);
    json a = audit_json(cb, tc.led);
    const double metric = codebook_dimming_metric(cb, tc.led);
    a["feasible"] = std::abs(metric - d) <= tc.feasibility_tolerance;
    all_feasible = all_feasible && a["feasible"].get<bool>();
    a["file"] = name;
    books.push_back(a);
  }

  const TrainReport& r = result.report;
  json rep;
  rep["seed"] = tc.seed;
  rep["method"] = tc.penalty_mu ? "penalty" : "primal-dual";
  rep["iterations"] = tc.iterations();
  rep["feasible"] = r.feasible;
  rep["best_iteration"] = r.best_iteration;
  rep["best_lagrangian"] = r.best_objective;
  rep["best_validation_cost"] = r.best_cost;
  rep["final_residuals"] = residual_json(tc.dimming_set, r.final_residuals);
  rep["lambdas"] = residual_json(tc.dimming_set, result.duals.lambdas);
  rep["rho"] = result.duals.rho;
  json events = json::array();
  for (const auto& e : r.checkpoints) events.push_back({{"iteration", e.iteration}, {"lagrangian", e.objective}});
  rep["checkpoint_events"] = events;
  rep["codebooks"] = books;
  if (r.aborted) rep["abort_reason"] = r.abort_reason;
  write_file(dir / "train_report.json", rep.dump(2) + "\n");
  artifacts.push_back("train_report.json");

  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  json m = manifest_base("train", l.config, tc.seed);
  finish_manifest(m, dir, artifacts, secs, started);

  std::cout << "trained " << tc.iterations() << " iterations, best iteration " << r.best_iteration
            << ", validation cost " << r.best_cost << "\n";
  for (const auto& b : books) {
    std::cout << "  d=" << b["dimming"].get<double>() << " avg weight " << b["average_weight"].get<double>()
              << " min distance " << b["min_distance"].get<int>()
              << (b["feasible"].get<bool>() ? "" : "  INFEASIBLE") << "\n";
  }
  if (r.aborted) {
    std::cerr << "training aborted: " << r.abort_reason << "\n";
    return runtime_failure;
  }
  if ((!r.feasible || !all_feasible) && !o.allow_infeasible) {
    std::cerr << "no feasible checkpoint; rerun with --allow-infeasible to accept\n";
    return infeasible;
  }
  return ok;
}

// ---------------------------------------------------------------- eval

struct EvalOptions {
  std::string checkpoint;
  std::vector<std::string> codebooks;
  std::vector<std::string> fixtures;
  std::string systems = "dnn,ml";
};

int cmd_eval(const CommonOptions& o, const EvalOptions& e) {
  const std::string started = utc_now();
  const auto t0 = std::chrono::steady_clock::now();
  std::optional<Checkpoint> ck;
  CommonOptions co = o;
  Loaded l;
  if (!e.checkpoint.empty()) {
    ck = load_checkpoint(e.checkpoint);
    if (co.config_path.empty() && co.manifest_path.empty()) {
      l.source_text = ck->config_text;
      l.config = parse_run_config(l.source_text);
      for (const auto& ov : co.overrides) apply_override(l.config, ov);
      if (!co.isi_delay_mode.empty()) {
        l.config.train.channel.delay_mode = parse_isi_delay_mode(co.isi_delay_mode);
      }
      if (!co.csi.empty()) l.config.eval.csi = parse_csi(co.csi);
      sync_derived_fields(l.config);
    } else {
      l = load_config(co, false);
    }
  } else {
    l = load_config(co, false);
  }
  EvalConfig& ec = l.config.eval;
  if (l.manifest_seed) ec.seed = *l.manifest_seed;
  if (o.seed) ec.seed = *o.seed;
  ec.threads = o.threads;

  std::vector<Codebook> books;
  for (const auto& path : e.codebooks) books.push_back(load_codebook(path));
  for (const auto& id : e.fixtures) books.push_back(load_fixture(id));
  if (!ck && books.empty()) throw ConfigError("eval needs --checkpoint, --codebook or --fixture");

  if (ec.dimming.empty()) {
    if (ck) {
      ec.dimming = ck->dimming_set;
    } else {
      for (const auto& b : books) ec.dimming.push_back(b.dimming);
    }
  }
  ec.validate();

  const fs::path dir(o.out_dir);
  fs::create_directories(dir);
  EvalReport report;
  auto append = [&](const EvalReport& r) {
    report.rows.insert(report.rows.end(), r.rows.begin(), r.rows.end());
    report.notes.insert(report.notes.end(), r.notes.begin(), r.notes.end());
  };
  const bool want_dnn = e.systems.find("dnn") != std::string::npos;
  const bool want_ml = e.systems.find("ml") != std::string::npos;
  if (ck) {
    TrainConfig tc = l.config.train;
    tc.dimming_set = ck->dimming_set;
    if (want_dnn) append(measure_ser("dnn", DnnSystem{&ck->params, &ck->binarizer}, ec));
    if (want_ml && ec.csi.mode != CsiMode::none) {
      MlSystem ml;
      for (double d : ec.dimming) ml.codebooks.push_back(codebook_for(ck->params, ck->binarizer, tc, d));
      append(measure_ser("ml", ml, ec));
    }
  }
  if (!books.empty()) {
    // Group by provenance so learned/searched/fixture books get distinct labels.
    MlSystem ml{books};
    const std::string label = "ml-" + to_string(books.front().provenance);
    append(measure_ser(label, ml, ec));
  }

  write_file(dir / "eval_report.csv", format_eval_csv(report));
  write_file(dir / "eval_summary.txt", format_eval_summary(report));
  json notes = report.notes;
  write_file(dir / "eval_notes.json", notes.dump(2) + "\n");
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  json m = manifest_base("eval", l.config, ec.seed);
  if (!e.checkpoint.empty()) m["checkpoint"] = e.checkpoint;
  m["codebooks"] = e.codebooks;
  m["fixtures"] = e.fixtures;
  finish_manifest(m, dir, {"eval_report.csv", "eval_summary.txt", "eval_notes.json"}, secs, started);
  std::cout << format_eval_summary(report);
  return ok;
}

// ---------------------------------------------------------------- baseline

int cmd_baseline(const CommonOptions& o, const std::vector<double>& dims_flag) {
  const std::string started = utc_now();
  const auto t0 = std::chrono::steady_clock::now();
  Loaded l = load_config(o, true);
  SearchConfig sc = l.config.search;
  if (l.manifest_seed) sc.seed = *l.manifest_seed;
  if (o.seed) sc.seed = *o.seed;
  const std::vector<double> dims = dims_flag.empty() ? l.config.train.dimming_set : dims_flag;

  const fs::path dir(o.out_dir);
  fs::create_directories(dir / "codebooks");
  std::vector<std::string> artifacts;
  json books = json::array();
  bool all_feasible = true;
  std::ostringstream traces;
  traces << "dimming,restart,iteration,min_distance,pairs_at_min\n";
  for (double d : dims) {
    SearchConfig one = sc;
    one.dimming = d;
    const SearchResult r = search_codebook(one);
    const std::string name = "codebooks/searched_d" + dim_tag(d) + ".txt";
    save_codebook(r.codebook, (dir / name).string());
    artifacts.push_back(name);
    std::istringstream rows(format_search_trace(r.trace));
    std::string line;
    std::getline(rows, line);  // header
    while (std::getline(rows, line)) traces << dim_tag(d) << "," << line << "\n";
    json a = audit_json(r.codebook, sc.led);
    a["feasible"] = r.feasible;
    a["file"] = name;
    books.push_back(a);
    all_feasible = all_feasible && r.feasible;
    std::cout << "d=" << d << " min distance " << r.min_distance
              << (r.feasible ? "" : "  INFEASIBLE") << "\n";
  }
  write_file(dir / "search_trace.csv", traces.str());
  artifacts.push_back("search_trace.csv");
  json rep;
  rep["kind"] = to_string(sc.kind);
  rep["seed"] = sc.seed;
  rep["codebooks"] = books;
  write_file(dir / "baseline_report.json", rep.dump(2) + "\n");
  artifacts.push_back("baseline_report.json");
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  json m = manifest_base("baseline", l.config, sc.seed);
  finish_manifest(m, dir, artifacts, secs, started);
  if (!all_feasible && !o.allow_infeasible) return infeasible;
  return ok;
}

// ---------------------------------------------------------------- audit

int cmd_audit(const std::string& path, const std::string& fixture, const std::string& led_name) {
  Codebook cb;
  if (!fixture.empty()) {
    cb = load_fixture(fixture);
  } else if (!path.empty()) {
    cb = load_codebook(path);
  } else {
    throw ConfigError("audit needs a codebook path or --fixture");
  }
  const LedModel led = led_name == "kingbright" ? LedModel::kingbright() : LedModel::linear();
  const CodebookAudit a = audit(cb);
  std::cout << "codewords: " << cb.messages() << " x " << cb.codeword_length << "\n";
  std::cout << "target dimming: " << cb.dimming << "\n";
  std::cout << "average weight: " << a.average_weight << "\n";
  std::cout << "min distance: " << a.min_hamming_distance << "\n";
  std::cout << "duplicates: " << a.duplicate_count << "\n";
  std::cout << "weights:";
  for (int w : a.weights) std::cout << " " << w;
  std::cout << "\ndistance spectrum:";
  for (const auto& [dist, count] : a.distance_spectrum) std::cout << " " << dist << ":" << count;
  std::cout << "\n";
  if (!led.is_linear()) {
    std::cout << "average optical power: " << average_optical_power(cb, led) << "\n";
  }
  return ok;
}

// ---------------------------------------------------------------- compare

int cmd_compare(const std::string& a_path, const std::string& b_path, const std::string& sys_a,
                const std::string& sys_b, double target, const std::string& out) {
  EvalReport a = parse_eval_csv(read_file(a_path));
  EvalReport b = parse_eval_csv(read_file(b_path));
  if (!sys_a.empty()) a = filter_system(a, sys_a);
  if (!sys_b.empty()) b = filter_system(b, sys_b);
  const std::string text = format_comparison(compare(a, b, target));
  std::cout << text;
  if (!out.empty()) write_file(out, text);
  return ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dimmable VLC codebook learning and evaluation"};
  app.set_version_flag("--version", tool_version);
  bool print_default = false;
  app.add_flag("--print-default-config", print_default, "Print a commented default config");
  app.require_subcommand(0, 1);

  CommonOptions train_o, eval_o, base_o;
  auto* train_cmd = app.add_subcommand("train", "Train an encoder/decoder pair");
  add_common(train_cmd, train_o);

  EvalOptions eval_e;
  auto* eval_cmd = app.add_subcommand("eval", "Monte Carlo SER of a checkpoint and/or codebooks");
  add_common(eval_cmd, eval_o);
  eval_cmd->add_option("--checkpoint", eval_e.checkpoint, "checkpoint.bin from train");
  eval_cmd->add_option("--codebook", eval_e.codebooks, "Codebook file (ML decoding)")->take_all();
  eval_cmd->add_option("--fixture", eval_e.fixtures, "Built-in codebook id (ML decoding)")->take_all();
  eval_cmd->add_option("--systems", eval_e.systems, "For checkpoints: dnn, ml or dnn,ml");

  std::vector<double> base_dims;
  auto* base_cmd = app.add_subcommand("baseline", "Search constant-weight codebooks");
  add_common(base_cmd, base_o);
  base_cmd->add_option("--dimming", base_dims, "Dimming targets (default: code.dimming)")->take_all();

  std::string audit_path, audit_fixture, audit_led = "linear";
  auto* audit_cmd = app.add_subcommand("audit", "Weight and distance audit of a codebook");
  audit_cmd->add_option("codebook", audit_path, "Codebook file");
  audit_cmd->add_option("--fixture", audit_fixture, "Built-in codebook id (IIa..IId)");
  audit_cmd->add_option("--led", audit_led, "linear or kingbright")
      ->check(CLI::IsMember({"linear", "kingbright"}));

  std::string cmp_a, cmp_b, cmp_sys_a, cmp_sys_b, cmp_out;
  double cmp_target = 1e-3;
  auto* cmp_cmd = app.add_subcommand("compare", "SER ratio and dB gap between two eval reports");
  cmp_cmd->add_option("report_a", cmp_a, "eval_report.csv")->required();
  cmp_cmd->add_option("report_b", cmp_b, "eval_report.csv")->required();
  cmp_cmd->add_option("--system-a", cmp_sys_a, "Only rows of this system from report_a");
  cmp_cmd->add_option("--system-b", cmp_sys_b, "Only rows of this system from report_b");
  cmp_cmd->add_option("--target", cmp_target, "SER level for the dB gap");
  cmp_cmd->add_option("--out", cmp_out, "Also write the comparison here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? ok : config_failure;
  }

  try {
    if (print_default) {
      std::cout << default_config_text();
      return ok;
    }
    if (*train_cmd) return cmd_train(train_o);
    if (*eval_cmd) return cmd_eval(eval_o, eval_e);
    if (*base_cmd) return cmd_baseline(base_o, base_dims);
    if (*audit_cmd) return cmd_audit(audit_path, audit_fixture, audit_led);
    if (*cmp_cmd) return cmd_compare(cmp_a, cmp_b, cmp_sys_a, cmp_sys_b, cmp_target, cmp_out);
    std::cout << app.help();
    return config_failure;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return config_failure;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return config_failure;
  } catch (const DomainError& e) {
    std::cerr << "domain error: " << e.what() << "\n";
    return config_failure;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "manifest error: " << e.what() << "\n";
    return config_failure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return runtime_failure;
  }
}
