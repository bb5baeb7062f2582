#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "vlcae/baseline.hpp"
#include "vlcae/binarizer.hpp"
#include "vlcae/checkpoint.hpp"
#include "vlcae/codebook.hpp"
#include "vlcae/config.hpp"
#include "vlcae/error.hpp"
#include "vlcae/evaluator.hpp"
#include "vlcae/optics.hpp"
#include "vlcae/trainer.hpp"

namespace py = pybind11;
using namespace vlcae;

namespace {

Codebook make_codebook(const std::vector<std::vector<int>>& words, double dimming,
                       const std::string& provenance) {
  Codebook cb;
  cb.dimming = dimming;
  cb.provenance = parse_provenance(provenance);
  cb.codeword_length = words.empty() ? 0 : static_cast<int>(words.front().size());
  for (const auto& w : words) cb.codewords.emplace_back(w.begin(), w.end());
  cb.validate();
  return cb;
}

std::vector<std::vector<int>> words_of(const Codebook& cb) {
  std::vector<std::vector<int>> out;
  for (const auto& w : cb.codewords) out.emplace_back(w.begin(), w.end());
  return out;
}

py::dict audit_dict(const Codebook& cb) {
  const CodebookAudit a = audit(cb);
  py::dict d;
  d["average_weight"] = a.average_weight;
  d["min_distance"] = a.min_hamming_distance;
  d["duplicates"] = a.duplicate_count;
  d["weights"] = a.weights;
  d["distance_spectrum"] = a.distance_spectrum;
  return d;
}

py::list rows_of(const EvalReport& r) {
  py::list out;
  for (const SerRow& row : r.rows) {
    py::dict d;
    d["system"] = row.system;
    d["dimming"] = row.dimming;
    d["snr_db"] = row.snr_db;
    d["trials"] = row.trials;
    d["errors"] = row.errors;
    d["ser"] = row.ser;
    d["ci_low"] = row.ci_low;
    d["ci_high"] = row.ci_high;
    out.append(d);
  }
  return out;
}

EvalConfig eval_config_from(const RunConfig& rc, const std::vector<double>& snr_db,
                            std::int64_t trials, std::uint64_t seed, int threads) {
  EvalConfig ec = rc.eval;
  if (!snr_db.empty()) ec.snr_db = snr_db;
  if (trials > 0) ec.trials_per_point = trials;
  ec.seed = seed;
  ec.threads = threads;
  if (ec.dimming.empty()) ec.dimming = rc.train.dimming_set;
  return ec;
}

RunConfig run_config(const std::string& text, const std::vector<std::string>& overrides) {
  RunConfig rc = parse_run_config(text);
  for (const auto& o : overrides) apply_override(rc, o);
  sync_derived_fields(rc);
  return rc;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Dimmable VLC codebook learning: C++ core";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);
  py::register_exception<InvariantError>(m, "InvariantError", PyExc_RuntimeError);

  m.def("solve_offset", &solve_offset, py::arg("dimming"), py::arg("codeword_length"),
        py::arg("bound") = BinarizerSpec::default_bound);
  m.def("sigmoid_window_mean", &sigmoid_window_mean, py::arg("offset"), py::arg("bound"));
  m.def("q_function", &q_function);
  m.def(
      "wilson_interval",
      [](std::int64_t errors, std::int64_t trials) {
        const ConfidenceInterval ci = wilson_interval(errors, trials);
        return py::make_tuple(ci.low, ci.high);
      },
      py::arg("errors"), py::arg("trials"));
  m.def(
      "snr_to_sigma2",
      [](double dimming, int n, double snr_db) {
        return snr_to_sigma(dimming, n, snr_db, LedModel::linear());
      },
      py::arg("dimming"), py::arg("codeword_length"), py::arg("snr_db"));

  m.def(
      "isi_geometry",
      [](double position, const std::string& mode) {
        const IsiGeometry g = isi_geometry(position, parse_isi_delay_mode(mode));
        py::dict d;
        d["gain"] = g.gain;
        d["delay_seconds"] = g.delay_seconds;
        d["delay_ratio"] = g.delay_ratio;
        d["los_distance"] = g.los_distance;
        return d;
      },
      py::arg("position"), py::arg("mode") = "literal");
  m.def("isi_matrix", &isi_matrix, py::arg("codeword_length"), py::arg("gain"),
        py::arg("delay_ratio"));
  m.def(
      "led_forward",
      [](const RowVector& z, const std::string& preset) {
        return led_forward(z, preset == "kingbright" ? LedModel::kingbright() : LedModel::linear());
      },
      py::arg("z"), py::arg("led") = "kingbright");

  m.def("fixture_ids", &fixture_ids);
  m.def(
      "fixture", [](const std::string& id) { return words_of(load_fixture(id)); }, py::arg("id"));
  m.def(
      "audit",
      [](const std::vector<std::vector<int>>& words, double dimming) {
        return audit_dict(make_codebook(words, dimming, "fixture"));
      },
      py::arg("codewords"), py::arg("dimming") = 0.0);
  m.def(
      "parse_codebook",
      [](const std::string& text) {
        const Codebook cb = parse_codebook(text);
        return py::make_tuple(words_of(cb), cb.dimming);
      },
      py::arg("text"));
  m.def("brute_force_cwc_distance", &brute_force_cwc_distance);
  m.def(
      "search_codebook",
      [](int n, int messages, double dimming, const std::string& kind, std::uint64_t seed,
         std::int64_t max_iterations) {
        SearchConfig sc;
        sc.codeword_length = n;
        sc.messages = messages;
        sc.dimming = dimming;
        sc.kind = parse_constraint_kind(kind);
        sc.seed = seed;
        sc.max_iterations = max_iterations;
        const SearchResult r = search_codebook(sc);
        return py::make_tuple(words_of(r.codebook), r.min_distance, r.feasible);
      },
      py::arg("codeword_length"), py::arg("messages"), py::arg("dimming"),
      py::arg("kind") = "strict", py::arg("seed") = 1, py::arg("max_iterations") = 20000);

  m.def("default_config", &default_config_text);
  m.def(
      "normalize_config",
      [](const std::string& text, const std::vector<std::string>& overrides) {
        return format_run_config(run_config(text, overrides));
      },
      py::arg("text"), py::arg("overrides") = std::vector<std::string>{});

  m.def(
      "train",
      [](const std::string& text, const std::vector<std::string>& overrides) {
        const RunConfig rc = run_config(text, overrides);
        TrainResult r;
        {
          py::gil_scoped_release release;
          r = train(rc.train);
        }
        Checkpoint ck{r.params, r.duals, r.binarizer, rc.train.dimming_set, rc.train.seed,
                      format_run_config(rc)};
        py::dict out;
        out["feasible"] = r.report.feasible;
        out["best_iteration"] = r.report.best_iteration;
        out["best_validation_cost"] = r.report.best_cost;
        out["lambdas"] = r.duals.lambdas;
        out["final_residuals"] = r.report.final_residuals;
        py::dict books;
        for (double d : rc.train.dimming_set) {
          books[py::float_(d)] = words_of(codebook_for(r.params, r.binarizer, rc.train, d));
        }
        out["codebooks"] = books;
        out["checkpoint"] = py::bytes(serialize_checkpoint(ck));
        return out;
      },
      py::arg("config"), py::arg("overrides") = std::vector<std::string>{});

  m.def(
      "checkpoint_codebooks",
      [](const py::bytes& blob) {
        const Checkpoint ck = deserialize_checkpoint(std::string(blob));
        RunConfig rc = parse_run_config(ck.config_text);
        rc.train.dimming_set = ck.dimming_set;
        py::dict books;
        for (double d : ck.dimming_set) {
          books[py::float_(d)] = words_of(codebook_for(ck.params, ck.binarizer, rc.train, d));
        }
        return books;
      },
      py::arg("checkpoint"));

  m.def(
      "measure_ser_ml",
      [](const std::vector<std::vector<int>>& words, double dimming,
         const std::vector<double>& snr_db, std::int64_t trials, std::uint64_t seed, int threads) {
        EvalConfig ec;
        ec.dimming = {dimming};
        ec.snr_db = snr_db;
        ec.trials_per_point = trials;
        ec.seed = seed;
        ec.threads = threads;
        const MlSystem sys{{make_codebook(words, dimming, "searched")}};
        EvalReport r;
        {
          py::gil_scoped_release release;
          r = measure_ser("ml", sys, ec);
        }
        return rows_of(r);
      },
      py::arg("codewords"), py::arg("dimming"), py::arg("snr_db"), py::arg("trials") = 100000,
      py::arg("seed") = 7, py::arg("threads") = 1);

  m.def(
      "measure_ser_checkpoint",
      [](const py::bytes& blob, const std::vector<double>& snr_db, std::int64_t trials,
         std::uint64_t seed, int threads) {
        const Checkpoint ck = deserialize_checkpoint(std::string(blob));
        const RunConfig rc = run_config(ck.config_text, {});
        EvalConfig ec = eval_config_from(rc, snr_db, trials, seed, threads);
        EvalReport r;
        {
          py::gil_scoped_release release;
          r = measure_ser("dnn", DnnSystem{&ck.params, &ck.binarizer}, ec);
        }
        return rows_of(r);
      },
      py::arg("checkpoint"), py::arg("snr_db") = std::vector<double>{}, py::arg("trials") = 0,
      py::arg("seed") = 7, py::arg("threads") = 1);

  m.def(
      "content_hash", [](const py::bytes& b) { return content_hash(std::string(b)); },
      py::arg("data"));
}
