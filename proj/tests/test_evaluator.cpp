#include <cmath>

#include "doctest.h"
#include "vlcae/error.hpp"
#include "vlcae/evaluator.hpp"
#include "vlcae/trainer.hpp"

using namespace vlcae;

namespace {

Codebook antipodal() {
  Codebook cb;
  cb.codeword_length = 8;
  cb.dimming = 4.0;
  cb.provenance = Provenance::fixture;
  cb.codewords = {{1, 1, 1, 1, 0, 0, 0, 0}, {0, 0, 0, 0, 1, 1, 1, 1}};
  return cb;
}

EvalConfig antipodal_config() {
  EvalConfig cfg;
  cfg.dimming = {4.0};
  cfg.snr_db = {0.0, 3.0};
  cfg.trials_per_point = 40000;
  cfg.chunk_size = 5000;
  return cfg;
}

}  // namespace

TEST_CASE("Q function reference values") {
  CHECK(q_function(0.0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(q_function(std::sqrt(2.0)) == doctest::Approx(0.078649603525142565).epsilon(1e-13));
  CHECK(q_function(3.0) == doctest::Approx(0.0013498980316300946).epsilon(1e-12));
}

TEST_CASE("Wilson interval") {
  const ConfidenceInterval a = wilson_interval(50, 1000);
  // independent closed-form evaluation
  CHECK(a.low == doctest::Approx(0.03813026239274882).epsilon(1e-12));
  CHECK(a.high == doctest::Approx(0.06531382024425081).epsilon(1e-12));
  const ConfidenceInterval z = wilson_interval(0, 1000);
  CHECK(z.low == 0.0);
  CHECK(z.high > 0.0);
  CHECK(z.high < 0.004);
  CHECK_THROWS_AS(wilson_interval(5, 0), DomainError);
}

TEST_CASE("SNR conversion") {
  CHECK(snr_to_sigma(4.0, 8, 0.0, LedModel::linear()) == doctest::Approx(0.5));
  CHECK(snr_to_sigma(4.0, 8, 10.0, LedModel::linear()) == doctest::Approx(0.05));
  CHECK(sigma_to_snr_db(4.0, 8, 0.1) == doctest::Approx(6.989700043360188));
  CHECK_THROWS_AS(snr_to_sigma(4.0, 8, 0.0, LedModel::kingbright()), DomainError);
  const Codebook iia = load_fixture("IIa");
  // E_s = average optical power / N
  CHECK(snr_to_sigma(4.0, 8, 0.0, LedModel::kingbright(), &iia) ==
        doctest::Approx(47.72907 / 8.0).epsilon(1e-6));
}

TEST_CASE("ML SER of the antipodal pair follows Q(sqrt(8) / (2 sigma))") {
  const EvalConfig cfg = antipodal_config();
  const EvalReport rep = measure_ser("ml", MlSystem{{antipodal()}}, cfg);
  REQUIRE(rep.rows.size() == 2);
  for (const SerRow& row : rep.rows) {
    const double sigma = std::sqrt(snr_to_sigma(4.0, 8, row.snr_db, LedModel::linear()));
    const double p = q_function(std::sqrt(8.0) / (2.0 * sigma));
    const double sd = std::sqrt(p * (1.0 - p) / static_cast<double>(row.trials));
    CHECK(std::abs(row.ser - p) <= 4.0 * sd);
    CHECK(row.ci_low <= row.ser);
    CHECK(row.ci_high >= row.ser);
  }
}

TEST_CASE("Monte Carlo results do not depend on the thread count") {
  EvalConfig cfg = antipodal_config();
  const EvalReport one = measure_ser("ml", MlSystem{{antipodal()}}, cfg);
  cfg.threads = 3;
  const EvalReport three = measure_ser("ml", MlSystem{{antipodal()}}, cfg);
  CHECK(format_eval_csv(one) == format_eval_csv(three));
}

TEST_CASE("very high SNR gives zero errors") {
  EvalConfig cfg = antipodal_config();
  cfg.snr_db = {60.0};
  cfg.trials_per_point = 2000;
  const EvalReport rep = measure_ser("ml", MlSystem{{antipodal()}}, cfg);
  CHECK(rep.rows[0].errors == 0);
}

TEST_CASE("ML without channel knowledge is rejected") {
  EvalConfig cfg = antipodal_config();
  cfg.csi.mode = CsiMode::none;
  CHECK_THROWS_AS(measure_ser("ml", MlSystem{{antipodal()}}, cfg), ConfigError);
}

TEST_CASE("DNN evaluation runs on an untrained model and needs CSI when the decoder does") {
  TrainConfig tc;
  tc.codeword_length = 4;
  tc.messages = 2;
  tc.dimming_set = {2.0};
  tc.encoder_hidden = {4};
  tc.decoder_hidden = {4};
  Rng rng = make_rng(3);
  const TrainingState st = init_training_state(tc, rng);
  const BinarizerSpec bin(tc.dimming_set, 4);
  EvalConfig cfg;
  cfg.dimming = {2.0};
  cfg.snr_db = {5.0};
  cfg.trials_per_point = 1000;
  cfg.chunk_size = 250;
  const EvalReport rep = measure_ser("dnn", DnnSystem{&st.params, &bin}, cfg);
  REQUIRE(rep.rows.size() == 1);
  CHECK(rep.rows[0].trials == 1000);
  CHECK(rep.rows[0].ser >= 0.0);
  CHECK(rep.rows[0].ser <= 1.0);

  tc.csi_input = true;
  Rng rng2 = make_rng(3);
  const TrainingState csi = init_training_state(tc, rng2);
  cfg.csi.mode = CsiMode::none;
  CHECK_THROWS_AS(measure_ser("dnn", DnnSystem{&csi.params, &bin}, cfg), ConfigError);
}

TEST_CASE("CSV round trip and parse errors") {
  const EvalReport rep = measure_ser("ml", MlSystem{{antipodal()}}, antipodal_config());
  const std::string csv = format_eval_csv(rep);
  const EvalReport back = parse_eval_csv(csv);
  CHECK(format_eval_csv(back) == csv);
  try {
    parse_eval_csv(csv + "ml,4,oops\n");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 4);
  }
}

TEST_CASE("comparison of identical reports shows no gap") {
  EvalReport rep;
  const double sers[] = {0.1, 0.01, 1e-4};
  for (int i = 0; i < 3; ++i) {
    SerRow r{"a", 4.0, 2.0 * i, 1000000, static_cast<std::int64_t>(sers[i] * 1e6), sers[i], 0, 0};
    const ConfidenceInterval ci = wilson_interval(r.errors, r.trials);
    r.ci_low = ci.low;
    r.ci_high = ci.high;
    rep.rows.push_back(r);
  }
  const Comparison same = compare(rep, rep);
  REQUIRE(same.summaries.size() == 1);
  REQUIRE(same.summaries[0].gain_db.has_value());
  CHECK(*same.summaries[0].gain_db == doctest::Approx(0.0));
  CHECK_FALSE(same.summaries[0].reliable);
  // crossing of 1e-3 halfway between 2 dB and 4 dB in log scale
  CHECK(*same.summaries[0].snr_a == doctest::Approx(3.0));

  EvalReport worse = rep;
  for (SerRow& r : worse.rows) {
    r.ser *= 2.0;
    r.errors *= 2;
    const ConfidenceInterval ci = wilson_interval(r.errors, r.trials);
    r.ci_low = ci.low;
    r.ci_high = ci.high;
  }
  const Comparison c = compare(worse, rep);
  for (const GapRow& g : c.rows) CHECK(g.ratio == doctest::Approx(2.0));
  CHECK(*c.summaries[0].gain_db < 0.0);
  CHECK(c.summaries[0].reliable);
  CHECK_FALSE(format_comparison(c).empty());
}
