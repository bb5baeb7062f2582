import math

import pytest

import vlcae


def test_offsets_and_q():
    assert vlcae.solve_offset(4.0, 8) == pytest.approx(0.0, abs=1e-12)
    assert vlcae.solve_offset(2.0, 8) == pytest.approx(2.1429316284998995, abs=1e-9)
    assert vlcae.sigmoid_window_mean(vlcae.solve_offset(3.0, 8), 4.0) == pytest.approx(3 / 8, abs=1e-9)
    assert vlcae.q_function(math.sqrt(2)) == pytest.approx(0.078649603525142565, rel=1e-12)
    assert vlcae.snr_to_sigma2(4.0, 8, 0.0) == pytest.approx(0.5)


def test_fixture_audit():
    expected = {"IIa": (4.0, 5), "IIb": (2.5, 3), "IIc": (3.5, 3), "IId": (4.0, 4)}
    assert sorted(vlcae.fixture_ids()) == sorted(expected)
    for key, (weight, dmin) in expected.items():
        a = vlcae.audit(vlcae.fixture(key))
        assert a["average_weight"] == weight
        assert a["min_distance"] == dmin


def test_bad_codebook_raises():
    with pytest.raises(ValueError):
        vlcae.audit([[0, 1, 2]])
    with pytest.raises(ValueError) as err:
        vlcae.parse_codebook("N 4\nM 2\nd 2\n1100\n00x1\n")
    assert "line 5" in str(err.value)


def test_isi_geometry():
    g = vlcae.isi_geometry(0.0)
    assert g["gain"] == pytest.approx(0.1479, abs=1e-3)
    assert g["delay_ratio"] == pytest.approx(1.8028, abs=1e-3)
    h = vlcae.isi_matrix(4, g["gain"], g["delay_ratio"])
    assert h.shape == (4, 4)
    assert h[0, 1] == 0.0
    assert h[1, 0] == h[2, 1] == h[3, 2]


def test_search_and_ml():
    words, dmin, feasible = vlcae.search_codebook(8, 4, 4.0, seed=3)
    assert feasible and dmin == 4
    assert all(sum(w) == 4 for w in words)
    antipodal = [[1, 1, 1, 1, 0, 0, 0, 0], [0, 0, 0, 0, 1, 1, 1, 1]]
    rows = vlcae.measure_ser_ml(antipodal, 4.0, [3.0], trials=20000)
    sigma = math.sqrt(vlcae.snr_to_sigma2(4.0, 8, 3.0))
    p = vlcae.q_function(math.sqrt(8) / (2 * sigma))
    assert abs(rows[0]["ser"] - p) < 4 * math.sqrt(p * (1 - p) / 20000)


def test_tiny_training_round_trip():
    cfg = """
[code]
codeword_length = 4
messages = 2
dimming = 2
[network]
encoder_hidden = 8
decoder_hidden = 8
[training]
batch_size = 50
train_samples = 20000
validation_samples = 500
noise_variance = 0.01
rho = 0.1
"""
    out = vlcae.train(cfg)
    again = vlcae.train(cfg)
    assert out["checkpoint"] == again["checkpoint"]
    book = out["codebooks"][2.0]
    assert len(book) == 2
    assert vlcae.checkpoint_codebooks(out["checkpoint"])[2.0] == book
    if out["feasible"]:
        assert vlcae.audit(book)["average_weight"] == 2.0
    rows = vlcae.measure_ser_checkpoint(out["checkpoint"], [10.0], trials=2000)
    assert rows[0]["system"] == "dnn"
    assert 0.0 <= rows[0]["ser"] <= 1.0


def test_config_errors():
    with pytest.raises(ValueError, match="code.dimming"):
        vlcae.normalize_config("[code]\ncodeword_length = 8\nmessages = 4\n")
    text = vlcae.normalize_config(vlcae.default_config(), ["training.seed=9"])
    assert "seed = 9" in text
