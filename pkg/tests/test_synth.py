import numpy as np
import pytest

from roadrough.align import pair_by_time
from roadrough.ingest import parse_accel_log, parse_iri_log
from roadrough.signal import per_second_features
from roadrough.synth import (
    SynthScenario,
    constant_magnitude_stream,
    generate,
    paper_like_scenario,
    random_generator_network,
    scenario_preset,
    smooth_random_walk,
    with_seed,
    write_dataset,
)


def test_scenario_validation():
    with pytest.raises(ValueError):
        SynthScenario(route_km=0)
    with pytest.raises(ValueError):
        SynthScenario(coupling="quarter-car")
    with pytest.raises(ValueError):
        SynthScenario(coupling="linear", coupling_params={"slope": 1.0})
    with pytest.raises(ValueError):
        SynthScenario(coupling="tansig_network", coupling_params={"strength": 1.5})
    with pytest.raises(ValueError):
        SynthScenario(noise_sigma=-0.1)
    with pytest.raises(ValueError):
        scenario_preset("bumpy")


def test_default_survey_geometry():
    s = paper_like_scenario()
    assert (s.route_km, s.speed_mps, s.iri_spacing_m, s.accel_hz) == (9.0, 15.0, 5.0, 100)
    assert s.n_seconds == 600 and s.n_iri_records == 1800


def test_lengths_consistent():
    accel, iri, truth = generate(SynthScenario(route_km=0.9, seed=1))
    assert len(accel) == 60 * 100
    assert len(iri) == 180
    assert len(truth.iri) == len(truth.feature) == 60
    lo, hi = SynthScenario().iri_bounds
    assert truth.iri.min() >= lo and truth.iri.max() <= hi


@pytest.mark.parametrize("name", ["paper-like", "none", "linear", "tansig"])
def test_generate_byte_identical_per_seed(name, tmp_path):
    s = scenario_preset(name, seed=11)
    a = write_dataset(s, tmp_path / "a")
    b = write_dataset(s, tmp_path / "b")
    for key in ("accel", "iri", "truth"):
        assert a[key].read_bytes() == b[key].read_bytes()
    c = write_dataset(with_seed(s, 12), tmp_path / "c")
    assert c["accel"].read_bytes() != a["accel"].read_bytes()


def test_round_trip_features(survey_dataset):
    truth = survey_dataset["truth"]
    feats = survey_dataset["features"]
    got = np.array([f.mean_magnitude for f in feats])
    assert len(got) == 600
    assert np.max(np.abs(got - truth.feature)) <= 1e-9


def test_iri_record_means_equal_truth(survey_dataset):
    pairing = survey_dataset["pairing"]
    truth = survey_dataset["truth"]
    got = np.array([p.iri_mean for p in pairing])
    assert np.max(np.abs(got - truth.iri)) <= 1e-9


def test_tansig_generator_is_oracle():
    s = scenario_preset("tansig", seed=5)
    accel, iri, truth = generate(s)
    from roadrough.model import predict

    preds = dict(predict(truth.generator, per_second_features(accel)))
    for k in range(10, 20):
        assert preds[k] == pytest.approx(truth.iri[k], abs=1e-9)


def test_symmetric_generator_is_even():
    rng = np.random.default_rng(0)
    g = random_generator_network(rng, symmetric=True)
    x = rng.uniform(0.8, 1.2, size=(20, 5))
    mirrored = 2.0 - x  # reflect about the centre 1.0 of the feature range
    assert np.allclose(g.predict(x), g.predict(mirrored), atol=1e-12)
    with pytest.raises(ValueError):
        random_generator_network(rng, hidden_units=3, symmetric=True)


def test_random_walk_stays_in_bounds():
    w = smooth_random_walk(np.random.default_rng(3), 5000, (0.5, 8.0))
    assert w.min() >= 0.5 and w.max() <= 8.0
    assert np.std(w) > 0.1


def test_linear_coupling_is_linear():
    _, _, truth = generate(scenario_preset("linear", seed=3))
    assert np.allclose(truth.clean_feature, 0.8 + 0.05 * truth.iri)


def test_constant_magnitude_stream():
    s = constant_magnitude_stream(9.81, seconds=3, hz=50)
    assert len(s) == 150
    mags = np.sqrt(s.ax**2 + s.ay**2 + s.az**2)
    assert np.allclose(mags, 9.81, rtol=1e-15)


def test_written_files_parse(tmp_path):
    paths = write_dataset(SynthScenario(route_km=0.3, seed=2), tmp_path)
    accel = parse_accel_log(paths["accel"])
    iri = parse_iri_log(paths["iri"])
    pairing = pair_by_time(per_second_features(accel), iri, int(accel.t_ms[0]))
    assert len(pairing) == 20 and pairing.unpaired_feature_seconds == 0
    assert paths["truth"].read_text().splitlines()[0] == "second_index,iri_true,accel_feature,accel_feature_clean"
