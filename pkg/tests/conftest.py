import pytest

from roadrough import ingest, signal, synth
from roadrough.align import pair_by_time


@pytest.fixture(scope="session")
def survey_dataset(tmp_path_factory):
    """Default 9 km synthetic survey written to disk and parsed back."""
    out = tmp_path_factory.mktemp("survey")
    scenario = synth.paper_like_scenario(42)
    paths = synth.write_dataset(scenario, out)
    accel = ingest.parse_accel_log(paths["accel"])
    iri = ingest.parse_iri_log(paths["iri"])
    _, _, truth = synth.generate(scenario)
    feats = signal.per_second_features(accel)
    pairing = pair_by_time(feats, iri, int(accel.t_ms[0]))
    return {
        "paths": paths,
        "accel": accel,
        "iri": iri,
        "truth": truth,
        "features": feats,
        "pairing": pairing,
        "scenario": scenario,
    }
