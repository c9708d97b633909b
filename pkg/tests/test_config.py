import pytest

from sdg_ibm.config import (ExperimentConfig, build_config, load_config_file, parse_config_text,
                            with_overrides)
from sdg_ibm.errors import InvalidParameter


def test_defaults():
    c = build_config({})
    assert (c.experiment, c.N, c.m, c.K, c.T) == ("ellipse-static", 16, 128, 200, 2.0)
    assert (c.rho, c.mu, c.kappa) == (1.0, 1.0, 1.0)
    assert c.dt == pytest.approx(0.01)


def test_balloon_default_final_time():
    c = build_config({"experiment": "balloon", "K": "120"})
    assert c.T == 3.0 and c.dt == pytest.approx(0.025)


def test_dt_resolves_step_count():
    c = build_config({"dt": "0.005"})
    assert c.K == 400
    c = build_config({"dt": 0.25, "T": 1.0})
    assert c.K == 4


@pytest.mark.parametrize("values", [
    {"K": 3, "dt": 0.5},
    {"dt": 0.3},
    {"dt": -0.1},
    {"N": 0},
    {"m": 2},
    {"mu": 0},
    {"kappa": -1},
    {"experiment": "square"},
    {"N": "1.5"},
    {"N": "abc"},
])
def test_invalid_values(values):
    with pytest.raises(InvalidParameter):
        build_config(values)


def test_consistent_dt_and_k_accepted():
    assert build_config({"K": 100, "dt": 0.02}).K == 100


def test_parse_file(tmp_path):
    text = "# comment\nexperiment = l-shape\nN = 8  # trailing\nstride = 5\ndelta_t = 0.02\n\n"
    values = parse_config_text(text)
    assert values == {"experiment": "l-shape", "N": "8", "snapshot_stride": "5", "dt": "0.02"}
    path = tmp_path / "run.cfg"
    path.write_text(text)
    c = build_config(load_config_file(path))
    assert (c.N, c.snapshot_stride, c.K) == (8, 5, 100)
    with pytest.raises(InvalidParameter):
        parse_config_text("N 8")
    with pytest.raises(InvalidParameter):
        parse_config_text("colour = red")


def test_text_round_trip():
    c = build_config({"experiment": "balloon", "K": 300, "kappa": 4, "m": 128})
    values = parse_config_text(c.to_text())
    values.pop("dt")
    assert build_config(values) == c


def test_overrides():
    c = with_overrides(ExperimentConfig(), N=8)
    assert c.N == 8
    with pytest.raises(InvalidParameter):
        with_overrides(c, m=1)
