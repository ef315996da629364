import json

import pytest

from ehsgd.config import (GROUP_PERIODS, config_from_dict, config_to_dict, group_periods_preset, parse_config)
from ehsgd.energy import Bernoulli, DeterministicSchedule, UniformWindow
from ehsgd.exceptions import ParseError, ValidationError

MINIMAL = {"N": 2, "horizon": 100, "policy": "full", "objective": {"kind": "quadratic"}, "eta": 0.1, "seed": 7}


def with_(**kw):
    return {**MINIMAL, **kw}


def field_of(data):
    with pytest.raises(ValidationError) as err:
        config_from_dict(data)
    return err.value.field


def test_minimal_config():
    cfg = config_from_dict(MINIMAL)
    assert (cfg.n_users, cfg.horizon, cfg.policy, cfg.seed, cfg.lr.eta0) == (2, 100, "full", 7, 0.1)
    assert cfg.arrivals is None


def test_arrival_records():
    cfg = config_from_dict(with_(policy="best_effort", arrivals=[{"kind": "bernoulli", "beta": 0.25},
                                                                 {"kind": "uniform_window", "period": 5}]))
    assert cfg.arrivals == (Bernoulli(0.25), UniformWindow(5))
    cfg = config_from_dict(with_(policy="alg1", arrival={"kind": "deterministic", "times": [0, 4, 10]}))
    assert cfg.arrivals == (DeterministicSchedule((0, 4, 10)),) * 2


def test_period_shorthand_and_groups():
    cfg = config_from_dict(with_(N=4, policy="alg1", arrival_groups=[{"kind": "deterministic", "period": 2},
                                                                     {"kind": "deterministic", "period": 3,
                                                                      "offset": 1}]))
    assert cfg.arrivals[0].times[:3] == (0, 2, 4)
    assert cfg.arrivals[1].times[:3] == (1, 4, 7)
    assert cfg.arrivals[2] == cfg.arrivals[0]
    assert cfg.n_groups == 2


def test_beta_zero_names_field():
    assert field_of(with_(policy="best_effort", arrival={"kind": "bernoulli", "beta": 0})) == "arrival.beta"


def test_indexed_field_path():
    recs = [{"kind": "bernoulli", "beta": 0.5}, {"kind": "bernoulli", "beta": 2}]
    assert field_of(with_(policy="best_effort", arrivals=recs)) == "arrivals[1].beta"


def test_policy_model_compatibility():
    assert field_of(with_(policy="alg1", arrival={"kind": "bernoulli", "beta": 0.5})) == "policy"


@pytest.mark.parametrize("data,field", [
    (with_(N=0), "N"),
    (with_(horizon=1.5), "horizon"),
    (with_(policy="greedy"), "policy"),
    (with_(eta=-1), "eta"),
    (with_(eta={"eta0": 0.1, "decay": -1}), "eta.decay"),
    (with_(objective={"kind": "svm"}), "objective.kind"),
    (with_(objective={"kind": "logistic", "l2": 0}), "objective.l2"),
    (with_(objective={"kind": "quadratic", "dim": 0}), "objective.dim"),
    (with_(objective={"kind": "quadratic", "colour": 1}), "objective.colour"),
    (with_(extra=1), "extra"),
    (with_(policy="naive"), "arrival"),
    (with_(policy="alg1", arrival={"kind": "deterministic", "times": [3, 1]}), "arrival.times"),
    (with_(policy="alg1", arrival={"kind": "deterministic", "times": [200]}), "arrival.times"),
    (with_(policy="alg1", arrival={"kind": "solar"}), "arrival.kind"),
    (with_(arrivals=[{"kind": "bernoulli", "beta": 0.5}]), "arrivals"),
    ({"N": 2}, "horizon"),
])
def test_validation_errors(data, field):
    assert field_of(data) == field


def test_roundtrip():
    cfg = config_from_dict(with_(policy="alg1", eta={"eta0": 0.2, "decay": 0.01}, metric_every=5,
                                 arrival={"kind": "deterministic", "period": 3},
                                 objective={"kind": "logistic", "dim": 4, "points_per_user": 3, "lambda": 0.5}))
    again = config_from_dict(json.loads(json.dumps(config_to_dict(cfg))))
    assert again == cfg


def test_parse_file_and_manifest(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps(MINIMAL))
    assert parse_config(path).seed == 7
    manifest = tmp_path / "manifest.json"
    manifest.write_text(json.dumps({"config": MINIMAL, "version": "0"}))
    assert parse_config(manifest).seed == 7


def test_parse_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ParseError):
        parse_config(bad)
    with pytest.raises(ParseError):
        parse_config(tmp_path / "missing.json")


def test_preset_shape():
    cfg = group_periods_preset("wait_for_all", seed=3)
    assert cfg.n_users == 40 and cfg.horizon == 2000 and cfg.seed == 3
    for i, m in enumerate(cfg.arrivals):
        assert m.times[1] - m.times[0] == GROUP_PERIODS[i % 4]
    assert cfg.objective.mode == "group_label_skew" and cfg.objective.l2 == 0.1
