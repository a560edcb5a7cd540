import json

import numpy as np
import pytest

from asml import harness, ic
from asml.core import expected_utility_exact
from asml.estimation import ExactEstimator
from asml.exceptions import ConfigError
from asml.harness import ExperimentConfig, parse_csv, plot_data, run_experiment, table_to_csv
from asml.policies import baseline_gt, tgp_policy, tgp_train

SMALL_GRAPH = {"kind": "gnm", "nodes": 30, "edges": 90, "seed": 1}


def small_config(**kw):
    doc = dict(
        sweeps=[{"name": "vary_l", "k": [4], "l": [1, 3]}],
        algorithms=["TGP", "RMG", "GT"],
        graph=SMALL_GRAPH,
        m_train=3,
        m_test=3,
        repetitions=2,
        n_worlds=40,
        choices=[0.5, 0.2],
    )
    doc.update(kw)
    return ExperimentConfig.from_dict(doc)


def test_deterministic_instance_matches_exact():
    config = ExperimentConfig.from_dict(
        dict(
            sweeps=[{"name": "one", "k": [3], "l": [1]}],
            algorithms=["TGP", "GT"],
            graph={"kind": "gnm", "nodes": 8, "edges": 10, "seed": 3},
            m_train=1,
            m_test=1,
            repetitions=1,
            choices=[1.0],
        )
    )
    table = run_experiment(config)
    graph = config.build_graph()
    train = ic.as_task(ic.sample_task(graph, [1.0], harness._seed(0, 0, harness._TRAIN, 0)))
    test = ic.as_task(ic.sample_task(graph, [1.0], harness._seed(0, 0, harness._TEST, 0)))
    est = ExactEstimator(train.prior)
    want = {
        ("TGP", 1, 3): expected_utility_exact(tgp_policy(tgp_train([train], est, 1), 3, ExactEstimator(test.prior)), test),
        ("GT", 3, 3): expected_utility_exact(baseline_gt([train], est, 3), test),
    }
    got = {(r.algorithm, r.l, r.k): r.mean_utility for r in table.rows}
    assert got == pytest.approx(want)


def test_random_is_no_better_than_gt():
    config = small_config(algorithms=["GT", "RANDOM"], sweeps=[{"name": "s", "k": [4], "l": [4]}], repetitions=100, m_test=2)
    table = run_experiment(config)
    gt = np.array([r.mean_utility for r in table.rows if r.algorithm == "GT"])
    rnd = np.array([r.mean_utility for r in table.rows if r.algorithm == "RANDOM"])
    diff = gt - rnd
    assert diff.mean() >= -3 * diff.std(ddof=1) / np.sqrt(len(diff))


def test_same_seed_same_table():
    a = run_experiment(small_config())
    b = run_experiment(small_config())
    assert a.to_json() == b.to_json()
    c = run_experiment(small_config(seed=1))
    assert a.to_json() != c.to_json()


def test_parallel_matches_serial():
    assert run_experiment(small_config(n_jobs=2)).to_json() == run_experiment(small_config()).to_json()


def test_one_row_per_cell_and_resolved_l():
    table = run_experiment(small_config(algorithms=["TGP", "GT", "PI_B", "FULLY_ADAPTIVE"]))
    cells = [(r.algorithm, r.l, r.k, r.repetition) for r in table.rows]
    assert len(cells) == len(set(cells))
    assert {(a, l) for a, l, _, _ in cells} == {("TGP", 1), ("TGP", 3), ("GT", 4), ("PI_B", 1), ("FULLY_ADAPTIVE", 0)}


def test_csv_examples(tmp_path):
    one = harness.ExperimentTable([harness.Row("TGP", 2, 4, 0, 1.5, 0.25, 0.0)])
    text = table_to_csv(one)
    lines = text.splitlines()
    assert lines[0] == "#schema=1"
    assert [l for l in lines if not l.startswith("#")] == ["algorithm,l,k,repetition,mean_utility,stderr,wall_ms", "TGP,2,4,0,1.5,0.25,0.0"]
    table = run_experiment(small_config())
    harness.emit_csv(table, tmp_path / "t.csv")
    assert harness.read_csv(tmp_path / "t.csv").rows == table.rows
    with pytest.raises(ValueError):
        table_to_csv(harness.ExperimentTable([]))
    with pytest.raises(ValueError):
        parse_csv("algorithm,l\n")


def test_plot_data_vary_l_panel(tmp_path):
    config = small_config(
        sweeps=[{"name": "vary_l", "k": [4], "l": [3, 1]}, {"name": "vary_k", "k": [3, 4], "l_fraction": 0.8}]
    )
    table = run_experiment(config)
    doc = plot_data(table)
    vary_l, vary_k = doc["panels"]
    assert vary_l["x"] == "l" and vary_k["x"] == "k"
    assert set(vary_l["series"]) == {"TGP", "RMG", "GT"}
    assert [p["x"] for p in vary_l["series"]["TGP"]] == [3, 1]
    assert [p["x"] for p in vary_l["series"]["GT"]] == [3, 1]
    assert [p["x"] for p in vary_k["series"]["RMG"]] == [3, 4]
    assert [p["l"] for p in vary_k["series"]["RMG"]] == [2, 3]
    harness.emit_plot_data(table, tmp_path / "p.json")
    assert json.loads((tmp_path / "p.json").read_text()) == doc


@pytest.mark.parametrize(
    "change",
    [
        {"algorithms": ["NOPE"]},
        {"algorithms": []},
        {"m_train": 0},
        {"choices": [0.0]},
        {"sweeps": [{"name": "x", "k": [3], "l": [5]}]},
        {"sweeps": [{"name": "x", "k": [3]}]},
        {"sweeps": [{"name": "x", "k": [3], "l": [1], "l_fraction": 0.5}]},
        {"sweeps": [{"name": "x", "k": [1], "l": [1]}]},
        {"graph": {"kind": "lattice"}},
        {"bogus": 1},
    ],
)
def test_config_errors(change):
    with pytest.raises(ConfigError):
        small_config(**change)


def test_config_from_json(tmp_path):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_json(tmp_path / "missing.json")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_json("{}")
    path = tmp_path / "c.json"
    path.write_text(json.dumps(small_config().to_dict()))
    assert ExperimentConfig.from_json(path).to_dict() == small_config().to_dict()


def test_fraction_rounds_half_up():
    s = harness.Sweep("f", [5, 10, 4], l_fraction=0.5)
    assert s.points() == [(3, 5), (5, 10), (2, 4)]
    assert harness.resolve_l("TGP", 10, 10) == 9
    assert harness.resolve_l("RMG", 0, 4) == 1


def test_training_never_queries_test_tasks(monkeypatch):
    seen, phase = [], {"testing": False}
    real = {name: getattr(ic.ICEstimator, name) for name in ("set_value", "set_gains", "item_gains")}

    def spy(name):
        def call(self, task, *args):
            seen.append((phase["testing"], task.name))
            return real[name](self, task, *args)

        return call

    for name in real:
        monkeypatch.setattr(ic.ICEstimator, name, spy(name))
    sample = ic.sample_live

    def flip(*args):
        phase["testing"] = True
        return sample(*args)

    monkeypatch.setattr(ic, "sample_live", flip)
    config = small_config(algorithms=["TGP", "TRGP", "RMG", "GT", "PI_A", "PI_B"], repetitions=1)
    harness.run_repetition(config, 0)
    training = {name for testing, name in seen if not testing}
    assert training and all(n.startswith("train") for n in training)
    assert any(n.startswith("test") for testing, n in seen if testing)


def test_stderr_shrinks_with_repetitions():
    ratios = []
    for trial in range(3):
        cfg = dict(algorithms=["TGP"], sweeps=[{"name": "s", "k": [3], "l": [1]}], m_test=2, seed=trial)
        few = run_experiment(small_config(repetitions=25, **cfg)).summarize()[0]["stderr"]
        many = run_experiment(small_config(repetitions=100, **cfg)).summarize()[0]["stderr"]
        ratios.append(many / few)
    assert np.mean(ratios) <= 0.6
