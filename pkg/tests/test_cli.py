import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from persuade.cli import (
    RESULTS_HEADER,
    SUMMARY_HEADER,
    ConfigError,
    ExperimentConfig,
    log_slope,
    main,
    regret_curves,
)


def write_config(path, **overrides):
    cfg = {
        "schema_version": 1,
        "instance": {"generator": "example_basic"},
        "learners": [{"name": "alg5"}, {"name": "baseline_empirical", "params": {"geometric": 1.1}}, {"name": "oracle"}],
        "T": 300,
        "seeds": {"count": 3, "base": 0},
    }
    cfg.update(overrides)
    path.write_text(json.dumps(cfg))
    return path


@settings(max_examples=50, deadline=None)
@given(
    T=st.integers(1, 10**6),
    seeds=st.one_of(
        st.lists(st.integers(0, 1000), min_size=1, max_size=5),
        st.builds(lambda c, b: {"count": c, "base": b}, st.integers(1, 50), st.integers(0, 1000)),
    ),
    tie=st.sampled_from([None, "sender_preferred", "lowest_index", "recommended_then_sender"]),
    learners=st.lists(st.sampled_from(["alg3", "alg5", "oracle", "never_inform"]), min_size=1, max_size=4),
)
def test_config_round_trip(T, seeds, tie, learners):
    raw = {
        "schema_version": 1,
        "instance": {"generator": "random", "params": {"n_states": 3, "n_actions": 2, "seed": 1}},
        "learners": [{"name": n, "params": {}} for n in learners],
        "T": T,
        "seeds": seeds,
        "tie_rule": tie,
        "flags": {"reveal_states": True},
        "outputs": {"results": "r.csv", "summary": "s.csv"},
    }
    cfg = ExperimentConfig.from_dict(raw)
    assert cfg.to_dict() == raw
    assert ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg


def test_config_errors_name_the_field():
    base = {"schema_version": 1, "instance": {"generator": "example_basic"}, "learners": ["alg5"], "T": 10, "seeds": [1]}
    for patch, field in [
        ({"T": 0}, "T"),
        ({"seeds": []}, "seeds"),
        ({"learners": ["alg9"]}, "learners[0].name"),
        ({"schema_version": 2}, "schema_version"),
        ({"tie_rule": "coin"}, "tie_rule"),
        ({"instance": {"generator": "nope"}}, "instance.generator"),
    ]:
        with pytest.raises(ConfigError, match=field.replace("[", r"\[").replace("]", r"\]")):
            ExperimentConfig.from_dict({**base, **patch})


def test_seed_override():
    cfg = ExperimentConfig.from_dict({"schema_version": 1, "instance": {"generator": "example_basic"},
                                      "learners": ["oracle"], "T": 5, "seeds": {"count": 3, "base": 10}})
    assert cfg.resolved_seeds({}) == [10, 11, 12]
    assert cfg.resolved_seeds({"PERSUADE_SEED": "100"}) == [100, 101, 102]


def test_run_writes_exact_schema(tmp_path, capsys):
    cfg = write_config(tmp_path / "cfg.json")
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "a")]) == 0
    results = (tmp_path / "a" / "results.csv").read_bytes()
    lines = results.decode().split("\n")
    assert lines[0] == RESULTS_HEADER
    assert lines[-1] == "" and len(lines) == 2 + 3 * 3 * 300
    assert b"\r" not in results
    assert lines[1].startswith("alg5,0,1,")
    summary = (tmp_path / "a" / "summary.csv").read_text().splitlines()
    assert summary[0] == SUMMARY_HEADER and len(summary) == 4
    alg5 = summary[1].split(",")
    assert float(alg5[4]) == pytest.approx(4 * (7 + 3 * math.log2(math.log2(2 * 2 * 300))) + 1)
    assert summary[2].endswith(",") and summary[3].startswith("oracle,300,0,0,")

    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "b"), "--threads", "3"]) == 0
    for name in ("results.csv", "summary.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_numbers_use_17_significant_digits(tmp_path):
    cfg = write_config(tmp_path / "cfg.json", learners=["never_inform"], T=2, seeds=[0])
    main(["run", "--config", str(cfg), "--out", str(tmp_path)])
    rows = (tmp_path / "results.csv").read_text().splitlines()
    assert rows[1] == "never_inform,0,1,0.59999999999999998,0.59999999999999998"


def test_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"schema_version": 1,\n "T": }')
    assert main(["run", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert "line 2" in capsys.readouterr().err
    cfg = write_config(tmp_path / "c.json", learners=["alg7"])
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    inline = {"inline": {"u": [[0, 0], [1, 1], [0.5, 0.5]], "v": [[1, 0], [0, 1], [0.5, 0.5]],
                         "prior": [0.7, 0.3], "p0": 0.25}}
    cfg = write_config(tmp_path / "d.json", instance=inline, learners=["alg3"])
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path)]) == 3
    assert "weakly dominated action" in capsys.readouterr().err
    inst = tmp_path / "inst.json"
    inst.write_text(json.dumps(inline))
    assert main(["optimal", "--instance", str(inst)]) == 3
    assert "weakly dominated action" in capsys.readouterr().err
    cfg = write_config(tmp_path / "e.json", flags={"reveal_states": False})
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path)]) == 2


def test_optimal_report(tmp_path, capsys):
    inst = tmp_path / "basic.json"
    inst.write_text(json.dumps({"generator": "example_basic"}))
    assert main(["optimal", "--instance", str(inst)]) == 0
    out = capsys.readouterr().out
    assert "U* = 0.59999999999999998" in out
    assert "M* = 1.4285714285714286" in out
    assert "G = 0.5" in out and "D = 1" in out
    inst.write_text(json.dumps({"generator": "lower_bound_binary", "params": {"T": 100, "v_star": 0.5}}))
    assert main(["optimal", "--instance", str(inst)]) == 0
    out = capsys.readouterr().out
    knapsack = out.split("knapsack scheme")[1]
    entry = next(line for line in knapsack.splitlines() if line.strip().startswith("0:"))
    assert float(entry.split(":")[1]) == pytest.approx(0.5, abs=1e-12)


@pytest.fixture(scope="module")
def sweep(tmp_path_factory):
    root = tmp_path_factory.mktemp("sweep")
    cfg = write_config(root / "cfg.json", T=5000, seeds={"count": 4, "base": 0},
                       learners=["alg3", {"name": "baseline_empirical", "params": {"geometric": 1.05}}, "oracle"])
    assert main(["run", "--config", str(cfg), "--out", str(root)]) == 0
    return root, cfg


def test_plot_modes(sweep):
    root, cfg = sweep
    for mode in ("linear", "logx", "loglogx"):
        out = root / f"{mode}.svg"
        assert main(["plot", "--in", str(root / "results.csv"), "--out", str(out), "--axes", mode,
                     "--config", str(cfg)]) == 0
        text = out.read_text()
        assert text.startswith("<?xml") and "<svg" in text and "href=\"http" not in text
    again = root / "again.svg"
    main(["plot", "--in", str(root / "results.csv"), "--out", str(again), "--axes", "loglogx", "--config", str(cfg)])
    assert again.read_bytes() == (root / "loglogx.svg").read_bytes()


def test_plot_rejects_bad_schema(tmp_path):
    bad = tmp_path / "r.csv"
    bad.write_text("learner,seed,t,regret\n")
    assert main(["plot", "--in", str(bad), "--out", str(tmp_path / "x.svg")]) == 2


def test_curve_shapes(sweep):
    root, _ = sweep
    curves = regret_curves(root / "results.csv")
    t, oracle, _ = curves["oracle"]
    assert np.all(oracle == 0)
    t, alg3, _ = curves["alg3"]
    slope = log_slope(t, alg3)
    assert 0 < slope < math.inf
    t, base, _ = curves["baseline_empirical"]
    half = t.size // 2
    early, late = log_slope(t[:half], base[:half]), log_slope(t[half:], base[half:])
    assert late > 2 * early > 0
