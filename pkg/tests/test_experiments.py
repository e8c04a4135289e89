import json

import numpy as np
import pytest

from shiftrules import epsr, qsim
from shiftrules.experiments import (
    RESULT3_RANDOM_NODES,
    ExperimentConfig,
    random_base_params,
    run_experiment,
    sampled_estimates,
    valid_nodes_for,
    xxz_hva_setup,
)
from shiftrules.spectra import FrequencySet, integer_frequencies


def test_config_validation():
    with pytest.raises(ValueError, match="unknown experiment"):
        ExperimentConfig("nope")
    with pytest.raises(ValueError, match="positive"):
        ExperimentConfig("result1", repetitions=0)


def test_valid_nodes_integer_sets_are_equidistant():
    nodes = valid_nodes_for(integer_frequencies(3), 1)
    assert nodes.values == epsr.equidistant_nodes(3, "odd").values


def test_valid_nodes_falls_back_when_pattern_singular():
    # the even-parity pattern duplicates cosine columns for {1,2,4}
    fs = FrequencySet((1.0, 2.0, 4.0))
    nodes = valid_nodes_for(fs, 2, seed=19)
    epsr.solve_coefficients(nodes, fs, 2)  # must not raise
    assert nodes.values[0] == 0.0


def test_result3_frozen_nodes_are_valid():
    for r, sets in RESULT3_RANDOM_NODES.items():
        fs = integer_frequencies(r)
        for vals in sets:
            b, _ = epsr.solve_coefficients(epsr.ShiftNodes("odd", vals), fs, 1)
            # visibly worse than the optimum so the comparison has teeth
            assert np.sum(np.abs(b)) > 2 * r


def test_result1_quick(tmp_path):
    cfg = ExperimentConfig("result1", out_dir=str(tmp_path))
    rows = run_experiment(cfg, reproducible=True)
    assert len(rows) == 8 * 6
    worst_low_order = max(row[5] for row in rows if row[2] <= 2)
    assert worst_low_order < 1e-9
    header = (tmp_path / "result1_errors.csv").read_text().splitlines()[0]
    assert header == "param_index,param_name,d,epsr,reference,abs_error"


def test_result2_quick(tmp_path):
    cfg = ExperimentConfig("result2", repetitions=30, out_dir=str(tmp_path))
    out = run_experiment(cfg, reproducible=True)
    assert set(out) == {0, 1}
    assert len(out[0]["uniform"]) == 30
    echo = json.loads((tmp_path / "result2_config.json").read_text())
    assert len(echo["base_params"]) == 8


def test_result3_quick(tmp_path):
    cfg = ExperimentConfig("result3", repetitions=120, out_dir=str(tmp_path))
    out = run_experiment(cfg, reproducible=True)
    for j in (0, 1):
        ve = np.var(out[j]["equidistant"], ddof=1)
        assert np.var(out[j]["random1"], ddof=1) > ve
        assert np.var(out[j]["random2"], ddof=1) > ve
    echo = json.loads((tmp_path / "result3_config.json").read_text())
    assert "node_sets" in echo


def test_de_sweep_quick(tmp_path):
    cfg = ExperimentConfig("de-sweep", out_dir=str(tmp_path), r_max=2, d_max=2)
    rows = run_experiment(cfg, reproducible=True)
    assert len(rows) == 4
    assert all(row[3] <= 1e-3 for row in rows)


def test_sampled_estimates_thread_invariance():
    circuit, obs = xxz_hva_setup(5, 2, 0.5)
    theta = random_base_params(5, 2, 0)
    sl = qsim.cost_slice(circuit, obs, theta, 0)
    fs = qsim.slice_frequencies(circuit, 0, obs, theta)
    rule = epsr.make_rule(epsr.equidistant_nodes(fs.r, "odd"), fs, 1)
    a = sampled_estimates(sl, rule, theta[0], ("weighted",), 1000, 16, [1, 2], threads=1)
    b = sampled_estimates(sl, rule, theta[0], ("weighted",), 1000, 16, [1, 2], threads=3)
    assert np.array_equal(a["weighted"], b["weighted"])


def test_sampled_estimates_gaussian_surrogate():
    circuit, obs = xxz_hva_setup(5, 2, 0.5)
    theta = random_base_params(5, 2, 0)
    sl = qsim.cost_slice(circuit, obs, theta, 0)
    fs = qsim.slice_frequencies(circuit, 0, obs, theta)
    rule = epsr.make_rule(epsr.equidistant_nodes(fs.r, "odd"), fs, 1)
    out = sampled_estimates(sl, rule, theta[0], ("weighted",), 1000, 200, [9, 9],
                            method="gaussian")
    exact = epsr.apply_rule(rule, sl, theta[0])
    draws = out["weighted"]
    assert abs(draws.mean() - exact) < 5 * draws.std(ddof=1) / np.sqrt(draws.size)
