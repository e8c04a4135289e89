"""Reproduction experiments on the XXZ/HVA testbed.

Five canned experiments, each emitting machine-readable CSV (and optionally a
companion gnuplot script):

* ``result1``   -- noise-free check: shift-rule derivatives of every circuit
  parameter against high-order finite differences, orders 1..6.
* ``result2``   -- uniform vs weighted shot allocation at the classical
  equidistant nodes: repeated sampled derivative estimates for the first two
  parameters.
* ``result3``   -- equidistant vs fixed random nodes under the weighted
  scheme.
* ``landscape`` -- grids of the weighted objective over two free nodes for
  orders 1..6.
* ``de-sweep``  -- differential-evolution global search vs the equidistant
  reference across (r, d) combinations.

Every run is deterministic given the config seed; per-repetition random
streams are spawned from the master seed so repetition loops may execute
concurrently without changing the output.
"""

from __future__ import annotations

import datetime
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from . import epsr, qsim, variance
from .spectra import FrequencySet, integer_frequencies
from .trigpoly import central_difference

__all__ = [
    "ExperimentConfig",
    "EXPERIMENT_IDS",
    "RESULT3_RANDOM_NODES",
    "random_base_params",
    "xxz_hva_setup",
    "valid_nodes_for",
    "sampled_estimates",
    "run_experiment",
]

EXPERIMENT_IDS = ("result1", "result2", "result3", "landscape", "de-sweep")

#: Fixed "random" node sets compared against the equidistant nodes in
#: result3, keyed by r.  Drawn once from a seeded stream and frozen; both are
#: nonsingular and their weighted objectives exceed the optimal value r by
#: factors mirroring the spread seen in practice.
RESULT3_RANDOM_NODES: dict[int, tuple[tuple[float, ...], ...]] = {
    2: (
        (0.537299745199, 0.704881354807),
        (1.890334656657, 1.990525713141),
    ),
    4: (
        (1.096948636022, 1.352471555537, 1.643004064611, 2.704730076756),
        (0.065752000218, 0.465980534447, 2.340250843261, 2.51529245263),
    ),
}

#: Finite-difference steps per derivative order, balancing truncation against
#: round-off amplification (which grows as h**-d).
_FD_STEPS = {1: 1e-2, 2: 1e-2, 3: 2e-2, 4: 3e-2, 5: 2e-2, 6: 4e-2}


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    q: int = 5
    p: int = 2
    delta: float = 0.5
    seed: int = 0
    n_total: int = 1000
    repetitions: int = 500
    params: tuple[int, ...] | None = None
    scheme: str = "weighted"
    method: str = "multinomial"
    out_dir: str = "."
    r_max: int = 8
    d_max: int = 8

    def __post_init__(self):
        if self.experiment not in EXPERIMENT_IDS:
            raise ValueError(f"unknown experiment {self.experiment!r}; choose from {EXPERIMENT_IDS}")
        for name in ("q", "p", "n_total", "repetitions", "r_max", "d_max"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.params is not None:
            object.__setattr__(self, "params", tuple(int(j) for j in self.params))


def random_base_params(q: int, p: int, seed) -> np.ndarray:
    """The published base parameter vector: uniform on [-pi, pi), seeded."""
    return np.random.default_rng(seed).uniform(-np.pi, np.pi, 4 * p)


def xxz_hva_setup(q: int, p: int, delta: float):
    """Circuit and observable of the testbed problem."""
    return qsim.build_hva_circuit(q, p), qsim.build_xxz_hamiltonian(q, delta)


def valid_nodes_for(fs: FrequencySet, d: int, seed=0) -> epsr.ShiftNodes:
    """A nonsingular node set for the frequency set and order.

    Integer sets {1..r} get the equidistant nodes.  Other sets first try the
    same node pattern and fall back to seeded random draws until the
    conditioning check passes (the pattern can be singular off the integer
    grid, e.g. duplicated cosine columns).
    """
    parity = "odd" if d % 2 else "even"
    r = fs.r
    if fs.is_consecutive_integers():
        return epsr.equidistant_nodes(r, parity)
    candidates = epsr.equidistant_nodes(r, parity).values
    rng = np.random.default_rng(seed)
    for _ in range(200):
        nodes = epsr.ShiftNodes(parity, tuple(candidates))
        try:
            epsr.solve_coefficients(nodes, fs, d)
            return nodes
        except epsr.SingularNodesError:
            if parity == "odd":
                candidates = tuple(sorted(rng.uniform(0.05, np.pi - 0.05, r)))
            else:
                candidates = (0.0, *sorted(rng.uniform(0.05, np.pi, r)))
    raise RuntimeError(f"could not find valid nodes for frequencies {fs.frequencies}, d={d}")


# ---------------------------------------------------------------------------
# output helpers

def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def _write_csv(path, columns, rows, reproducible: bool) -> None:
    with open(path, "w") as fh:
        if not reproducible:
            fh.write(f"# generated {datetime.datetime.now().isoformat()}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _write_config_echo(cfg: ExperimentConfig, theta, extra: dict | None = None) -> None:
    doc = asdict(cfg)
    if theta is not None:
        doc["base_params"] = [float(f"{v:.17g}") for v in np.asarray(theta)]
    if extra:
        doc.update(extra)
    path = os.path.join(cfg.out_dir, f"{cfg.experiment.replace('-', '_')}_config.json")
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def _write_gnuplot(path, lines) -> None:
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _map_repetitions(fn, reps: int, threads: int):
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, range(reps)))
    return [fn(i) for i in range(reps)]


# ---------------------------------------------------------------------------
# sampled derivative estimates shared by result2 / result3 / the CLI

def sampled_estimates(sl: qsim.CostSlice, rule: epsr.PSRRule, xbar: float, schemes,
                      n_total: int, repetitions: int, seed_key, method: str = "multinomial",
                      threads: int = 1) -> dict[str, np.ndarray]:
    """Repeated sampled derivative estimates, one column per allocation scheme.

    The per-shift outcome distributions are computed once; each repetition
    draws fresh shot noise from its own spawned stream, so results are
    deterministic for a seed and independent of execution order.
    """
    gamma = np.asarray(rule.expanded_coeffs)
    counts = {s: variance.integer_shot_counts(variance.allocate(s, gamma, n_total)) for s in schemes}
    if method == "multinomial":
        evals, evecs = np.linalg.eigh(sl.observable.to_matrix())
        tables = []
        for phi in rule.expanded_shifts:
            pr = np.clip(np.abs(evecs.conj().T @ sl.state(xbar + phi)) ** 2, 0.0, None)
            tables.append(pr / pr.sum())
    elif method == "gaussian":
        tables = [(sl(xbar + phi), sl.one_shot_variance(xbar + phi)) for phi in rule.expanded_shifts]
    else:
        raise ValueError(f"unknown sampling method {method!r}")

    children = np.random.SeedSequence(seed_key).spawn(repetitions)

    def one_rep(i: int):
        rng = np.random.default_rng(children[i])
        out = []
        for s in schemes:
            acc = 0.0
            for g, table, n in zip(gamma, tables, counts[s]):
                if g == 0.0 or n == 0:
                    continue
                if method == "multinomial":
                    acc += g * float(rng.multinomial(int(n), table) @ evals) / int(n)
                else:
                    mean, var = table
                    acc += g * float(rng.normal(mean, np.sqrt(var / int(n))))
            out.append(acc)
        return out

    results = np.asarray(_map_repetitions(one_rep, repetitions, threads))
    return {s: results[:, k] for k, s in enumerate(schemes)}


# ---------------------------------------------------------------------------
# experiment runners

def _run_result1(cfg: ExperimentConfig, reproducible: bool, emit_gnuplot: bool, threads: int):
    circuit, obs = xxz_hva_setup(cfg.q, cfg.p, cfg.delta)
    theta = random_base_params(cfg.q, cfg.p, cfg.seed)
    names = qsim.hva_parameter_names(cfg.p)
    rows = []
    for j in range(circuit.n_params):
        sl = qsim.cost_slice(circuit, obs, theta, j)
        fs = qsim.slice_frequencies(circuit, j, obs, theta)
        for d in range(1, 7):
            rule = epsr.make_rule(valid_nodes_for(fs, d, seed=cfg.seed + 31 * j + d), fs, d)
            got = epsr.apply_rule(rule, sl, theta[j])
            ref = central_difference(sl, theta[j], d, _FD_STEPS[d])
            rows.append((j, names[j], d, got, ref, abs(got - ref)))
    path = os.path.join(cfg.out_dir, "result1_errors.csv")
    _write_csv(path, ["param_index", "param_name", "d", "epsr", "reference", "abs_error"], rows, reproducible)
    _write_config_echo(cfg, theta)
    if emit_gnuplot:
        _write_gnuplot(os.path.join(cfg.out_dir, "result1_errors.gp"), [
            "set datafile separator ','",
            "set logscale y",
            "set xlabel 'derivative order d'",
            "set ylabel '|rule - finite difference|'",
            f"plot 'result1_errors.csv' using 3:6 skip 1 with points title 'error'",
        ])
    return rows


def _estimate_params(cfg: ExperimentConfig) -> tuple[int, ...]:
    return cfg.params if cfg.params is not None else (0, 1)


def _run_result2(cfg: ExperimentConfig, reproducible: bool, emit_gnuplot: bool, threads: int):
    circuit, obs = xxz_hva_setup(cfg.q, cfg.p, cfg.delta)
    theta = random_base_params(cfg.q, cfg.p, cfg.seed)
    names = qsim.hva_parameter_names(cfg.p)
    out = {}
    for j in _estimate_params(cfg):
        sl = qsim.cost_slice(circuit, obs, theta, j)
        fs = qsim.slice_frequencies(circuit, j, obs, theta)
        rule = epsr.make_rule(valid_nodes_for(fs, 1, seed=cfg.seed), fs, 1)
        ests = sampled_estimates(sl, rule, theta[j], ("uniform", "weighted"), cfg.n_total,
                                 cfg.repetitions, [cfg.seed, 2, j], cfg.method, threads)
        rows = [(i, ests["uniform"][i], ests["weighted"][i]) for i in range(cfg.repetitions)]
        path = os.path.join(cfg.out_dir, f"result2_{names[j]}.csv")
        _write_csv(path, ["repetition", "uniform", "weighted"], rows, reproducible)
        if emit_gnuplot:
            _write_gnuplot(path.replace(".csv", ".gp"), [
                "set datafile separator ','",
                "set xlabel 'derivative estimate'",
                "set ylabel 'density'",
                f"plot '{os.path.basename(path)}' using 2 skip 1 smooth kdensity title 'uniform', \\",
                f"     '{os.path.basename(path)}' using 3 skip 1 smooth kdensity title 'weighted'",
            ])
        out[j] = ests
    _write_config_echo(cfg, theta)
    return out


def _run_result3(cfg: ExperimentConfig, reproducible: bool, emit_gnuplot: bool, threads: int):
    circuit, obs = xxz_hva_setup(cfg.q, cfg.p, cfg.delta)
    theta = random_base_params(cfg.q, cfg.p, cfg.seed)
    names = qsim.hva_parameter_names(cfg.p)
    out = {}
    node_echo = {}
    for j in _estimate_params(cfg):
        sl = qsim.cost_slice(circuit, obs, theta, j)
        fs = qsim.slice_frequencies(circuit, j, obs, theta)
        if not fs.is_consecutive_integers():
            raise ValueError("result3 compares against equidistant nodes; parameter "
                             f"{j} has frequencies {fs.frequencies}")
        r = fs.r
        if r in RESULT3_RANDOM_NODES:
            randoms = RESULT3_RANDOM_NODES[r]
        else:
            rng = np.random.default_rng([cfg.seed, 3, r])
            randoms = []
            while len(randoms) < 2:
                vals = tuple(sorted(rng.uniform(0.05, np.pi - 0.05, r)))
                try:
                    epsr.solve_coefficients(epsr.ShiftNodes("odd", vals), fs, 1)
                    randoms.append(vals)
                except epsr.SingularNodesError:
                    continue
        node_sets = {"equidistant": epsr.equidistant_nodes(r, "odd").values,
                     "random1": tuple(randoms[0]), "random2": tuple(randoms[1])}
        node_echo[names[j]] = {k: list(v) for k, v in node_sets.items()}
        cols = {}
        for tag_idx, (tag, vals) in enumerate(node_sets.items()):
            rule = epsr.make_rule(epsr.ShiftNodes("odd", vals), fs, 1)
            ests = sampled_estimates(sl, rule, theta[j], ("weighted",), cfg.n_total,
                                     cfg.repetitions, [cfg.seed, 3, j, tag_idx], cfg.method, threads)
            cols[tag] = ests["weighted"]
        rows = [(i, cols["equidistant"][i], cols["random1"][i], cols["random2"][i])
                for i in range(cfg.repetitions)]
        path = os.path.join(cfg.out_dir, f"result3_{names[j]}.csv")
        _write_csv(path, ["repetition", "equidistant", "random1", "random2"], rows, reproducible)
        if emit_gnuplot:
            _write_gnuplot(path.replace(".csv", ".gp"), [
                "set datafile separator ','",
                "set xlabel 'derivative estimate'",
                "set ylabel 'density'",
                f"plot '{os.path.basename(path)}' using 2 skip 1 smooth kdensity title 'equidistant', \\",
                f"     '{os.path.basename(path)}' using 3 skip 1 smooth kdensity title 'random 1', \\",
                f"     '{os.path.basename(path)}' using 4 skip 1 smooth kdensity title 'random 2'",
            ])
        out[j] = cols
    _write_config_echo(cfg, theta, {"node_sets": node_echo})
    return out


def _run_landscape(cfg: ExperimentConfig, reproducible: bool, emit_gnuplot: bool, threads: int):
    fs = integer_frequencies(2)
    header = () if reproducible else (f"generated {datetime.datetime.now().isoformat()}",)
    paths = []
    for d in range(1, 7):
        path = os.path.join(cfg.out_dir, f"landscape_d{d}.csv")
        variance.write_landscape_csv(path, fs, d, cfg.scheme, n=61, header_lines=header)
        paths.append(path)
        if emit_gnuplot:
            _write_gnuplot(path.replace(".csv", ".gp"), [
                "set datafile separator ','",
                "set view map",
                "set xlabel 'x1'",
                "set ylabel 'x2'",
                f"splot '{os.path.basename(path)}' using 1:2:3 skip 1 with points palette pt 5 title 'F'",
            ])
    _write_config_echo(cfg, None)
    return paths


def _de_generations(r: int) -> int:
    # the weighted objective flattens out near the optimum as the dimension
    # grows; scale the generation budget accordingly
    return max(400, 300 * r)


def _run_de_sweep(cfg: ExperimentConfig, reproducible: bool, emit_gnuplot: bool, threads: int):
    rows = []
    for r in range(1, cfg.r_max + 1):
        fs = integer_frequencies(r)
        for d in range(1, cfg.d_max + 1):
            res = variance.optimize_shifts_global(
                fs, d, cfg.scheme, generations=_de_generations(r),
                seed=[cfg.seed, 5, r, d])
            rows.append((r, d, "odd" if d % 2 else "even", res.equidistant_error,
                         res.objective, float(r) ** d))
    path = os.path.join(cfg.out_dir, "de_sweep_errors.csv")
    _write_csv(path, ["r", "d", "parity", "max_node_error", "objective", "target"], rows, reproducible)
    _write_config_echo(cfg, None)
    if emit_gnuplot:
        _write_gnuplot(path.replace(".csv", ".gp"), [
            "set datafile separator ','",
            "set view map",
            "set xlabel 'r'",
            "set ylabel 'd'",
            "set logscale cb",
            f"splot '{os.path.basename(path)}' using 1:2:4 skip 1 with points palette pt 5 ps 4 title 'max node error'",
        ])
    return rows


_RUNNERS = {
    "result1": _run_result1,
    "result2": _run_result2,
    "result3": _run_result3,
    "landscape": _run_landscape,
    "de-sweep": _run_de_sweep,
}


def run_experiment(cfg: ExperimentConfig, reproducible: bool = False,
                   emit_gnuplot: bool = False, threads: int = 1):
    """Run one canned experiment, writing its outputs into ``cfg.out_dir``."""
    os.makedirs(cfg.out_dir, exist_ok=True)
    return _RUNNERS[cfg.experiment](cfg, reproducible, emit_gnuplot, threads)
