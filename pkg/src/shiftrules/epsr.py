"""Shift rules for arbitrary-order derivatives of trigonometric cost functions.

A derivative of order d is recovered exactly as a linear combination of cost
evaluations at shifted arguments.  The combination coefficients come from a
small trigonometric interpolation system: for odd d the matrix has entries
sin(Omega_k x_i) over r freely chosen nodes, for even d it gains a leading
column of ones and uses cos(Omega_k x_i) over r+1 nodes.  Any node set works
as long as that matrix is nonsingular, which is what gives room to optimize
the nodes for derivative variance (see :mod:`shiftrules.variance`).

This module builds the matrices, solves for coefficients with diagnostics,
provides the classical fixed-node closed forms for first and second
derivatives, evaluates the determinant factorizations used to certify node
validity under integer frequencies, and applies rules to arbitrary
evaluators.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .spectra import FrequencySet

__all__ = [
    "ShiftNodes",
    "PSRRule",
    "RuleDiagnostics",
    "SingularNodesError",
    "build_A_odd",
    "build_A_even",
    "build_A_odd_deriv",
    "build_A_even_deriv",
    "rhs_vector",
    "solve_coefficients",
    "make_rule",
    "apply_rule",
    "evaluation_count",
    "equidistant_nodes",
    "equidistant_coefficients_closed_form",
    "determinant_closed_form",
    "rule_to_json",
    "rule_from_json",
]

#: Nodes whose interpolation matrix exceeds this condition estimate are
#: rejected: beyond it, coefficient error swamps double-precision derivative
#: accuracy targets.
CONDITION_LIMIT = 1e12

#: Nodes at exactly 0 or pi (within this tolerance) are merged into single
#: evaluation terms in even-order rules.
_MERGE_TOL = 1e-12


def _check_parity(parity: str) -> str:
    if parity not in ("odd", "even"):
        raise ValueError(f"parity must be 'odd' or 'even', got {parity!r}")
    return parity


@dataclass(frozen=True)
class ShiftNodes:
    """Interpolation nodes of a shift rule.

    Odd-parity rules use r nodes x_1..x_r, even-parity rules r+1 nodes
    x_0..x_r.  Validity (nonsingularity of the interpolation matrix) is
    checked when coefficients are solved, not here.
    """

    parity: str
    values: tuple[float, ...]

    def __post_init__(self):
        _check_parity(self.parity)
        vals = tuple(float(v) for v in self.values)
        if len(vals) == 0:
            raise ValueError("node vector must not be empty")
        if not np.all(np.isfinite(vals)):
            raise ValueError("nodes must be finite")
        object.__setattr__(self, "values", vals)

    @property
    def r(self) -> int:
        """Frequency count this node vector is sized for."""
        return len(self.values) if self.parity == "odd" else len(self.values) - 1

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)


@dataclass(frozen=True)
class RuleDiagnostics:
    determinant: float
    condition_estimate: float
    nonsingular: bool


class SingularNodesError(ValueError):
    """Raised when a node set fails the conditioning check."""

    def __init__(self, message: str, diagnostics: RuleDiagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class PSRRule:
    """A solved shift rule of order d.

    ``solve_coeffs`` is the raw solution b of the interpolation system; the
    expanded form lists one coefficient gamma_mu per distinct evaluation
    shift phi_mu, with the 0 and pi merges already applied, so that

        f^(d)(x) = sum_mu gamma_mu * f(x + phi_mu).
    """

    order: int
    parity: str
    nodes: ShiftNodes
    solve_coeffs: tuple[float, ...]
    expanded_shifts: tuple[float, ...]
    expanded_coeffs: tuple[float, ...]
    frequencies: FrequencySet
    diagnostics: RuleDiagnostics | None = None

    def __post_init__(self):
        _check_parity(self.parity)
        if ("odd" if self.order % 2 else "even") != self.parity:
            raise ValueError(f"order {self.order} does not match parity {self.parity!r}")
        if len(self.expanded_shifts) != len(self.expanded_coeffs):
            raise ValueError("expanded shifts and coefficients must align")


def build_A_odd(nodes, fs: FrequencySet) -> np.ndarray:
    """r x r matrix with entries sin(Omega_k x_i); rows follow node order."""
    x = nodes.as_array() if isinstance(nodes, ShiftNodes) else np.asarray(nodes, dtype=float)
    return np.sin(np.multiply.outer(x, fs.as_array()))


def build_A_even(nodes, fs: FrequencySet) -> np.ndarray:
    """(r+1) x (r+1) matrix [1 | cos(Omega_k x_i)]."""
    x = nodes.as_array() if isinstance(nodes, ShiftNodes) else np.asarray(nodes, dtype=float)
    cos = np.cos(np.multiply.outer(x, fs.as_array()))
    return np.hstack([np.ones((x.size, 1)), cos])


def build_A_odd_deriv(nodes, fs: FrequencySet) -> np.ndarray:
    """Component-wise node derivative of the odd matrix: Omega_k cos(Omega_k x_i)."""
    x = nodes.as_array() if isinstance(nodes, ShiftNodes) else np.asarray(nodes, dtype=float)
    w = fs.as_array()
    return w * np.cos(np.multiply.outer(x, w))


def build_A_even_deriv(nodes, fs: FrequencySet) -> np.ndarray:
    """Component-wise node derivative of the even matrix: [0 | -Omega_k sin(Omega_k x_i)]."""
    x = nodes.as_array() if isinstance(nodes, ShiftNodes) else np.asarray(nodes, dtype=float)
    w = fs.as_array()
    sin = -w * np.sin(np.multiply.outer(x, w))
    return np.hstack([np.zeros((x.size, 1)), sin])


def rhs_vector(d: int, fs: FrequencySet, parity: str) -> np.ndarray:
    """Right-hand side of the coefficient system for order d.

    Odd parity: (-1)^((d-1)/2) * [Omega_1^d, ..., Omega_r^d].
    Even parity: (-1)^(d/2) * [delta_{d,0}, Omega_1^d, ..., Omega_r^d].
    """
    _check_parity(parity)
    if d < 0:
        raise ValueError("order must be >= 0")
    w = fs.as_array()
    if parity == "odd":
        if d % 2 != 1:
            raise ValueError(f"order {d} has no odd-parity rule")
        return (-1.0) ** ((d - 1) // 2) * w**d
    if d % 2 != 0:
        raise ValueError(f"order {d} has no even-parity rule")
    lead = 1.0 if d == 0 else 0.0
    return (-1.0) ** (d // 2) * np.concatenate([[lead], w**d])


def _diagnose(a: np.ndarray) -> RuleDiagnostics:
    det = float(np.linalg.det(a))
    sv = np.linalg.svd(a, compute_uv=False)
    smax, smin = float(sv[0]), float(sv[-1])
    cond = math.inf if smin == 0.0 else smax / smin
    # the condition ratio alone misses uniformly tiny matrices (e.g. the 1x1
    # [sin pi]), so the smallest singular value is also held to an absolute
    # floor relative to the entry scale
    nonsingular = bool(
        np.isfinite(cond)
        and cond <= CONDITION_LIMIT
        and smin > 1e-12 * max(1.0, smax)
        and det != 0.0
    )
    return RuleDiagnostics(det, cond, nonsingular)


def solve_coefficients(nodes: ShiftNodes, fs: FrequencySet, d: int) -> tuple[np.ndarray, RuleDiagnostics]:
    """Coefficient vector b with A(x)^T b = rhs, plus conditioning diagnostics.

    Raises:
        SingularNodesError: when the interpolation matrix is singular or its
            condition estimate exceeds ``CONDITION_LIMIT``.
        ValueError: when node parity does not match the parity of d.
    """
    parity = "odd" if d % 2 else "even"
    if nodes.parity != parity:
        raise ValueError(f"order {d} needs {parity} nodes, got {nodes.parity}")
    if nodes.r != fs.r:
        raise ValueError(f"node count sized for r={nodes.r}, frequency set has r={fs.r}")
    a = build_A_odd(nodes, fs) if parity == "odd" else build_A_even(nodes, fs)
    diag = _diagnose(a)
    if not diag.nonsingular:
        raise SingularNodesError(
            f"singular node set (determinant {diag.determinant:.3e}, "
            f"condition estimate {diag.condition_estimate:.3e})",
            diag,
        )
    b = np.linalg.solve(a.T, rhs_vector(d, fs, parity))
    return b, diag


def _expand(parity: str, x: np.ndarray, b: np.ndarray, fs: FrequencySet) -> tuple[tuple, tuple]:
    """Expanded (shift, coefficient) terms with 0 and pi merges applied.

    The pi merge relies on 2*pi periodicity, so it is applied only when all
    frequencies are certified integer.
    """
    shifts: list[float] = []
    coeffs: list[float] = []
    if parity == "odd":
        for xi, bi in zip(x, b):
            shifts += [float(xi), float(-xi)]
            coeffs += [0.5 * float(bi), -0.5 * float(bi)]
        return tuple(shifts), tuple(coeffs)
    periodic = fs.is_all_integer()
    for xi, bi in zip(x, b):
        if abs(xi) <= _MERGE_TOL:
            shifts.append(0.0)
            coeffs.append(float(bi))
        elif periodic and abs(xi - math.pi) <= _MERGE_TOL:
            shifts.append(float(xi))
            coeffs.append(float(bi))
        else:
            shifts += [float(xi), float(-xi)]
            coeffs += [0.5 * float(bi), 0.5 * float(bi)]
    return tuple(shifts), tuple(coeffs)


def make_rule(nodes: ShiftNodes, fs: FrequencySet, d: int) -> PSRRule:
    """Solve for coefficients at the given nodes and package the full rule."""
    b, diag = solve_coefficients(nodes, fs, d)
    shifts, coeffs = _expand(nodes.parity, nodes.as_array(), b, fs)
    return PSRRule(
        order=d,
        parity=nodes.parity,
        nodes=nodes,
        solve_coeffs=tuple(float(v) for v in b),
        expanded_shifts=shifts,
        expanded_coeffs=coeffs,
        frequencies=fs,
        diagnostics=diag,
    )


def apply_rule(rule: PSRRule, evaluator, xbar: float) -> float:
    """sum_mu gamma_mu * evaluator(xbar + phi_mu).

    The evaluator must be a total function of a single real argument; calls
    are independent, so a thread-safe evaluator may be invoked concurrently.
    """
    return float(
        sum(g * float(evaluator(xbar + s)) for g, s in zip(rule.expanded_coeffs, rule.expanded_shifts))
    )


def evaluation_count(rule: PSRRule) -> int:
    """Distinct evaluator calls the rule performs (after 0 / pi merges)."""
    return len(rule.expanded_shifts)


def equidistant_nodes(r: int, parity: str) -> ShiftNodes:
    """The classical fixed nodes for integer frequencies {1..r}.

    Odd parity: x_i = pi/(2r) + (i-1) pi/r for i = 1..r.
    Even parity: x_i = i pi/r for i = 0..r.
    """
    _check_parity(parity)
    if r < 1:
        raise ValueError("r must be >= 1")
    if parity == "odd":
        vals = tuple(math.pi / (2 * r) + (i - 1) * math.pi / r for i in range(1, r + 1))
    else:
        vals = tuple(i * math.pi / r for i in range(r + 1))
    return ShiftNodes(parity, vals)


def equidistant_coefficients_closed_form(r: int, d: int) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form expanded rule (gamma_mu, phi_mu) at the equidistant nodes.

    First order: 2r shifts x_i = pi/(2r) + (i-1) pi/r, i = 1..2r, with
    coefficients (-1)^(i-1) / (4 r sin^2(x_i / 2)).

    Second order: a center term -(2r^2+1)/6 at shift 0 plus 2r-1 shifts
    x_i = i pi/r with coefficients (-1)^(i-1) / (2 sin^2(x_i / 2)).

    Returns (coefficients, shifts).  Requires integer frequencies {1..r}.
    """
    if r < 1:
        raise ValueError("r must be >= 1")
    if d == 1:
        i = np.arange(1, 2 * r + 1)
        x = np.pi / (2 * r) + (i - 1) * np.pi / r
        c = (-1.0) ** (i - 1) / (4 * r * np.sin(x / 2) ** 2)
        return c, x
    if d == 2:
        i = np.arange(1, 2 * r)
        x = i * np.pi / r
        c = (-1.0) ** (i - 1) / (2 * np.sin(x / 2) ** 2)
        center = -(2 * r**2 + 1) / 6.0
        return np.concatenate([[center], c]), np.concatenate([[0.0], x])
    raise ValueError("closed form only for d <= 2; use solve_coefficients")


def determinant_closed_form(nodes: ShiftNodes, fs: FrequencySet) -> float:
    """Product-form determinant of the interpolation matrix for Omega_k = k.

    Odd parity:  (prod_i sin x_i) * (prod_{i<j} (cos x_j - cos x_i)) * 2^(r(r-1)/2).
    Even parity: (prod_{i<j} (cos x_j - cos x_i)) * 2^(r(r-1)/2) over all r+1 nodes.

    The factorization reads off the singularity conditions directly: odd
    rules fail iff some x_i lies in pi*Z or two cosines coincide, even rules
    fail iff two cosines coincide.
    """
    if not fs.is_consecutive_integers():
        raise ValueError("determinant closed form requires frequencies {1, ..., r}")
    x = nodes.as_array()
    r = fs.r
    cos = np.cos(x)
    vandermonde = 1.0
    for i in range(x.size):
        for j in range(i + 1, x.size):
            vandermonde *= cos[j] - cos[i]
    power = 2.0 ** (r * (r - 1) // 2)
    if nodes.parity == "odd":
        return float(np.prod(np.sin(x)) * vandermonde * power)
    return float(vandermonde * power)


def _float_repr(v: float) -> float:
    # round-trip via 17 significant digits: exact for binary64
    return float(f"{v:.17g}")


def rule_to_json(rule: PSRRule) -> str:
    """Serialize a rule to the interchange JSON document (17 significant digits)."""
    doc = {
        "order": rule.order,
        "parity": rule.parity,
        "frequencies": [_float_repr(w) for w in rule.frequencies.frequencies],
        "nodes": [_float_repr(v) for v in rule.nodes.values],
        "b": [_float_repr(v) for v in rule.solve_coeffs],
        "expanded": {
            "phi": [_float_repr(v) for v in rule.expanded_shifts],
            "gamma": [_float_repr(v) for v in rule.expanded_coeffs],
        },
    }
    return json.dumps(doc, indent=2)


def rule_from_json(text: str) -> PSRRule:
    """Inverse of :func:`rule_to_json`."""
    doc = json.loads(text)
    fs = FrequencySet(tuple(doc["frequencies"]))
    parity = doc["parity"]
    nodes = ShiftNodes(parity, tuple(doc["nodes"]))
    return PSRRule(
        order=int(doc["order"]),
        parity=parity,
        nodes=nodes,
        solve_coeffs=tuple(doc["b"]),
        expanded_shifts=tuple(doc["expanded"]["phi"]),
        expanded_coeffs=tuple(doc["expanded"]["gamma"]),
        frequencies=fs,
    )
