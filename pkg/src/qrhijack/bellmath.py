"""Bell-diagonal state algebra.

States are kept as four probabilities over the Bell basis, ordered
(Phi+, Psi+, Psi-, Phi-).  Purification, CHSH correlations and the
resource expectation E(F) are all closed over this representation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Literal, NamedTuple, Protocol

import numpy as np

NORM_ATOL = 1e-12
NORM_REJECT = 1e-9
WERNER_MIN = 0.25
TSIRELSON = 2.0 * math.sqrt(2.0)
DEFAULT_TOMOGRAPHY_PAIRS = 2500


class BellMathError(ValueError):
    """Base error for invalid Bell-diagonal inputs."""


class UnphysicalWernerError(BellMathError):
    """Werner parameterization with F < 1/4."""


class NoKeepOutcomeError(BellMathError):
    """A purification round has zero probability of a kept outcome."""


class NoCrossingError(BellMathError):
    """S(F) never crosses the classical bound on the searched interval."""


@dataclass(frozen=True)
class BellCoeffs:
    """Bell-diagonal two-qubit state.

    Components within ``NORM_REJECT`` of unit sum are renormalized on
    construction; anything further off is rejected.
    """

    p_phi_plus: float
    p_psi_plus: float
    p_psi_minus: float
    p_phi_minus: float

    def __post_init__(self) -> None:
        values = [float(v) for v in self.as_tuple()]
        if any(math.isnan(v) for v in values):
            raise BellMathError(f"NaN component in {values}")
        if any(v < -NORM_ATOL for v in values):
            raise BellMathError(f"negative probability in {values}")
        values = [max(v, 0.0) for v in values]
        total = math.fsum(values)
        if abs(total - 1.0) > NORM_REJECT:
            raise BellMathError(f"components sum to {total!r}, not 1")
        if total != 1.0:
            values = [v / total for v in values]
        for name, v in zip(_FIELDS, values):
            object.__setattr__(self, name, v)

    @property
    def fidelity(self) -> float:
        return self.p_phi_plus

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.p_phi_plus, self.p_psi_plus, self.p_psi_minus, self.p_phi_minus)

    def as_array(self) -> np.ndarray:
        return np.array(self.as_tuple(), dtype=np.float64)

    @classmethod
    def from_iterable(cls, values: Iterable[float]) -> BellCoeffs:
        return cls(*values)


_FIELDS = ("p_phi_plus", "p_psi_plus", "p_psi_minus", "p_phi_minus")


class PurificationResult(NamedTuple):
    output: BellCoeffs
    success_prob: float


@dataclass(frozen=True)
class ChshAngles:
    """Measurement angles in the x-z plane of the Bloch sphere (radians)."""

    theta: float = 0.0
    theta_prime: float = math.pi / 2
    phi: float = math.pi / 4
    phi_prime: float = 3 * math.pi / 4


def _check_fidelity(f: float) -> float:
    f = float(f)
    if not 0.0 <= f <= 1.0:
        raise BellMathError(f"fidelity {f!r} outside [0, 1]")
    return f


def werner(f: float) -> BellCoeffs:
    """Werner state with weight ``f`` on Phi+ and (1-f)/3 on each other Bell state."""
    f = _check_fidelity(f)
    if f < WERNER_MIN:
        raise UnphysicalWernerError(
            f"unphysical-Werner-parameterization: F={f!r} < {WERNER_MIN}"
        )
    rest = (1.0 - f) / 3.0
    return BellCoeffs(f, rest, rest, rest)


def _finish(raw: tuple[float, float, float, float], success: float) -> PurificationResult:
    if success <= 0.0:
        raise NoKeepOutcomeError("no-keep-outcome: success probability is zero")
    return PurificationResult(BellCoeffs(*(v / success for v in raw)), success)


def purify_round1(source: BellCoeffs, target: BellCoeffs) -> PurificationResult:
    """Round that suppresses X errors.

    Outcomes are kept when source and target both lie in the Phi family
    or both in the Psi family.  Phi+/Phi- and Psi+/Psi- combine like
    parity: equal signs give the + state, opposite signs the - state.
    """
    pp, ps_p, ps_m, pm = source.as_tuple()
    qp, qs_p, qs_m, qm = target.as_tuple()
    raw = (
        pp * qp + pm * qm,
        ps_p * qs_p + ps_m * qs_m,
        ps_p * qs_m + ps_m * qs_p,
        pp * qm + pm * qp,
    )
    success = (pp + pm) * (qp + qm) + (ps_p + ps_m) * (qs_p + qs_m)
    return _finish(raw, success)


def purify_round2(source: BellCoeffs, target: BellCoeffs) -> PurificationResult:
    """Round that suppresses Z errors.

    Kept outcomes pair {Phi+, Psi+} with {Phi+, Psi+}, or {Psi-, Phi-}
    with {Psi-, Phi-}.
    """
    pp, ps_p, ps_m, pm = source.as_tuple()
    qp, qs_p, qs_m, qm = target.as_tuple()
    raw = (
        pp * qp + ps_p * qs_p,
        pp * qs_p + ps_p * qp,
        ps_m * qm + pm * qs_m,
        ps_m * qs_m + pm * qm,
    )
    success = (pp + ps_p) * (qp + qs_p) + (ps_m + pm) * (qs_m + qm)
    return _finish(raw, success)


def purify_twice(state: BellCoeffs) -> PurificationResult:
    """Both rounds on identical copies; success is the product P1 * P2."""
    once, p1 = purify_round1(state, state)
    twice, p2 = purify_round2(once, once)
    return PurificationResult(twice, p1 * p2)


ResourceFormula = Literal["closed-form", "pair-tree"]


class PipelineResult(NamedTuple):
    f_once: float
    f_twice: float
    p1: float
    p2: float
    e_of_f: float


def two_round_pipeline(f: float, resource_formula: ResourceFormula = "closed-form") -> PipelineResult:
    """Closed-form F', F'', P1, P2 and E(F) for identical Werner inputs.

    ``resource_formula="closed-form"`` gives E = 4 / (P1**2 * P2); ``"pair-tree"``
    gives the direct tree count 4 / (P1 * P2).
    """
    f = _check_fidelity(f)
    if f <= WERNER_MIN:
        raise UnphysicalWernerError(f"pipeline requires F > {WERNER_MIN}, got {f!r}")
    q = (1.0 - f) / 3.0
    p1 = (f + q) ** 2 + (2.0 * q) ** 2
    f_once = (f * f + q * q) / p1
    psi_weight = 2.0 * (1.0 - f) ** 2 / (9.0 * p1)
    p2 = (f_once + psi_weight) ** 2 + (2.0 * (1.0 - f) * (1.0 + 2.0 * f) / (9.0 * p1)) ** 2
    f_twice = (f_once**2 + psi_weight**2) / p2
    if resource_formula == "closed-form":
        e_of_f = 4.0 / (p1 * p1 * p2)
    elif resource_formula == "pair-tree":
        e_of_f = 4.0 / (p1 * p2)
    else:
        raise ValueError(f"unknown resource formula {resource_formula!r}")
    return PipelineResult(f_once, f_twice, p1, p2, e_of_f)


def expected_pairs(f: float, resource_formula: ResourceFormula = "closed-form") -> float:
    return two_round_pipeline(f, resource_formula).e_of_f


def correlation(state: BellCoeffs, a: float, b: float) -> float:
    """<sigma_a (x) sigma_b> with sigma_x = cos(x) Z + sin(x) X."""
    pp, ps_p, ps_m, pm = state.as_tuple()
    t_z = pp + pm - ps_p - ps_m
    t_x = pp - pm + ps_p - ps_m
    return t_z * math.cos(a) * math.cos(b) + t_x * math.sin(a) * math.sin(b)


def chsh(state: BellCoeffs, angles: ChshAngles | None = None) -> float:
    """CHSH value with the minus sign on the (theta, phi') term."""
    g = angles or ChshAngles()
    return (
        correlation(state, g.theta, g.phi)
        - correlation(state, g.theta, g.phi_prime)
        + correlation(state, g.theta_prime, g.phi)
        + correlation(state, g.theta_prime, g.phi_prime)
    )


Stage = Literal["raw", "once", "twice"]
STAGES: tuple[Stage, ...] = ("raw", "once", "twice")


def stage_state(f: float, stage: Stage) -> BellCoeffs:
    """Werner(f) after zero, one or two purification rounds."""
    state = werner(f)
    if stage == "raw":
        return state
    once = purify_round1(state, state).output
    if stage == "once":
        return once
    if stage == "twice":
        return purify_round2(once, once).output
    raise ValueError(f"unknown pipeline stage {stage!r}")


def chsh_violation_threshold(stage: Stage, tol: float = 1e-6) -> float:
    """Smallest Werner fidelity whose ``stage`` state reaches S = 2, by bisection."""
    lo, hi = WERNER_MIN, 1.0

    def excess(f: float) -> float:
        return chsh(stage_state(f, stage)) - 2.0

    if excess(lo) >= 0.0 or excess(hi) <= 0.0:
        raise NoCrossingError(f"S(F) does not cross 2 on ({lo}, {hi}] for stage {stage!r}")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if excess(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def hijacked_state() -> BellCoeffs:
    """A-B marginal after a third qubit is entangled into a GHZ state.

    Tracing C out of (|000> + |111>)/sqrt(2) leaves (|00><00| + |11><11|)/2,
    an equal mixture of Phi+ and Phi-.
    """
    return BellCoeffs(0.5, 0.0, 0.0, 0.5)


def mixture(parts: Iterable[tuple[float, BellCoeffs]]) -> BellCoeffs:
    """Convex combination of Bell-diagonal states; weights must sum to 1."""
    acc = np.zeros(4)
    for weight, state in parts:
        acc += weight * state.as_array()
    return BellCoeffs(*acc)


class CostModel(Protocol):
    def __call__(self, f: float) -> float: ...


@dataclass(frozen=True)
class ConstantCost:
    pairs: float = DEFAULT_TOMOGRAPHY_PAIRS

    def __call__(self, f: float) -> float:
        return self.pairs


@dataclass(frozen=True)
class AffineCost:
    """B(F) = base + slope * (1 - F)."""

    base: float
    slope: float

    def __call__(self, f: float) -> float:
        return self.base + self.slope * (1.0 - f)


@dataclass(frozen=True)
class TableCost:
    """Piecewise-linear B(F) through calibration points, flat outside them."""

    points: tuple[tuple[float, float], ...] = field(default=((0.65, DEFAULT_TOMOGRAPHY_PAIRS),))

    def __post_init__(self) -> None:
        if not self.points:
            raise ValueError("table cost model needs at least one point")
        object.__setattr__(self, "points", tuple(sorted((float(f), float(b)) for f, b in self.points)))

    def __call__(self, f: float) -> float:
        fs, bs = zip(*self.points)
        return float(np.interp(f, fs, bs))


DEFAULT_COST_MODEL = ConstantCost()


def tomography_sample_count(f: float, model: CostModel = DEFAULT_COST_MODEL) -> float:
    """B(F): Bell pairs needed to reconstruct a state of fidelity ``f``."""
    f = _check_fidelity(f)
    if f <= WERNER_MIN:
        raise UnphysicalWernerError(f"sample count requires F > {WERNER_MIN}, got {f!r}")
    count = model(f)
    if not count > 0:
        raise BellMathError(f"cost model returned non-positive pair count {count!r}")
    return count


def cost_model_from_dict(spec: dict) -> CostModel:
    kind = spec.get("type", "constant")
    if kind == "constant":
        return ConstantCost(spec.get("pairs", DEFAULT_TOMOGRAPHY_PAIRS))
    if kind == "affine":
        return AffineCost(spec["base"], spec["slope"])
    if kind == "table":
        return TableCost(tuple((p[0], p[1]) for p in spec["points"]))
    raise ValueError(f"unknown cost model type {kind!r}")


def cost_model_to_dict(model: CostModel) -> dict:
    if isinstance(model, ConstantCost):
        return {"type": "constant", "pairs": model.pairs}
    if isinstance(model, AffineCost):
        return {"type": "affine", "base": model.base, "slope": model.slope}
    if isinstance(model, TableCost):
        return {"type": "table", "points": [list(p) for p in model.points]}
    raise TypeError(f"cannot serialize cost model {model!r}")


CURVE_COLUMNS = ("f", "f_once", "f_twice", "e_of_f", "s_raw", "s_once", "s_twice")


def curve_rows(fs: Iterable[float], resource_formula: ResourceFormula = "closed-form") -> list[tuple[float, ...]]:
    """Rows of (f, F', F'', E(F), S, S', S'') for fidelity sweeps."""
    rows = []
    for f in fs:
        pipe = two_round_pipeline(f, resource_formula)
        rows.append(
            (
                f,
                pipe.f_once,
                pipe.f_twice,
                pipe.e_of_f,
                chsh(stage_state(f, "raw")),
                chsh(stage_state(f, "once")),
                chsh(stage_state(f, "twice")),
            )
        )
    return rows
