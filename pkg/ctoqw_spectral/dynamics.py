"""Transition probabilities p_{ji;ρ}(t) = Tr ρ_t(j) for a walk started at site i in state ρ.

Two routes: direct evolution by the matrix exponential of a truncated
generator (the oracle), and the Karlin-McGregor formula

    Λ_ji(t) = Π_j ∫ e^{-xt} Q_j*(x) dΣ(x) Q_i(x),   p = Tr unvec(Λ_ji(t) vec ρ).
"""

import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.integrate import quad

from . import config, matcore
from .errors import DensityError, DimensionError
from .lindblad import BlockTridiagonal, CTOQWModel, VertexKind, assemble, fold_generator, localized_state, site_blocks
from .measures import SpectralMeasure, integrate
from .orthopoly import PolynomialEvaluator, SymmetrizerChain
from .spectral import CertifiedMeasure, model_measure

logger = logging.getLogger(__name__)

DENSITY_TOL = 1e-12
WINDOW_TOL = 1e-8
MIN_MARGIN = 8
DENSE_LIMIT = 512


@dataclass(frozen=True)
class DensityOperator:
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.complex128)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DensityError(f"density operator must be square, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise DensityError("density operator has non-finite entries")
        defect = matcore.hermiticity_defect(m)
        if defect > DENSITY_TOL:
            raise DensityError(f"density operator is not Hermitian (defect {defect:.3e})")
        m = matcore.hermitian_part(m)
        lowest = matcore.min_eigenvalue(m)
        if lowest < -DENSITY_TOL:
            raise DensityError(f"density operator is not positive semidefinite (eigenvalue {lowest:.3e})")
        trace = float(np.trace(m).real)
        if abs(trace - 1.0) > DENSITY_TOL:
            raise DensityError(f"density operator has trace {trace:.12g}, expected 1")
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def pure(cls, vector) -> "DensityOperator":
        v = np.asarray(vector, dtype=np.complex128)
        v = v / np.linalg.norm(v)
        return cls(np.outer(v, v.conj()))

    @classmethod
    def basis(cls, dim: int, k: int) -> "DensityOperator":
        """|e_k><e_k|."""
        v = np.zeros(dim)
        v[k] = 1.0
        return cls.pure(v)

    @classmethod
    def maximally_mixed(cls, dim: int) -> "DensityOperator":
        return cls(np.eye(dim) / dim)

    @classmethod
    def from_bloch(cls, a: float, b: complex) -> "DensityOperator":
        """[[a, b], [b*, 1-a]]."""
        return cls(np.array([[a, b], [np.conj(b), 1 - a]], dtype=np.complex128))


def _as_density(rho, dim: int) -> DensityOperator:
    rho = rho if isinstance(rho, DensityOperator) else DensityOperator(rho)
    if rho.dim != dim:
        raise DensityError(f"density operator is {rho.dim}x{rho.dim}, model needs {dim}x{dim}")
    return rho


def _probability(lam: np.ndarray, rho: DensityOperator) -> float:
    return float(np.trace(matcore.unvec(lam @ matcore.vec(rho.matrix), rho.dim)).real)


# --- Direct evolution ---


@dataclass(frozen=True)
class WindowedProbability:
    value: float
    window: range
    delta: float
    converged: bool

    def __float__(self) -> float:
        return self.value


def _generator(bt: BlockTridiagonal):
    return bt.sparse() if bt.block_dim * len(bt) > DENSE_LIMIT else bt.dense()


def evolve_site(bt: BlockTridiagonal, j: int, i: int, rho: DensityOperator, t: float) -> float:
    state = localized_state(bt, i, rho.matrix)
    evolved = matcore.expm_action(_generator(bt), state, t)
    return float(np.trace(matcore.unvec(evolved[bt.slot(j)], rho.dim)).real)


def _norm_estimate(model: CTOQWModel, sites: Sequence[int]) -> float:
    """Largest block-row sum ‖A_n‖ + ‖B_n‖ + ‖C_n‖ over the given sites."""
    return max(sum(float(np.linalg.norm(b, 2)) for b in site_blocks(model, n)) for n in sites)


def _window_around(model: CTOQWModel, j: int, i: int, margin: int) -> range:
    lo, hi = min(i, j) - margin, max(i, j) + margin
    if model.kind != VertexKind.LINE:
        lo = max(lo, 0)
    return range(lo, hi + 1)


def p_direct(
    model: CTOQWModel,
    window: range | None,
    j: int,
    i: int,
    rho,
    t: float,
    max_sites: int | None = None,
) -> WindowedProbability:
    """p_{ji;ρ}(t) by exponentiating the generator on a window.

    Finite models and explicit windows are evaluated once. Otherwise the
    margin around i and j starts at max(8, ceil(‖L‖t)) and doubles until two
    successive windows agree within 1e-8 or the window cap is reached.
    """
    rho = _as_density(rho, model.dim)
    if model.kind == VertexKind.FINITE or window is not None:
        window = model.default_window() if window is None else window
        bt = assemble(model, window)
        for n in (i, j):
            if n not in bt.sites:
                raise DimensionError(f"site {n} is outside the window {window[0]}..{window[-1]}")
        return WindowedProbability(evolve_site(bt, j, i, rho, t), window, 0.0, True)

    max_sites = max_sites or config.MAX_WINDOW_SITES
    seed = _window_around(model, j, i, MIN_MARGIN)
    margin = max(MIN_MARGIN, math.ceil(_norm_estimate(model, seed) * t))
    window = _window_around(model, j, i, margin)
    value = evolve_site(assemble(model, window), j, i, rho, t)
    delta = math.inf
    while True:
        margin *= 2
        wider = _window_around(model, j, i, margin)
        if len(wider) > max_sites:
            logger.warning("window cap of %d sites reached at t=%g (last change %.2e)", max_sites, t, delta)
            return WindowedProbability(value, window, delta, False)
        widened = evolve_site(assemble(model, wider), j, i, rho, t)
        delta = abs(widened - value)
        logger.debug("window %d..%d: p=%.12g (change %.2e)", wider[0], wider[-1], widened, delta)
        window, value = wider, widened
        if delta < WINDOW_TOL:
            return WindowedProbability(value, window, delta, True)


def transition_block(bt: BlockTridiagonal, j: int, i: int, t: float) -> np.ndarray:
    """Λ_ji(t), block (j, i) of e^{tL} on a window."""
    return bt.block(matcore.expm(bt.dense(), t), j, i)


def fold_check(model: CTOQWModel, half_width: int, t: float) -> float:
    """Largest deviation between folded semigroup blocks and the 2×2 arrangement of unfolded ones."""
    line = assemble(model, range(-half_width, half_width))
    folded = fold_generator(model, half_width)
    line_semigroup = matcore.expm(line.dense(), t)
    folded_semigroup = matcore.expm(folded.dense(), t)
    worst = 0.0
    for n in range(half_width):
        for m in range(half_width):
            arranged = np.block([
                [line.block(line_semigroup, n, m), line.block(line_semigroup, n, -m - 1)],
                [line.block(line_semigroup, -n - 1, m), line.block(line_semigroup, -n - 1, -m - 1)],
            ])
            worst = max(worst, float(np.max(np.abs(folded.block(folded_semigroup, n, m) - arranged))))
    return worst


# --- Karlin-McGregor ---


def _potential(chain: SymmetrizerChain | Callable[[int], np.ndarray], n: int) -> np.ndarray:
    return chain.potential(n) if isinstance(chain, SymmetrizerChain) else chain(n)


def km_block(measure: SpectralMeasure, polys, chain, j: int, i: int, t: float) -> np.ndarray:
    """Λ_ji(t) = Π_j ∫ e^{-xt} Q_j* dΣ Q_i."""
    value = integrate(measure, lambda x, w: math.exp(-x * t) * (polys(j, x).conj().T @ w @ polys(i, x)))
    return _potential(chain, j) @ value


def p_km(measure: SpectralMeasure, polys, chain, j: int, i: int, rho, t: float) -> float:
    rho = _as_density(rho, math.isqrt(measure.dim))
    return _probability(km_block(measure, polys, chain, j, i, t), rho)


def p_line_km(measure: SpectralMeasure, polys: PolynomialEvaluator, chain, j: int, i: int, rho, t: float) -> float:
    """Line-walk probability from the 2×2-block measure W and stacked polynomials [Q¹_n; Q²_n]."""
    if measure.dim != 2 * polys.blocks.dim:
        raise DimensionError("line formula needs the full 2×2-block measure")
    rho = _as_density(rho, math.isqrt(polys.blocks.dim))
    value = integrate(
        measure, lambda x, w: math.exp(-x * t) * (polys.two_sided(j, x).conj().T @ w @ polys.two_sided(i, x))
    )
    return _probability(_potential(chain, j) @ value, rho)


# --- Curves ---


@dataclass(frozen=True)
class ProbabilityCurve:
    j: int
    i: int
    rho: DensityOperator
    frame: pd.DataFrame

    def to_frame(self) -> pd.DataFrame:
        return self.frame.copy()

    def values(self, method: str) -> np.ndarray:
        return self.frame.loc[self.frame["method"] == method, "p"].to_numpy()


def probability_curve(
    model: CTOQWModel,
    j: int,
    i: int,
    rho,
    times: Sequence[float],
    method: str = "km",
    certified: CertifiedMeasure | None = None,
) -> ProbabilityCurve:
    """p_{ji;ρ} over a time grid by method km, direct or both.

    The certified measure of the model is built on demand for the km route.
    """
    if method not in ("km", "direct", "both"):
        raise ValueError(f"unknown method {method!r}")
    rho = _as_density(rho, model.dim)
    rows = []
    if method in ("km", "both"):
        if certified is None:
            certified = model_measure(model)
        kernel = p_line_km if model.kind == VertexKind.LINE else p_km
        for t in times:
            p = kernel(certified.measure, certified.polys, certified.chain, j, i, rho, float(t))
            # no error estimate from the measure quadrature
            rows.append({"t": float(t), "p": p, "method": "km", "error": math.nan})
    if method in ("direct", "both"):
        for t in times:
            result = p_direct(model, None, j, i, rho, float(t))
            rows.append({"t": float(t), "p": result.value, "method": "direct", "error": result.delta})
    frame = pd.DataFrame(rows, columns=["t", "p", "method", "error"])
    if method == "both":
        pivot = frame.pivot(index="t", columns="method", values="p")
        frame["abs_delta"] = frame["t"].map((pivot["km"] - pivot["direct"]).abs())
    return ProbabilityCurve(j, i, rho, frame)


# --- Integrated return ---


@dataclass(frozen=True)
class ReturnEstimate:
    horizon: float
    integral: float
    tail: float
    exponent: float
    divergent: bool | None

    @property
    def total(self) -> float:
        return self.integral + self.tail


def integrated_return(prob: Callable[[float], float], horizon: float, samples: int = 8) -> ReturnEstimate:
    """∫_0^T p dt plus a power-law tail p ~ c t^{-γ} fitted on [T/10, T].

    γ <= 1 means the occupation time diverges. The flag is None when the tail
    is not monotone or not positive.
    """
    integral, _ = quad(lambda t: float(prob(t)), 0.0, horizon, limit=200)
    grid = np.geomspace(horizon / 10.0, horizon, samples)
    values = np.array([float(prob(t)) for t in grid])
    if np.any(values <= 0) or np.any(np.diff(values) > 1e-12 * values[:-1]):
        logger.debug("tail on [%g, %g] is not a decaying power law", grid[0], grid[-1])
        return ReturnEstimate(horizon, integral, 0.0, float("nan"), None)
    slope, intercept = np.polyfit(np.log(grid), np.log(values), 1)
    gamma = -float(slope)
    if gamma <= 1.0:
        return ReturnEstimate(horizon, integral, math.inf, gamma, True)
    tail = math.exp(intercept) * horizon ** (1.0 - gamma) / (gamma - 1.0)
    return ReturnEstimate(horizon, integral, tail, gamma, False)
