"""Matrix Stieltjes transforms B(z) = ∫ dΣ(x)/(z - x).

With the root normalization Π_0 = I the transform of a half-line generator is
its root resolvent, Π_0 B(z) = [(z + L)^{-1}]_{00}. Evaluators expose

    __call__(z)        B(z) for z off the support
    inverse(z)         B(z)^{-1}
    boundary(x)        B(x + i0) on the cuts, when known in closed form
    cuts()             intervals of absolutely continuous support, when known
    support_bounds()   an enclosure (lo, hi) of the support
"""

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field
try:
    from enum import StrEnum
except ImportError:  # Python < 3.11
    from enum import Enum

    class StrEnum(str, Enum):
        __str__ = str.__str__
        __format__ = str.__format__

import numpy as np
import scipy.linalg as sla
from scipy.optimize import brentq, minimize_scalar

from . import matcore
from .errors import ConvergenceError, DimensionError, SupportError
from .lindblad import BlockTridiagonal
from .measures import Atom, DensityPiece, SpectralMeasure, integrate
from .orthopoly import RecurrenceBlocks

logger = logging.getLogger(__name__)

SUPPORT_DISTANCE = 1e-12
POLE_CONDITION_LIMIT = 1e12
CR_TOL = 1e-14
CR_MAX_ITERATIONS = 64
ATOM_THRESHOLD = 1e-6
ATOM_EPS = (1e-4, 1e-5, 1e-6)
EMBEDDED_POLE_TOL = 1e-6
DENSITY_EPS = (1e-3, 5e-4, 2.5e-4, 1.25e-4)
RECURRENCE_EPS = tuple(10.0**-k for k in range(2, 9))
RECURRENCE_FLOOR = 1e-12
RECURRENCE_BLOWUP = 1e6


class StieltjesEvaluator:
    dim: int

    def __call__(self, z: complex) -> np.ndarray:
        raise NotImplementedError

    def inverse(self, z: complex) -> np.ndarray:
        return np.linalg.inv(self(z))

    def boundary(self, x: float) -> np.ndarray | None:
        return None

    def boundary_inverse(self, x: float) -> np.ndarray | None:
        b = self.boundary(x)
        return None if b is None else np.linalg.inv(b)

    def cuts(self) -> list[tuple[float, float]] | None:
        return None

    def support_bounds(self) -> tuple[float, float]:
        raise NotImplementedError

    def support_lower_bound(self) -> float:
        return self.support_bounds()[0]

    def _lowest_pole(self, below: float) -> float:
        """Lowest support point, given that nothing but poles lies below `below`.

        Below the support B(x) is negative definite and the eigenvalues of the
        Hermitian B(x)^{-1} increase with x; the lowest pole is where the
        largest one first reaches 0.
        """
        def top(x: float) -> float:
            return float(sla.eigvalsh(matcore.hermitian_part(self.inverse(x)))[-1])

        inner = below - 1e-9 * max(1.0, abs(below))
        if top(inner) < 0:
            return below
        step = max(1.0, abs(below))
        left = below - step
        while top(left) >= 0:
            step *= 2
            left = below - step
            if step > 1e12:
                raise SupportError("no lower end of the support found")
        return brentq(top, left, inner)


def _on_support(z: complex, measure: SpectralMeasure) -> bool:
    if abs(z.imag) > SUPPORT_DISTANCE:
        return False
    x = z.real
    if any(p.lo - SUPPORT_DISTANCE <= x <= p.hi + SUPPORT_DISTANCE for p in measure.pieces):
        return True
    return any(abs(x - a.location) <= SUPPORT_DISTANCE for a in measure.atoms)


class MeasureTransform(StieltjesEvaluator):
    """Transform of an explicit measure: atoms exactly, densities by quadrature."""

    def __init__(self, measure: SpectralMeasure):
        self.measure = measure
        self.dim = measure.dim

    def __call__(self, z: complex) -> np.ndarray:
        z = complex(z)
        if _on_support(z, self.measure):
            raise SupportError(f"z = {z} lies on the support")
        return integrate(self.measure, lambda x, w: w / (z - x))

    def cuts(self) -> list[tuple[float, float]]:
        return self.measure.intervals()

    def support_bounds(self) -> tuple[float, float]:
        return self.measure.lower_bound(), self.measure.upper_bound()


def _decaying_root(mu: np.ndarray) -> np.ndarray:
    """Root r of r² - μr + 1 = 0 with |r| < 1 (|r| = 1 on [-2, 2])."""
    mu = np.asarray(mu, dtype=np.complex128)
    s = np.sqrt(mu * mu - 4.0)
    r1, r2 = 0.5 * (mu + s), 0.5 * (mu - s)
    return np.where(np.abs(r1) < np.abs(r2), r1, r2)


class DuranTransform(StieltjesEvaluator):
    """Root transform of the constant block Jacobi matrix with diagonal b, off-diagonal a.

    With M(z) = a^{-1/2}(z - b)a^{-1/2}, B(z) = a^{-1/2} r(M(z)) a^{-1/2} where
    r is the decaying root of r² - Mr + I = 0.
    """

    def __init__(self, a, b):
        self.a = matcore.as_matrix(a)
        self.b = matcore.hermitian_part(b)
        self.dim = self.a.shape[0]
        self.a_inv_half = matcore.inv_sqrt_pd(self.a)
        self.breakpoints = np.unique(
            np.round(np.concatenate([sla.eigvalsh(self.b - 2 * self.a), sla.eigvalsh(self.b + 2 * self.a)]), 12)
        )

    def _pencil(self, z: complex) -> np.ndarray:
        return self.a_inv_half @ (z * np.eye(self.dim) - self.b) @ self.a_inv_half

    def __call__(self, z: complex) -> np.ndarray:
        z = complex(z)
        m = self._pencil(z)
        if abs(z.imag) <= SUPPORT_DISTANCE:
            mu, u = sla.eigh(matcore.hermitian_part(m))
            if np.any(np.abs(mu) < 2.0 - SUPPORT_DISTANCE):
                raise SupportError(f"z = {z} lies on a cut of the transform")
            r = 0.5 * (mu - np.sign(mu) * np.sqrt(np.clip(mu * mu - 4.0, 0.0, None)))
            return self.a_inv_half @ (u * r) @ u.conj().T @ self.a_inv_half
        mu, v = sla.eig(m)
        r = _decaying_root(mu)
        return self.a_inv_half @ (v * r) @ np.linalg.inv(v) @ self.a_inv_half

    def boundary(self, x: float) -> np.ndarray:
        """B(x + i0)."""
        mu, u = sla.eigh(matcore.hermitian_part(self._pencil(float(x))))
        inside = np.abs(mu) < 2.0
        outer = 0.5 * (mu - np.sign(mu) * np.sqrt(np.clip(mu * mu - 4.0, 0.0, None)))
        inner = 0.5 * (mu - 1j * np.sqrt(np.clip(4.0 - mu * mu, 0.0, None)))
        r = np.where(inside, inner, outer)
        return self.a_inv_half @ (u * r) @ u.conj().T @ self.a_inv_half

    def density(self, x: float) -> np.ndarray:
        return -matcore.antihermitian_part(self.boundary(x)) / np.pi

    def cuts(self) -> list[tuple[float, float]]:
        """Intervals between consecutive breakpoints carrying density."""
        return [
            (float(lo), float(hi))
            for lo, hi in zip(self.breakpoints[:-1], self.breakpoints[1:])
            if hi - lo > 1e-12 and np.max(np.abs(self.density(0.5 * (lo + hi)))) > 1e-14
        ]

    def support_bounds(self) -> tuple[float, float]:
        return float(self.breakpoints[0]), float(self.breakpoints[-1])


class PerturbedTransform(StieltjesEvaluator):
    """B(z) = (B̃(z)^{-1} - S_0^{-1} ΔB_0)^{-1}: first diagonal block of J changed by ΔB_0."""

    def __init__(self, base: StieltjesEvaluator, delta_b0, s0=None):
        self.base = base
        self.dim = base.dim
        self.delta = matcore.as_matrix(delta_b0)
        s0 = np.eye(self.dim) if s0 is None else matcore.as_matrix(s0)
        self.shift = np.linalg.solve(s0, self.delta)

    def inverse(self, z: complex) -> np.ndarray:
        return self.base.inverse(z) - self.shift

    def __call__(self, z: complex) -> np.ndarray:
        inv = self.inverse(z)
        if matcore.condition_number(inv) > POLE_CONDITION_LIMIT:
            raise SupportError(f"z = {z} is a pole of the perturbed transform")
        return np.linalg.inv(inv)

    def boundary_inverse(self, x: float) -> np.ndarray | None:
        base = self.base.boundary_inverse(x)
        return None if base is None else base - self.shift

    def boundary(self, x: float) -> np.ndarray | None:
        inv = self.boundary_inverse(x)
        return None if inv is None else np.linalg.inv(inv)

    def cuts(self) -> list[tuple[float, float]] | None:
        return self.base.cuts()

    def support_bounds(self) -> tuple[float, float]:
        lo, hi = self.base.support_bounds()
        spread = float(np.linalg.norm(self.shift, 2))
        return lo - spread, hi + spread

    def support_lower_bound(self) -> float:
        return self._lowest_pole(self.base.support_lower_bound())


class ScaledTransform(StieltjesEvaluator):
    """left @ B(z)."""

    def __init__(self, base: StieltjesEvaluator, left):
        self.base = base
        self.left = matcore.as_matrix(left)
        self.dim = base.dim

    def __call__(self, z: complex) -> np.ndarray:
        return self.left @ self.base(z)

    def boundary(self, x: float) -> np.ndarray | None:
        base = self.base.boundary(x)
        return None if base is None else self.left @ base

    def cuts(self):
        return self.base.cuts()

    def support_bounds(self):
        return self.base.support_bounds()

    def support_lower_bound(self) -> float:
        return self.base.support_lower_bound()


class TruncatedResolvent(StieltjesEvaluator):
    """[(z + L)^{-1}]_{site, site} on a finite window."""

    def __init__(self, bt: BlockTridiagonal, site: int | None = None, column: int | None = None):
        self.bt = bt
        self.site = bt.first if site is None else site
        self.column = self.site if column is None else column
        self.dim = bt.block_dim
        self._dense = bt.dense()
        self._spectrum = None

    def __call__(self, z: complex) -> np.ndarray:
        size = self._dense.shape[0]
        rhs = np.zeros((size, self.dim), dtype=np.complex128)
        rhs[self.bt.slot(self.column)] = np.eye(self.dim)
        solution = sla.solve(complex(z) * np.eye(size) + self._dense, rhs)
        return solution[self.bt.slot(self.site)]

    def support_bounds(self) -> tuple[float, float]:
        if self._spectrum is None:
            self._spectrum = np.sort(np.real(sla.eigvals(-self._dense)))
        return float(self._spectrum[0]), float(self._spectrum[-1])


def truncated_resolvent(bt: BlockTridiagonal, site: int, z: complex) -> np.ndarray:
    return TruncatedResolvent(bt, site)(z)


# --- Half-line resolvent with a periodic tail ---


def cyclic_reduction(lower, middle, upper, tol: float = CR_TOL, max_iterations: int = CR_MAX_ITERATIONS) -> np.ndarray:
    """Minimal solvent X of lower + middle X + upper X² = 0."""
    a_m, a_0, a_p = (np.array(m, dtype=np.complex128) for m in (lower, middle, upper))
    a_hat = a_0.copy()
    for iteration in range(1, max_iterations + 1):
        k = np.linalg.inv(a_0)
        a_m_k = a_m @ k
        a_p_k = a_p @ k
        update = a_p_k @ a_m
        a_0 = a_0 - a_m_k @ a_p - update
        a_hat_next = a_hat - update
        a_m = -a_m_k @ a_m
        a_p = -a_p_k @ a_p
        change = float(np.linalg.norm(a_hat_next - a_hat))
        a_hat = a_hat_next
        if change <= tol * float(np.linalg.norm(a_hat)) or min(np.linalg.norm(a_m), np.linalg.norm(a_p)) <= tol:
            logger.debug("cyclic reduction converged after %d iterations", iteration)
            return -np.linalg.solve(a_hat, np.array(lower, dtype=np.complex128))
    raise ConvergenceError("cyclic reduction did not converge", achieved=change)


class TailResolventTransform(StieltjesEvaluator):
    """Root resolvent [(z + L)^{-1}]_{00} of a half-line generator.

    Sites 0..head-1 are arbitrary; from `head` on the blocks repeat with the
    given period. The tail is solved by cyclic reduction on super-blocks of
    one period, the head by backward Schur recursion.
    """

    def __init__(self, blocks: RecurrenceBlocks, head: int = 1, period: int = 1, scan_sites: int = 64):
        if head < 0 or period < 1:
            raise DimensionError("head must be >= 0 and period >= 1")
        self.blocks = blocks
        self.head = head
        self.period = period
        self.dim = blocks.dim
        self.scan_sites = scan_sites
        self._bounds = None
        m, p = self.dim, period
        sites = [head + k for k in range(p)]
        self._tail_diag = np.zeros((m * p, m * p), dtype=np.complex128)
        for k, n in enumerate(sites):
            self._tail_diag[k * m:(k + 1) * m, k * m:(k + 1) * m] = blocks.diag(n)
            if k + 1 < p:
                self._tail_diag[(k + 1) * m:(k + 2) * m, k * m:(k + 1) * m] = blocks.up(n)
                self._tail_diag[k * m:(k + 1) * m, (k + 1) * m:(k + 2) * m] = blocks.down(n + 1)
        self._tail_lower = np.zeros_like(self._tail_diag)
        self._tail_lower[:m, (p - 1) * m:] = blocks.up(head + p - 1)
        self._tail_upper = np.zeros_like(self._tail_diag)
        self._tail_upper[(p - 1) * m:, :m] = blocks.down(head + p)

    def tail_resolvent(self, z: complex) -> np.ndarray:
        shifted = complex(z) * np.eye(self._tail_diag.shape[0]) + self._tail_diag
        x = cyclic_reduction(self._tail_lower, -shifted, self._tail_upper)
        return np.linalg.inv(shifted - self._tail_upper @ x)[: self.dim, : self.dim]

    def __call__(self, z: complex) -> np.ndarray:
        b = self.blocks
        t = self.tail_resolvent(z)
        for n in range(self.head - 1, -1, -1):
            t = np.linalg.inv(complex(z) * np.eye(self.dim) + b.diag(n) - b.down(n + 1) @ t @ b.up(n))
        return t

    def _window(self) -> np.ndarray:
        sites = range(self.scan_sites)
        b = self.blocks
        bt = BlockTridiagonal(
            0,
            tuple(b.diag(n) for n in sites),
            tuple(b.up(n) for n in sites[:-1]),
            tuple(b.down(n + 1) for n in sites[:-1]),
        )
        return bt.dense()

    def support_bounds(self) -> tuple[float, float]:
        if self._bounds is None:
            window = self._window()
            spectrum = np.real(sla.eigvals(-window))
            radius = float(np.max(np.sum(np.abs(window), axis=1)))
            self._bounds = (float(spectrum.min()), radius)
        return self._bounds


# --- Folding ---


class FoldedTransform(StieltjesEvaluator):
    """2d²-block transform B(z; W) of a line walk from the two half-line transforms.

    With P = Π⁺_0 B₊(z), M = Π⁻_{-1} B₋(z), A = ⌈A_{-1}⌉, C = ⌈C_0⌉:

        G_00     = P (I - A M C P)^{-1}        G_{0,-1} = -G_00 A M
        G_{-1-1} = M (I - C P A M)^{-1}        G_{-1,0} = -G_{-1-1} C P

    and B(z; W_11) = Π_0^{-1} G_00, B(z; W_12) = Π_0^{-1} G_{0,-1}, etc.
    Equivalently G = K^{-1} with K = [[P^{-1}, A], [C, M^{-1}]], so B^{-1}
    is K diag(Π_0, Π_{-1}) and stays finite at the poles of B.
    """

    def __init__(self, b_plus, b_minus, a_minus1, c0, pi_plus0=None, pi_minus1=None):
        self.b_plus = b_plus
        self.b_minus = b_minus
        d = b_plus.dim
        self.half = d
        self.dim = 2 * d
        self.a_minus1 = matcore.as_matrix(a_minus1)
        self.c0 = matcore.as_matrix(c0)
        self.pi_plus0 = np.eye(d) if pi_plus0 is None else matcore.as_matrix(pi_plus0)
        self.pi_minus1 = np.eye(d) if pi_minus1 is None else matcore.as_matrix(pi_minus1)
        self._pi_plus0_inv = np.linalg.inv(self.pi_plus0)
        self._pi_minus1_inv = np.linalg.inv(self.pi_minus1)

    def _coupling(self, b_plus: np.ndarray, b_minus: np.ndarray) -> np.ndarray:
        p = self.pi_plus0 @ b_plus
        m = self.pi_minus1 @ b_minus
        return np.block([[np.linalg.inv(p), self.a_minus1], [self.c0, np.linalg.inv(m)]])

    def _compose(self, k: np.ndarray, z) -> np.ndarray:
        if matcore.condition_number(k) > POLE_CONDITION_LIMIT:
            raise SupportError(f"z = {z} is a pole of the folded transform")
        g = np.linalg.inv(k)
        d = self.half
        g[:d] = self._pi_plus0_inv @ g[:d]
        g[d:] = self._pi_minus1_inv @ g[d:]
        return g

    def _split(self, full: np.ndarray) -> dict[tuple[int, int], np.ndarray]:
        d = self.half
        return {(1, 1): full[:d, :d], (1, 2): full[:d, d:], (2, 1): full[d:, :d], (2, 2): full[d:, d:]}

    def blocks(self, z: complex) -> dict[tuple[int, int], np.ndarray]:
        return self._split(self(z))

    def __call__(self, z: complex) -> np.ndarray:
        return self._compose(self._coupling(self.b_plus(z), self.b_minus(z)), z)

    def _scaled(self, k: np.ndarray) -> np.ndarray:
        d = self.half
        k[:, :d] = k[:, :d] @ self.pi_plus0
        k[:, d:] = k[:, d:] @ self.pi_minus1
        return k

    def inverse(self, z: complex) -> np.ndarray:
        return self._scaled(self._coupling(self.b_plus(z), self.b_minus(z)))

    def boundary_inverse(self, x: float) -> np.ndarray | None:
        plus, minus = self.b_plus.boundary(x), self.b_minus.boundary(x)
        if plus is None or minus is None:
            return None
        return self._scaled(self._coupling(plus, minus))

    def boundary(self, x: float) -> np.ndarray | None:
        plus, minus = self.b_plus.boundary(x), self.b_minus.boundary(x)
        if plus is None or minus is None:
            return None
        return self._compose(self._coupling(plus, minus), x)

    def cuts(self) -> list[tuple[float, float]] | None:
        plus, minus = self.b_plus.cuts(), self.b_minus.cuts()
        if plus is None or minus is None:
            return None
        return merge_intervals(plus + minus)

    def support_bounds(self) -> tuple[float, float]:
        (lo1, hi1), (lo2, hi2) = self.b_plus.support_bounds(), self.b_minus.support_bounds()
        spread = float(np.linalg.norm(self.a_minus1, 2) + np.linalg.norm(self.c0, 2))
        return min(lo1, lo2) - spread, max(hi1, hi2) + spread

    def support_lower_bound(self) -> float:
        return self._lowest_pole(min(self.b_plus.support_lower_bound(), self.b_minus.support_lower_bound()))

    def block(self, alpha: int, beta: int) -> "BlockView":
        return BlockView(self, alpha, beta)


class BlockView(StieltjesEvaluator):
    def __init__(self, parent: FoldedTransform, alpha: int, beta: int):
        if alpha not in (1, 2) or beta not in (1, 2):
            raise DimensionError("block indices are 1 or 2")
        self.parent = parent
        self.key = (alpha, beta)
        self.dim = parent.half

    def __call__(self, z: complex) -> np.ndarray:
        return self.parent.blocks(z)[self.key]

    def boundary(self, x: float) -> np.ndarray | None:
        full = self.parent.boundary(x)
        return None if full is None else self.parent._split(full)[self.key]

    def cuts(self):
        return self.parent.cuts()

    def support_bounds(self):
        return self.parent.support_bounds()

    def support_lower_bound(self) -> float:
        return self.parent.support_lower_bound()


def fold_identities(b_plus, b_minus, a_minus1, c0, pi_plus0=None, pi_minus1=None) -> dict[tuple[int, int], BlockView]:
    """The four W-block transforms W_11, W_22, W_12, W_21 keyed by (α, β)."""
    folded = FoldedTransform(b_plus, b_minus, a_minus1, c0, pi_plus0, pi_minus1)
    return {key: folded.block(*key) for key in ((1, 1), (2, 2), (1, 2), (2, 1))}


def merge_intervals(intervals: list[tuple[float, float]]) -> list[tuple[float, float]]:
    """Union as sorted disjoint pieces, keeping interior breakpoints as piece edges."""
    points = sorted({p for interval in intervals for p in interval})
    out = []
    for lo, hi in zip(points[:-1], points[1:]):
        mid = 0.5 * (lo + hi)
        if any(a < mid < b for a, b in intervals):
            out.append((lo, hi))
    return out


# --- Period-two scalar tail ---


def period_two_fixed_point(z: complex, g: float, m0: float, m1: float) -> complex:
    """f = 1/(z - g - m0²/(z - g - m1² f)), the branch with f ~ 1/z.

    Equivalently m1² u f² + (m0² - m1² - u²) f + u = 0 with u = z - g.
    """
    z = complex(z)
    u = z - g
    a, b, c = m1 * m1 * u, m0 * m0 - m1 * m1 - u * u, u
    if abs(a) == 0:
        return -c / b
    disc = np.sqrt(b * b - 4 * a * c)
    roots = ((-b + disc) / (2 * a), (-b - disc) / (2 * a))
    if abs(z.imag) > SUPPORT_DISTANCE:
        sign = np.sign(z.imag)
        return min(roots, key=lambda f: (np.sign(f.imag) != -sign, abs(f)))
    # on the real axis, continue from just above it
    eta = 1e-9 * max(1.0, abs(z))
    reference = period_two_fixed_point(z + 1j * eta, g, m0, m1)
    return min(roots, key=lambda f: abs(f - reference))


def period_two_residual(f: complex, z: complex, g: float, m0: float, m1: float) -> float:
    u = complex(z) - g
    return abs(m1 * m1 * u * f * f + (m0 * m0 - m1 * m1 - u * u) * f + u)


# --- Perron-Stieltjes inversion ---


def _richardson(samples: list[np.ndarray], ratio: float) -> tuple[np.ndarray, float]:
    """Extrapolate values at ε, ε/ratio, ... to ε = 0 assuming an error series in ε."""
    table = [samples]
    for level in range(1, len(samples)):
        previous = table[-1]
        factor = ratio**level - 1.0
        table.append([previous[k + 1] + (previous[k + 1] - previous[k]) / factor for k in range(len(previous) - 1)])
    best = table[-1][0]
    spread = float(np.max(np.abs(best - table[-2][-1]))) if len(table) > 1 else np.inf
    return best, spread


def density_at(ev: StieltjesEvaluator, x: float, eps_sequence: Sequence[float] = DENSITY_EPS) -> tuple[np.ndarray, float]:
    """-(1/π) AH(B(x + i0)), exact when the evaluator has boundary values."""
    exact = ev.boundary(x)
    if exact is not None:
        return -matcore.antihermitian_part(exact) / np.pi, 0.0
    samples = [-matcore.antihermitian_part(ev(x + 1j * eps)) / np.pi for eps in eps_sequence]
    ratio = eps_sequence[0] / eps_sequence[1] if len(eps_sequence) > 1 else 2.0
    return _richardson(samples, ratio)


def atom_weight(ev: StieltjesEvaluator, x0: float, eps_sequence: Sequence[float] = ATOM_EPS) -> tuple[np.ndarray, float]:
    """lim ε→0 of Herm(iε B(x0 + iε)), extrapolated in ε.

    The extrapolation removes the O(ε) term left by a density around an
    atom embedded in a cut.
    """
    samples = [matcore.hermitian_part(1j * eps * ev(x0 + 1j * eps)) for eps in eps_sequence]
    if len(samples) < 2:
        return samples[-1], 0.0
    return _richardson(samples, eps_sequence[0] / eps_sequence[1])


def _detect_cuts(ev: StieltjesEvaluator, lo: float, hi: float, count: int) -> list[tuple[float, float]]:
    grid = np.linspace(lo, hi, count)
    eps = DENSITY_EPS[0]
    active = [float(np.max(np.abs(matcore.antihermitian_part(ev(x + 1j * eps))))) > 10 * eps for x in grid]
    cuts, start = [], None
    for x, on in zip(grid, active):
        if on and start is None:
            start = x
        elif not on and start is not None:
            cuts.append((start, x))
            start = None
    if start is not None:
        cuts.append((start, grid[-1]))
    return cuts


def _inside(x: float, cuts: list[tuple[float, float]], margin: float = 1e-9) -> bool:
    return any(lo - margin <= x <= hi + margin for lo, hi in cuts)


def find_poles(ev: StieltjesEvaluator, lo: float, hi: float, count: int, cuts: list[tuple[float, float]]) -> list[float]:
    """Real poles of B outside the cuts, from sign changes of the eigenvalues of B^{-1}."""
    def spectrum(x: float) -> np.ndarray:
        return sla.eigvalsh(matcore.hermitian_part(ev.inverse(x)))

    grid = [x for x in np.linspace(lo, hi, count) if not _inside(x, cuts)]
    poles = []
    previous_x, previous = None, None
    for x in grid:
        current = spectrum(x)
        if previous is not None and not any(previous_x < a < x or previous_x < b < x for a, b in cuts):
            before, after = int(np.sum(previous < 0)), int(np.sum(current < 0))
            for k in range(after, before):
                root = brentq(lambda y, k=k: spectrum(y)[k], previous_x, x)
                if not any(abs(root - p) < 1e-7 * max(1.0, abs(root)) for p in poles):
                    poles.append(root)
        previous_x, previous = x, current
    return sorted(poles)


def embedded_poles(ev: StieltjesEvaluator, cuts: list[tuple[float, float]], count: int = 400) -> list[float]:
    """Poles of B lying inside the cuts, where B(x + i0)^{-1} turns singular.

    Only evaluators with exact boundary values are searched. Such poles occur
    when decoupled channels overlap, e.g. an atom of one channel sitting in
    the band of another.
    """
    if not cuts or ev.boundary_inverse(0.5 * (cuts[0][0] + cuts[0][1])) is None:
        return []

    def smallest(x: float) -> float:
        return float(sla.svdvals(ev.boundary_inverse(x))[-1])

    poles = []
    for lo, hi in cuts:
        margin = 1e-6 * max(1.0, hi - lo)
        grid = np.linspace(lo + margin, hi - margin, max(8, int(count * (hi - lo) / max(1e-12, cuts[-1][1] - cuts[0][0]))))
        values = [smallest(x) for x in grid]
        for k in range(1, len(grid) - 1):
            if not values[k] < values[k - 1] or not values[k] <= values[k + 1]:
                continue
            found = minimize_scalar(smallest, bounds=(grid[k - 1], grid[k + 1]), method="bounded", options={"xatol": 1e-13})
            scale = max(1.0, float(np.linalg.norm(ev.boundary_inverse(found.x), 2)))
            if found.fun < EMBEDDED_POLE_TOL * scale:
                logger.debug("embedded pole at %.12g (smallest singular value %.2e)", found.x, found.fun)
                poles.append(float(found.x))
    return poles


def perron_stieltjes_invert(
    ev: StieltjesEvaluator,
    grid: tuple[float, float, int] | None = None,
    eps_sequence: Sequence[float] = DENSITY_EPS,
    extra_points: Sequence[float] = (),
) -> SpectralMeasure:
    """Recover the measure of an evaluator from its values near the real axis."""
    lo, hi = ev.support_bounds()
    if grid is None:
        span = max(1.0, hi - lo)
        grid = (lo - 0.05 * span - 0.5, hi + 0.05 * span + 0.5, 2000)
    g_lo, g_hi, count = grid
    cuts = ev.cuts()
    if cuts is None:
        cuts = _detect_cuts(ev, g_lo, g_hi, max(400, count // 5))
    diagnostics = []

    def density(x: float) -> np.ndarray:
        return matcore.hermitian_part(density_at(ev, x, eps_sequence)[0])

    pieces = [DensityPiece(a, b, density, (0.5, 0.5)) for a, b in cuts]

    atoms = []
    candidates = find_poles(ev, g_lo, g_hi, count, cuts) + embedded_poles(ev, cuts)
    candidates += [x for x in extra_points if not _inside(x, cuts)]
    for x0 in candidates:
        if any(abs(x0 - a.location) < 1e-7 for a in atoms):
            continue
        weight, spread = atom_weight(ev, x0)
        if np.linalg.norm(weight, 2) > ATOM_THRESHOLD:
            atoms.append(Atom(float(x0), weight))
            if spread > 1e-6:
                diagnostics.append(f"atom at {x0:.6g}: weight extrapolation spread {spread:.2e}")
    measure = SpectralMeasure(ev.dim, sorted(atoms, key=lambda a: a.location), pieces, diagnostics)
    logger.debug("inverted transform: %d atoms, %d pieces", len(atoms), len(pieces))
    return measure


# --- Recurrence ---


class Verdict(StrEnum):
    RECURRENT = "Recurrent"
    TRANSIENT = "Transient"
    INDETERMINATE = "Indeterminate"


@dataclass(frozen=True)
class RecurrenceVerdict:
    site: int
    state: np.ndarray
    verdict: Verdict
    evidence: list[tuple[float, float]] = field(default_factory=list)
    slope: float = float("nan")


def _judge(evidence: list[tuple[float, float]]) -> tuple[Verdict, float]:
    # last three decades of ε
    tail = evidence[-4:]
    if all(v > 0 for _, v in tail):
        slope = float(np.polyfit(np.log([e for e, _ in tail]), np.log([v for _, v in tail]), 1)[0])
    else:
        slope = float("nan")
    last, before = evidence[-1][1], evidence[-3][1]
    if slope < -0.1 or last > RECURRENCE_BLOWUP:
        return Verdict.RECURRENT, slope
    if abs(last - before) <= 1e-3 * abs(last):
        return Verdict.TRANSIENT, slope
    return Verdict.INDETERMINATE, slope


def _settled(verdict: Verdict, slope: float, last: float) -> bool:
    if verdict == Verdict.TRANSIENT:
        return True
    # 1/ε growth or a blow-up; slower growth may still level off further down
    return verdict == Verdict.RECURRENT and (slope <= -0.9 or last > RECURRENCE_BLOWUP)


def classify_recurrence(
    ev: StieltjesEvaluator,
    pi0,
    rho,
    site: int = 0,
    eps_sequence: Sequence[float] = RECURRENCE_EPS,
    floor: float = RECURRENCE_FLOOR,
) -> RecurrenceVerdict:
    """Growth of s(ε) = -Tr[unvec(Π_0 B(-ε) vec ρ)] as ε ↓ 0.

    Growth slower than 1/ε is followed decade by decade down to `floor`:
    a site just on the transient side of a critical drift grows like
    ε^{-1/2} until ε is of the order of the squared drift and levels off
    below it.
    """
    rho = matcore.as_matrix(getattr(rho, "matrix", rho))
    lower = ev.support_lower_bound()
    if lower < -1e-8:
        raise SupportError(f"support extends below 0 (to {lower:.3e})")
    pi0 = matcore.as_matrix(pi0)
    d = rho.shape[0]

    def sample(eps: float) -> tuple[float, float]:
        return float(eps), float(-np.trace(matcore.unvec(pi0 @ ev(-eps) @ matcore.vec(rho), d)).real)

    evidence = [sample(eps) for eps in eps_sequence]
    verdict, slope = _judge(evidence)
    while not _settled(verdict, slope, evidence[-1][1]) and evidence[-1][0] / 10 >= floor * (1 - 1e-9):
        evidence.append(sample(evidence[-1][0] / 10))
        verdict, slope = _judge(evidence)
    if len(evidence) > len(eps_sequence):
        logger.debug("recurrence at site %d refined down to ε = %.0e", site, evidence[-1][0])
    if verdict == Verdict.INDETERMINATE:
        logger.warning("recurrence at site %d is indeterminate (slope %.3f)", site, slope)
    return RecurrenceVerdict(site, rho, verdict, evidence, slope)


def laplace_transition(pi_j, polys, measure: SpectralMeasure, j: int, i: int, s: float) -> np.ndarray:
    """Λ̂_ji(s) = Π_j ∫ Q_j*(x) dΣ(x) Q_i(x) / (s + x)."""
    if -s >= measure.lower_bound() - SUPPORT_DISTANCE:
        raise SupportError(f"kernel pole at x = {-s} is not below the support")
    value = integrate(measure, lambda x, w: polys(j, x).conj().T @ w @ polys(i, x) / (s + x))
    return matcore.as_matrix(pi_j) @ value
