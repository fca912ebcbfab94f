"""Matrix-valued measures: atoms plus absolutely continuous pieces."""

import functools
import logging
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import quad_vec

from . import config
from .errors import ConvergenceError, DimensionError

logger = logging.getLogger(__name__)

QUADRATURE_RTOL = 1e-8
QUADRATURE_ATOL = 1e-14
INITIAL_NODES = 16


@dataclass(frozen=True)
class Atom:
    location: float
    weight: np.ndarray
    multiplicity: int = 1


@functools.cache
def _legendre(count: int) -> tuple[np.ndarray, np.ndarray]:
    return leggauss(count)


@dataclass(frozen=True)
class DensityPiece:
    """Density on [lo, hi].

    Pieces flagged singular (any nonzero endpoint exponent, e.g. square-root
    vanishing or inverse square-root blow-up) are integrated in the variable
    θ with x = mid - rad·cos θ, which removes both behaviours.
    """

    lo: float
    hi: float
    density: Callable[[float], np.ndarray]
    exponents: tuple[float, float] = (0.5, 0.5)
    _samples: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.hi > self.lo:
            raise DimensionError(f"density piece needs lo < hi, got [{self.lo}, {self.hi}]")

    @property
    def singular(self) -> bool:
        return any(e != 0 for e in self.exponents)

    def nodes(self, count: int) -> tuple[np.ndarray, np.ndarray]:
        """Quadrature nodes and weights (Jacobian included)."""
        t, g = _legendre(count)
        mid, rad = 0.5 * (self.lo + self.hi), 0.5 * (self.hi - self.lo)
        if not self.singular:
            return mid + rad * t, rad * g
        theta = 0.5 * np.pi * (t + 1.0)
        return mid - rad * np.cos(theta), 0.5 * np.pi * g * rad * np.sin(theta)

    def sample(self, count: int) -> tuple[np.ndarray, np.ndarray, list[np.ndarray]]:
        if count not in self._samples:
            x, w = self.nodes(count)
            self._samples[count] = (x, w, [np.asarray(self.density(float(xk)), dtype=np.complex128) for xk in x])
        return self._samples[count]


@dataclass
class SpectralMeasure:
    dim: int
    atoms: list[Atom] = field(default_factory=list)
    pieces: list[DensityPiece] = field(default_factory=list)
    diagnostics: list[str] = field(default_factory=list)

    def lower_bound(self) -> float:
        points = [a.location for a in self.atoms] + [p.lo for p in self.pieces]
        return min(points) if points else 0.0

    def upper_bound(self) -> float:
        points = [a.location for a in self.atoms] + [p.hi for p in self.pieces]
        return max(points) if points else 0.0

    def intervals(self) -> list[tuple[float, float]]:
        return [(p.lo, p.hi) for p in self.pieces]

    def mass(self) -> np.ndarray:
        return integrate(self, lambda x, w: w)

    def block(self, rows: slice, cols: slice) -> "SpectralMeasure":
        """Sub-block measure, e.g. W_12 of a folded 2x2 block measure."""
        atoms = [Atom(a.location, a.weight[rows, cols], a.multiplicity) for a in self.atoms]
        pieces = [
            DensityPiece(p.lo, p.hi, (lambda x, f=p.density: f(x)[rows, cols]), p.exponents)
            for p in self.pieces
        ]
        size = len(range(*rows.indices(self.dim)))
        return SpectralMeasure(size, atoms, pieces)


def _piece_sum(piece: DensityPiece, count: int, integrand) -> np.ndarray:
    x, w, densities = piece.sample(count)
    return sum(wk * integrand(float(xk), dk) for xk, wk, dk in zip(x, w, densities))


def _integrate_piece(piece: DensityPiece, integrand, rtol: float, atol: float, max_nodes: int) -> np.ndarray:
    count = INITIAL_NODES
    previous = _piece_sum(piece, count, integrand)
    error = np.inf
    while count < max_nodes:
        count *= 2
        current = _piece_sum(piece, count, integrand)
        error = float(np.max(np.abs(current - previous)))
        if error <= max(rtol * float(np.max(np.abs(current))), atol):
            logger.debug("piece [%g, %g] converged with %d nodes", piece.lo, piece.hi, count)
            return current
        previous = current

    # adaptive fallback in the substituted variable
    mid, rad = 0.5 * (piece.lo + piece.hi), 0.5 * (piece.hi - piece.lo)
    if piece.singular:
        def f(theta):
            x = mid - rad * np.cos(theta)
            return rad * np.sin(theta) * integrand(x, np.asarray(piece.density(x), dtype=np.complex128))
        value, achieved = quad_vec(f, 0.0, np.pi, epsabs=atol, epsrel=rtol)
    else:
        value, achieved = quad_vec(
            lambda x: integrand(x, np.asarray(piece.density(x), dtype=np.complex128)), piece.lo, piece.hi, epsabs=atol, epsrel=rtol
        )
    if achieved > max(rtol * float(np.max(np.abs(value))), atol) * 10:
        raise ConvergenceError(f"quadrature on [{piece.lo:g}, {piece.hi:g}] did not converge", achieved=min(error, achieved))
    return value


def integrate(
    measure: SpectralMeasure,
    integrand: Callable[[float, np.ndarray], np.ndarray],
    rtol: float = QUADRATURE_RTOL,
    atol: float = QUADRATURE_ATOL,
    max_nodes: int | None = None,
) -> np.ndarray:
    """∫ integrand(x, dΣ(x)): atoms summed, pieces by node doubling.

    The integrand receives a location and the weight (atom) or density value
    there, and returns a matrix, e.g. lambda x, w: exp(-x t) * Qj(x).conj().T @ w @ Qi(x).
    """
    max_nodes = max_nodes or config.QUADRATURE_MAX_NODES
    total = 0
    for atom in measure.atoms:
        total = total + integrand(atom.location, atom.weight)
    for piece in measure.pieces:
        total = total + _integrate_piece(piece, integrand, rtol, atol, max_nodes)
    if np.isscalar(total):
        return np.zeros((measure.dim, measure.dim), dtype=np.complex128)
    return total
