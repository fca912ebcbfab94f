"""Matrix-valued polynomials of a block-tridiagonal generator and their symmetrizers.

The polynomials solve the row recurrence

    -x Q_n = Q_{n+1} A_n + Q_n B_n + Q_{n-1} C_n,

i.e. the row (Q_0, Q_1, ...) is a left eigenvector of -L. The norms
F_n = R_n* R_n make J = R(-L)R^{-1} Hermitian when the Dette conditions hold;
the Karlin-McGregor potentials are Π_n = F_n^{-1}.
"""

import functools
import logging
from collections.abc import Callable
from dataclasses import dataclass
try:
    from enum import StrEnum
except ImportError:  # Python < 3.11
    from enum import Enum

    class StrEnum(str, Enum):
        __str__ = str.__str__
        __format__ = str.__format__

import numpy as np
import scipy.linalg as sla

from . import matcore
from .errors import CertificationError, DimensionError, SingularBlockError
from .lindblad import BlockTridiagonal, CTOQWModel, site_blocks

logger = logging.getLogger(__name__)

MAX_DEGREE = 200
CONDITION_LIMIT = 1e12
DETTE_TOL = 1e-9
PD_FLOOR = 1e-12


class Family(StrEnum):
    HALF_LINE = "halfline"
    LINE_FIRST = "line1"
    LINE_SECOND = "line2"
    FOLDED = "folded"


@dataclass(frozen=True)
class RecurrenceBlocks:
    """Recurrence coefficients A_n (up), B_n (diag), C_n (down) as site functions."""

    dim: int
    up: Callable[[int], np.ndarray]
    diag: Callable[[int], np.ndarray]
    down: Callable[[int], np.ndarray]

    @classmethod
    def from_model(cls, model: CTOQWModel) -> "RecurrenceBlocks":
        blocks = functools.cache(lambda n: site_blocks(model, n))
        return cls(model.dim**2, lambda n: blocks(n)[0], lambda n: blocks(n)[1], lambda n: blocks(n)[2])

    @classmethod
    def constant(cls, up, diag, down, first_diag=None) -> "RecurrenceBlocks":
        up, diag, down = (matcore.as_matrix(m) for m in (up, diag, down))
        first = diag if first_diag is None else matcore.as_matrix(first_diag)
        return cls(up.shape[0], lambda n: up, lambda n: first if n == 0 else diag, lambda n: down)


def _right_solve(y: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Y A^{-1}."""
    return sla.solve(a.T, y.T).T


class PolynomialEvaluator:
    """Cached evaluation of one polynomial family at real (or complex) x.

    Values are cached per x as the whole sequence computed so far. After
    freeze() the cache is read-only and uncached values are computed on the
    fly without being stored.
    """

    def __init__(self, blocks: RecurrenceBlocks, family: Family | str = Family.HALF_LINE, max_degree: int = MAX_DEGREE):
        self.blocks = blocks
        self.family = Family(family)
        self.max_degree = max_degree
        self._cache: dict[complex, dict[int, np.ndarray]] = {}
        self._conditions: dict[tuple[str, int], float] = {}
        self._frozen = False
        if self.family == Family.FOLDED:
            self._first = PolynomialEvaluator(blocks, Family.LINE_FIRST, max_degree)
            self._second = PolynomialEvaluator(blocks, Family.LINE_SECOND, max_degree)

    @classmethod
    def for_model(cls, model: CTOQWModel, family: Family | str = Family.HALF_LINE) -> "PolynomialEvaluator":
        return cls(RecurrenceBlocks.from_model(model), family)

    def freeze(self) -> None:
        self._frozen = True
        if self.family == Family.FOLDED:
            self._first.freeze()
            self._second.freeze()

    def _initial(self) -> dict[int, np.ndarray]:
        eye = np.eye(self.blocks.dim, dtype=np.complex128)
        zero = np.zeros_like(eye)
        if self.family == Family.LINE_SECOND:
            return {0: zero, -1: eye}
        return {0: eye, -1: zero}

    def _checked(self, label: str, n: int, block: np.ndarray) -> np.ndarray:
        key = (label, n)
        if key not in self._conditions:
            self._conditions[key] = matcore.condition_number(block)
        if not self._conditions[key] < CONDITION_LIMIT:
            raise SingularBlockError(label, n, self._conditions[key])
        return block

    def _extend(self, values: dict[int, np.ndarray], n: int, x: complex) -> None:
        b = self.blocks
        top = max(values)
        while top < n:
            a = self._checked("up", top, b.up(top))
            rhs = -x * values[top] - values[top] @ b.diag(top) - values[top - 1] @ b.down(top)
            values[top + 1] = _right_solve(rhs, a)
            top += 1
        bottom = min(values)
        while bottom > n:
            k = bottom
            c = self._checked("down", k, b.down(k))
            rhs = -x * values[k] - values[k + 1] @ b.up(k) - values[k] @ b.diag(k)
            values[k - 1] = _right_solve(rhs, c)
            bottom -= 1

    def __call__(self, n: int, x: complex) -> np.ndarray:
        if self.family == Family.FOLDED:
            return np.block([[self._first(n, x), self._first(-n - 1, x)], [self._second(n, x), self._second(-n - 1, x)]])
        if self.family == Family.HALF_LINE and n < -1:
            raise DimensionError(f"half-line polynomials have no index {n}")
        if abs(n) > self.max_degree:
            raise DimensionError(f"degree {n} exceeds the cap {self.max_degree}")
        x = complex(x) if np.iscomplexobj(x) else float(x)
        values = self._cache.get(x)
        if values is None:
            values = self._initial()
            if not self._frozen:
                self._cache[x] = values
        elif self._frozen:
            values = dict(values)
        if n not in values:
            self._extend(values, n, x)
        return values[n]

    def two_sided(self, n: int, x: complex) -> np.ndarray:
        """Stacked [Q¹_n; Q²_n] of a line walk, for any integer n."""
        if self.family != Family.FOLDED:
            raise DimensionError("two-sided polynomials need a folded evaluator")
        return np.vstack([self._first(n, x), self._second(n, x)])

    def folded_blocks(self, n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(D_n, M_n, N_n) of the folded recurrence -x𝒬_n = 𝒬_{n+1}M_n + 𝒬_nD_n + 𝒬_{n-1}N_n."""
        b = self.blocks
        zero = np.zeros((b.dim, b.dim), dtype=np.complex128)
        if n == 0:
            d = np.block([[b.diag(0), b.up(-1)], [b.down(0), b.diag(-1)]])
        else:
            d = np.block([[b.diag(n), zero], [zero, b.diag(-n - 1)]])
        m = np.block([[b.up(n), zero], [zero, b.down(-n - 1)]])
        big_n = np.block([[b.down(n), zero], [zero, b.up(-n - 1)]])
        return d, m, big_n

    def residual(self, n: int, x: complex) -> float:
        """Relative residual of the three-term relation at (n, x)."""
        if self.family == Family.FOLDED:
            d, m, big_n = self.folded_blocks(n)
            prev = self(n - 1, x) if n > 0 else np.zeros_like(d)
            nxt = self(n + 1, x)
            res = x * self(n, x) + nxt @ m + self(n, x) @ d + prev @ big_n
        else:
            b = self.blocks
            nxt = self(n + 1, x)
            res = x * self(n, x) + nxt @ b.up(n) + self(n, x) @ b.diag(n) + self(n - 1, x) @ b.down(n)
        return float(np.linalg.norm(res) / (1.0 + np.linalg.norm(nxt)))


def eval_poly(ev: PolynomialEvaluator, n: int, x: complex) -> np.ndarray:
    return ev(n, x)


def eval_folded(ev: PolynomialEvaluator, n: int, x: complex) -> np.ndarray:
    if ev.family != Family.FOLDED:
        raise DimensionError("eval_folded needs a folded evaluator")
    return ev(n, x)


# --- Symmetrizers ---


@dataclass(frozen=True)
class SymmetrizerChain:
    """Per-site norms F_n = R_n* R_n, PSD roots R_n and certificates E_n = R_n B_n R_n^{-1}."""

    norms: dict[int, np.ndarray]
    roots: dict[int, np.ndarray]
    certificates: dict[int, np.ndarray]

    @property
    def sites(self) -> list[int]:
        return sorted(self.norms)

    def norm(self, n: int) -> np.ndarray:
        return self.norms[n]

    def root(self, n: int) -> np.ndarray:
        return self.roots[n]

    def potential(self, n: int) -> np.ndarray:
        """Π_n = F_n^{-1}, the Karlin-McGregor normalization."""
        return np.linalg.inv(self.norms[n])


def _as_blocks(source: CTOQWModel | RecurrenceBlocks) -> RecurrenceBlocks:
    return RecurrenceBlocks.from_model(source) if isinstance(source, CTOQWModel) else source


def _certify_norm(f: np.ndarray, n: int) -> np.ndarray:
    scale = max(1.0, float(np.max(np.abs(f))))
    if not matcore.is_hermitian(f, DETTE_TOL, relative=True):
        raise CertificationError(f"norm matrix is not Hermitian (defect {matcore.hermiticity_defect(f):.3e})", site=n)
    f = matcore.hermitian_part(f)
    lowest = matcore.min_eigenvalue(f)
    if lowest < PD_FLOOR * scale:
        raise CertificationError(f"norm matrix is not positive definite (eigenvalue {lowest:.3e})", site=n)
    return f


def _invertible(block: np.ndarray, label: str, n: int) -> np.ndarray:
    cond = matcore.condition_number(block)
    if not cond < CONDITION_LIMIT:
        raise CertificationError(f"{label} block is singular (condition number {cond:.3e})", site=n)
    return block


def compute_symmetrizers(source: CTOQWModel | RecurrenceBlocks, window: range) -> SymmetrizerChain:
    """Norms from F_0 = I by F_{n+1} = A_n^{-*} F_n C_{n+1} (and backwards for n < 0).

    Raises CertificationError naming the first site where a norm is not
    Hermitian positive definite or R_n B_n R_n^{-1} is not Hermitian and
    negative semidefinite.
    """
    blocks = _as_blocks(source)
    if len(window) == 0:
        raise DimensionError("empty window")
    anchor = 0 if 0 in window else window[0]
    norms = {anchor: np.eye(blocks.dim, dtype=np.complex128)}
    for n in range(anchor, window[-1]):
        a = _invertible(blocks.up(n), "up", n)
        norms[n + 1] = _certify_norm(sla.solve(a.conj().T, norms[n] @ blocks.down(n + 1)), n + 1)
    for n in range(anchor, window[0], -1):
        c = _invertible(blocks.down(n), "down", n)
        norms[n - 1] = _certify_norm(_right_solve(blocks.up(n - 1).conj().T @ norms[n], c), n - 1)

    roots, certificates = {}, {}
    for n in sorted(norms):
        root = matcore.sqrt_psd(norms[n])
        e = root @ blocks.diag(n) @ np.linalg.inv(root)
        scale = max(1.0, float(np.max(np.abs(e))))
        if not matcore.is_hermitian(e, DETTE_TOL, relative=True):
            raise CertificationError(f"R B R^-1 is not Hermitian (defect {matcore.hermiticity_defect(e):.3e})", site=n)
        top = matcore.max_eigenvalue(e)
        if top > DETTE_TOL * scale:
            raise CertificationError(f"R B R^-1 is not negative semidefinite (eigenvalue {top:.3e})", site=n)
        roots[n] = root
        certificates[n] = matcore.hermitian_part(e)
    logger.debug("certified symmetrizers on sites %d..%d", window[0], window[-1])
    return SymmetrizerChain(norms, roots, certificates)


def norm_by_product(source: CTOQWModel | RecurrenceBlocks, n: int) -> np.ndarray:
    """F_n = (A_0* ... A_{n-1}*)^{-1} C_1 ... C_n for n >= 0."""
    blocks = _as_blocks(source)
    left = np.eye(blocks.dim, dtype=np.complex128)
    right = np.eye(blocks.dim, dtype=np.complex128)
    for k in range(n):
        left = left @ blocks.up(k).conj().T
        right = right @ blocks.down(k + 1)
    return np.linalg.solve(left, right)


@dataclass(frozen=True)
class DetteReport:
    certified: bool
    site: int | None = None
    reason: str = ""


def check_dette(source: CTOQWModel | RecurrenceBlocks, window: range) -> DetteReport:
    try:
        compute_symmetrizers(source, window)
    except CertificationError as e:
        return DetteReport(False, e.site, e.reason)
    return DetteReport(True)


def symmetrize(bt: BlockTridiagonal, chain: SymmetrizerChain) -> BlockTridiagonal:
    """J = R(-L)R^{-1}, Hermitian when the chain certifies the window."""
    inverse = {n: np.linalg.inv(chain.root(n)) for n in bt.sites}
    diagonal = tuple(-chain.root(n) @ bt.diag(n) @ inverse[n] for n in bt.sites)
    lower = tuple(-chain.root(n + 1) @ bt.lower(n) @ inverse[n] for n in bt.sites[:-1])
    upper = tuple(-chain.root(n) @ bt.upper(n) @ inverse[n + 1] for n in bt.sites[:-1])
    return BlockTridiagonal(bt.first, diagonal, lower, upper)
