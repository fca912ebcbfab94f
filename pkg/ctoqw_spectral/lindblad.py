"""CTOQW models and their block-tridiagonal vec-representation generators.

A site n carries transition operators up(n) (to n+1), down(n) (to n-1),
stay(n) and a Hamiltonian H_n. In vec representation the generator has

    lower(n) = ⌈up(n)⌉            (block L[n+1, n])
    upper(n) = ⌈down(n+1)⌉        (block L[n, n+1])
    diag(n)  = G_n^α + ⌈stay(n)⌉

with G_n = -iH_n - ½ Σ R*R over the operators leaving n, and
G^α = G ⊗ I + I ⊗ conj(G).
"""

import logging
from collections.abc import Mapping
from dataclasses import dataclass, field, replace
try:
    from enum import StrEnum
except ImportError:  # Python < 3.11
    from enum import Enum

    class StrEnum(str, Enum):
        __str__ = str.__str__
        __format__ = str.__format__

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from . import matcore
from .errors import DimensionError

logger = logging.getLogger(__name__)

HAMILTONIAN_TOL = 1e-12
NEGATIVITY_TOL = 1e-10


class VertexKind(StrEnum):
    FINITE = "finite"
    HALFLINE = "halfline"
    LINE = "line"


class Boundary(StrEnum):
    REFLECTING = "reflecting"
    ABSORBING = "absorbing"


@dataclass(frozen=True)
class OperatorTable:
    """A site operator: one default matrix plus per-site overrides."""

    default: np.ndarray
    overrides: Mapping[int, np.ndarray] = field(default_factory=dict)

    def at(self, n: int) -> np.ndarray:
        return self.overrides.get(n, self.default)

    @classmethod
    def zeros(cls, dim: int) -> "OperatorTable":
        return cls(np.zeros((dim, dim), dtype=np.complex128))

    @classmethod
    def of(cls, default, overrides: Mapping[int, object] | None = None) -> "OperatorTable":
        return cls(
            matcore.as_matrix(default),
            {int(k): matcore.as_matrix(v) for k, v in (overrides or {}).items()},
        )


@dataclass(frozen=True)
class CTOQWModel:
    dim: int
    kind: VertexKind
    up: OperatorTable
    down: OperatorTable
    stay: OperatorTable
    hamiltonian: OperatorTable
    sites: int | None = None
    boundary: Boundary = Boundary.REFLECTING
    name: str = ""

    def __post_init__(self):
        if self.dim < 1:
            raise DimensionError(f"internal dimension must be positive, got {self.dim}")
        if self.kind == VertexKind.FINITE and (self.sites is None or self.sites < 1):
            raise DimensionError("finite models need at least one site")
        for label, table in self._tables():
            for key, m in [("default", table.default), *table.overrides.items()]:
                if m.shape != (self.dim, self.dim):
                    raise DimensionError(f"{label}[{key}] has shape {m.shape}, expected {(self.dim, self.dim)}")
        for key, h in [("default", self.hamiltonian.default), *self.hamiltonian.overrides.items()]:
            if not matcore.is_hermitian(h, HAMILTONIAN_TOL, relative=True):
                raise DimensionError(f"hamiltonian[{key}] is not Hermitian")

    def _tables(self):
        return [("up", self.up), ("down", self.down), ("stay", self.stay), ("hamiltonian", self.hamiltonian)]

    @classmethod
    def build(
        cls,
        kind: VertexKind | str,
        up,
        down,
        stay=None,
        hamiltonian=None,
        *,
        sites: int | None = None,
        boundary: Boundary | str = Boundary.REFLECTING,
        overrides: Mapping[str, Mapping[int, object]] | None = None,
        name: str = "",
    ) -> "CTOQWModel":
        """Homogeneous model with optional per-site overrides keyed by table name."""
        up = matcore.as_matrix(up)
        dim = up.shape[0]
        zero = np.zeros((dim, dim))
        overrides = overrides or {}
        return cls(
            dim=dim,
            kind=VertexKind(kind),
            up=OperatorTable.of(up, overrides.get("up")),
            down=OperatorTable.of(down, overrides.get("down")),
            stay=OperatorTable.of(zero if stay is None else stay, overrides.get("stay")),
            hamiltonian=OperatorTable.of(zero if hamiltonian is None else hamiltonian, overrides.get("hamiltonian")),
            sites=sites,
            boundary=Boundary(boundary),
            name=name,
        )

    # --- Vertex set ---

    def contains(self, n: int) -> bool:
        if self.kind == VertexKind.LINE:
            return True
        if n < 0:
            return False
        return self.kind == VertexKind.HALFLINE or n < self.sites

    def default_window(self) -> range:
        if self.kind != VertexKind.FINITE:
            raise DimensionError(f"{self.kind} model needs an explicit window")
        return range(self.sites)

    def override_sites(self) -> set[int]:
        return {n for _, table in self._tables() for n in table.overrides}


def site_operators(model: CTOQWModel, n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    return model.up.at(n), model.down.at(n), model.stay.at(n), model.hamiltonian.at(n)


def dissipation(model: CTOQWModel, n: int) -> np.ndarray:
    """½ Σ R*R over the operators leaving site n."""
    up, down, stay, _ = site_operators(model, n)
    absorbing = model.boundary == Boundary.ABSORBING
    total = stay.conj().T @ stay
    if model.contains(n + 1) or absorbing:
        total = total + up.conj().T @ up
    if model.contains(n - 1) or absorbing:
        total = total + down.conj().T @ down
    return 0.5 * total


def effective_hamiltonian(model: CTOQWModel, n: int) -> np.ndarray:
    """G_n = -iH_n - ½ Σ R*R."""
    return -1j * model.hamiltonian.at(n) - dissipation(model, n)


def g_alpha(g: np.ndarray) -> np.ndarray:
    """Superoperator of X -> GX + XG*, i.e. G ⊗ I + I ⊗ conj(G)."""
    return matcore.left_mult(g) + matcore.right_mult(g.conj().T)


def site_blocks(model: CTOQWModel, n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(A_n, B_n, C_n): outgoing up block, diagonal block, outgoing down block."""
    if not model.contains(n):
        raise DimensionError(f"site {n} is outside the vertex set of {model.name or 'the model'}")
    up, down, stay, _ = site_operators(model, n)
    size = model.dim**2
    a = matcore.sandwich(up) if model.contains(n + 1) else np.zeros((size, size), dtype=np.complex128)
    c = matcore.sandwich(down) if model.contains(n - 1) else np.zeros((size, size), dtype=np.complex128)
    b = g_alpha(effective_hamiltonian(model, n)) + matcore.sandwich(stay)
    return a, b, c


@dataclass(frozen=True)
class BlockTridiagonal:
    """Finite block-tridiagonal matrix indexed by site labels first..first+len-1."""

    first: int
    diagonal: tuple[np.ndarray, ...]
    lower_blocks: tuple[np.ndarray, ...]
    upper_blocks: tuple[np.ndarray, ...]

    def __post_init__(self):
        n = len(self.diagonal)
        if n == 0:
            raise DimensionError("empty block-tridiagonal matrix")
        if len(self.lower_blocks) != n - 1 or len(self.upper_blocks) != n - 1:
            raise DimensionError("off-diagonal block count must be one less than the number of sites")

    @property
    def block_dim(self) -> int:
        return self.diagonal[0].shape[0]

    @property
    def sites(self) -> range:
        return range(self.first, self.first + len(self.diagonal))

    def __len__(self) -> int:
        return len(self.diagonal)

    def diag(self, n: int) -> np.ndarray:
        return self.diagonal[n - self.first]

    def lower(self, n: int) -> np.ndarray:
        """Block L[n+1, n]."""
        return self.lower_blocks[n - self.first]

    def upper(self, n: int) -> np.ndarray:
        """Block L[n, n+1]."""
        return self.upper_blocks[n - self.first]

    def slot(self, n: int) -> slice:
        k = (n - self.first) * self.block_dim
        return slice(k, k + self.block_dim)

    def dense(self) -> np.ndarray:
        m = self.block_dim
        size = m * len(self)
        out = np.zeros((size, size), dtype=np.complex128)
        for k, block in enumerate(self.diagonal):
            out[k * m:(k + 1) * m, k * m:(k + 1) * m] = block
        for k, (lo, up) in enumerate(zip(self.lower_blocks, self.upper_blocks)):
            out[(k + 1) * m:(k + 2) * m, k * m:(k + 1) * m] = lo
            out[k * m:(k + 1) * m, (k + 1) * m:(k + 2) * m] = up
        return out

    def sparse(self) -> sp.csr_array:
        m = self.block_dim
        r, c = (idx.ravel() for idx in np.indices((m, m)))
        placed = [(k, k, b) for k, b in enumerate(self.diagonal)]
        placed += [(k + 1, k, b) for k, b in enumerate(self.lower_blocks)]
        placed += [(k, k + 1, b) for k, b in enumerate(self.upper_blocks)]
        rows = np.concatenate([r + i * m for i, _, _ in placed])
        cols = np.concatenate([c + j * m for _, j, _ in placed])
        data = np.concatenate([np.asarray(b, dtype=np.complex128).ravel() for _, _, b in placed])
        size = m * len(self)
        return sp.coo_array((data, (rows, cols)), shape=(size, size)).tocsr()

    def block(self, dense: np.ndarray, j: int, i: int) -> np.ndarray:
        """Block (j, i) of a dense matrix laid out like this one."""
        return dense[self.slot(j), self.slot(i)]


def assemble(model: CTOQWModel, window: range | None = None) -> BlockTridiagonal:
    """Generator restricted to a window; couplings leaving the window are dropped."""
    window = model.default_window() if window is None else window
    if len(window) == 0:
        raise DimensionError("empty window")
    if window.step != 1:
        raise DimensionError("window must be a contiguous range")
    for n in (window[0], window[-1]):
        if not model.contains(n):
            raise DimensionError(f"window {window[0]}..{window[-1]} leaves the vertex set")
    blocks = [site_blocks(model, n) for n in window]
    diagonal = tuple(b for _, b, _ in blocks)
    lower = tuple(blocks[k][0] for k in range(len(window) - 1))
    upper = tuple(blocks[k + 1][2] for k in range(len(window) - 1))
    return BlockTridiagonal(window[0], diagonal, lower, upper)


# --- Line models cut into two half-lines ---


def restrict_right(model: CTOQWModel) -> CTOQWModel:
    """Half-line walk on sites >= 0 of a line model, root absorbing."""
    if model.kind != VertexKind.LINE:
        raise DimensionError("restriction needs a line model")

    def keep(table: OperatorTable) -> OperatorTable:
        return OperatorTable(table.default, {n: m for n, m in table.overrides.items() if n >= 0})

    return replace(
        model,
        kind=VertexKind.HALFLINE,
        boundary=Boundary.ABSORBING,
        up=keep(model.up),
        down=keep(model.down),
        stay=keep(model.stay),
        hamiltonian=keep(model.hamiltonian),
        name=f"{model.name}[+]",
    )


def reflect_left(model: CTOQWModel) -> CTOQWModel:
    """Half-line walk on sites <= -1 of a line model, relabelled k = -1-n."""
    if model.kind != VertexKind.LINE:
        raise DimensionError("reflection needs a line model")

    def mirror(table: OperatorTable) -> OperatorTable:
        return OperatorTable(table.default, {-1 - n: m for n, m in table.overrides.items() if n < 0})

    return replace(
        model,
        kind=VertexKind.HALFLINE,
        boundary=Boundary.ABSORBING,
        up=mirror(model.down),
        down=mirror(model.up),
        stay=mirror(model.stay),
        hamiltonian=mirror(model.hamiltonian),
        name=f"{model.name}[-]",
    )


def fold_generator(model: CTOQWModel, half_width: int) -> BlockTridiagonal:
    """Generator of the line window [-W, W-1] regrouped on folded sites (n, -n-1)."""
    if model.kind != VertexKind.LINE:
        raise DimensionError("folding needs a line model")
    if half_width < 1:
        raise DimensionError("folding window needs at least one folded site")
    size = model.dim**2
    zero = np.zeros((size, size), dtype=np.complex128)
    blocks = {n: site_blocks(model, n) for n in range(-half_width, half_width)}

    def pair(top_left, bottom_right, top_right=zero, bottom_left=zero):
        return np.block([[top_left, top_right], [bottom_left, bottom_right]])

    diagonal = [pair(blocks[0][1], blocks[-1][1], top_right=blocks[-1][0], bottom_left=blocks[0][2])]
    diagonal += [pair(blocks[n][1], blocks[-n - 1][1]) for n in range(1, half_width)]
    # lower M_n = diag(A_n, C_{-n-1}); upper N_{n+1} = diag(C_{n+1}, A_{-n-2})
    lower = [pair(blocks[n][0], blocks[-n - 1][2]) for n in range(half_width - 1)]
    upper = [pair(blocks[n + 1][2], blocks[-n - 2][0]) for n in range(half_width - 1)]
    return BlockTridiagonal(0, tuple(diagonal), tuple(lower), tuple(upper))


# --- Diagnostics ---


@dataclass(frozen=True)
class NegativityReport:
    site: int
    negative: bool
    max_eigenvalue: float
    hermiticity_defect: float
    certificate_holds: bool | None = None
    certificate_residual: float | None = None
    stay_hermitian: bool | None = None
    hamiltonian_scalar: bool | None = None


def check_negative_semidefinite_diagonal(model: CTOQWModel, n: int, certificate: bool = False) -> NegativityReport:
    """Is G_n^α + ⌈B_n⌉ ≤ 0, optionally with the Hamiltonian-consistency certificate.

    The certificate works in the eigenbasis of the Hermitian part of the block
    and checks h_kk = -b_kk and h_jk = -i(s_jk - a_jk - i b_jk), where h is the
    commutator part, s the dissipation part and a + ib the stay sandwich.
    """
    _, block, _ = site_blocks(model, n)
    defect = matcore.hermiticity_defect(block)
    scale = max(1.0, float(np.max(np.abs(block))))
    top = matcore.max_eigenvalue(block)
    negative = defect <= NEGATIVITY_TOL * scale and top <= NEGATIVITY_TOL * scale
    if not certificate:
        return NegativityReport(n, negative, top, defect)

    _, _, stay, hamiltonian = site_operators(model, n)
    eye = np.eye(model.dim)
    _, basis = sla.eigh(matcore.hermitian_part(block))
    rotate = lambda m: basis.conj().T @ m @ basis  # noqa: E731
    h = rotate(-np.kron(hamiltonian, eye) + np.kron(eye, hamiltonian.conj()))
    s_op = dissipation(model, n)
    s = rotate(np.kron(s_op, eye) + np.kron(eye, s_op.conj()))
    sandwich_stay = rotate(matcore.sandwich(stay))
    a, b = sandwich_stay.real, sandwich_stay.imag
    diagonal_residual = np.abs(np.diag(h) + np.diag(b))
    off = np.abs(h + 1j * (s - a - 1j * b))
    np.fill_diagonal(off, 0.0)
    residual = float(max(diagonal_residual.max(initial=0.0), off.max(initial=0.0)))
    h_centered = hamiltonian - np.trace(hamiltonian) / model.dim * eye
    return NegativityReport(
        site=n,
        negative=negative,
        max_eigenvalue=top,
        hermiticity_defect=defect,
        certificate_holds=residual <= NEGATIVITY_TOL * scale,
        certificate_residual=residual,
        stay_hermitian=matcore.is_hermitian(stay, NEGATIVITY_TOL, relative=True),
        hamiltonian_scalar=bool(np.max(np.abs(h_centered), initial=0.0) <= NEGATIVITY_TOL * max(1.0, float(np.max(np.abs(hamiltonian))))),
    )


def trace_functional(dim: int) -> np.ndarray:
    """Row vector τ with τ·vec(X) = Tr X."""
    return np.eye(dim, dtype=np.complex128).reshape(-1)


def localized_state(bt: BlockTridiagonal, site: int, rho) -> np.ndarray:
    """e_site ⊗ vec(rho) in the layout of a window."""
    state = np.zeros(bt.block_dim * len(bt), dtype=np.complex128)
    state[bt.slot(site)] = matcore.vec(rho)
    return state


@dataclass(frozen=True)
class TraceReport:
    total_trace: float
    site_traces: dict[int, float]
    min_eigenvalue: float
    positive: bool


def validate_trace_dynamics(model: CTOQWModel, window: range | None, rho, site: int, t: float) -> TraceReport:
    """Evolve e_site ⊗ vec(rho) and report total trace and per-site positivity."""
    bt = assemble(model, window)
    if site not in bt.sites:
        raise DimensionError(f"site {site} is outside the window")
    evolved = matcore.expm_action(bt.dense(), localized_state(bt, site, rho), t)
    traces = {}
    floor = np.inf
    for n in bt.sites:
        block = matcore.unvec(evolved[bt.slot(n)], model.dim)
        traces[n] = float(np.trace(block).real)
        floor = min(floor, matcore.min_eigenvalue(block))
    total = float(sum(traces.values()))
    logger.debug("trace at t=%g over %d sites: %.12f", t, len(bt), total)
    return TraceReport(total, traces, float(floor), floor >= -1e-9)
