"""Spectral weight matrices of CTOQW generators.

Finite chains give atomic measures by eigen-decomposing the symmetrized
Jacobi matrix J. Half-line chains with a constant Jacobi tail give the Durán
density perturbed at the root; other half-line chains are handled through the
root resolvent and Perron-Stieltjes inversion. Line chains are folded into
2×2-block measures.
"""

import logging
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
import scipy.linalg as sla

from . import matcore
from .errors import CertificationError, DimensionError
from .lindblad import BlockTridiagonal, CTOQWModel, VertexKind, assemble, reflect_left, restrict_right, site_blocks
from .measures import Atom, DensityPiece, SpectralMeasure, integrate
from .orthopoly import (
    Family,
    PolynomialEvaluator,
    RecurrenceBlocks,
    SymmetrizerChain,
    compute_symmetrizers,
    symmetrize,
)
from .stieltjes import (
    DuranTransform,
    FoldedTransform,
    MeasureTransform,
    PerturbedTransform,
    ScaledTransform,
    StieltjesEvaluator,
    TailResolventTransform,
    TruncatedResolvent,
    perron_stieltjes_invert,
)

logger = logging.getLogger(__name__)

CLUSTER_TOL = 1e-8
CLUSTER_GUARD = 10.0
CONSTANT_TAIL_TOL = 1e-10
DURAN_SCAN_SITES = 5
CHAIN_SITES = 16


# --- Finite chains ---


def finite_spectral_measure(j: BlockTridiagonal, cluster_tol: float = CLUSTER_TOL) -> SpectralMeasure:
    """Atomic measure of a finite Hermitian block Jacobi matrix at its first site.

    Eigenvalues closer than cluster_tol are merged into one atom whose weight
    is the root block of the spectral projector.
    """
    dense = j.dense()
    if not matcore.is_hermitian(dense, 1e-9, relative=True):
        raise DimensionError(f"Jacobi matrix is not Hermitian (defect {matcore.hermiticity_defect(dense):.3e})")
    values, vectors = matcore.eig_hermitian(dense)
    root = vectors[j.slot(j.first)]

    groups: list[list[int]] = []
    for k, value in enumerate(values):
        if groups and value - values[groups[-1][-1]] <= cluster_tol * max(1.0, abs(value)):
            groups[-1].append(k)
        else:
            groups.append([k])

    diagnostics = []
    for left, right in zip(groups[:-1], groups[1:]):
        gap = values[right[0]] - values[left[-1]]
        if gap <= CLUSTER_GUARD * cluster_tol * max(1.0, abs(values[right[0]])):
            message = f"eigenvalue clusters at {values[left[-1]]:.12g} and {values[right[0]]:.12g} are within the guard band"
            logger.warning(message)
            diagnostics.append(message)

    atoms = []
    for group in groups:
        v = root[:, group]
        location = float(np.mean(values[group]))
        atoms.append(Atom(location, matcore.hermitian_part(v @ v.conj().T), len(group)))
    return SpectralMeasure(j.block_dim, atoms, [], diagnostics)


# --- Constant Jacobi tails ---


def duran_weight(a, b) -> SpectralMeasure:
    """Weight of the constant block Jacobi matrix with off-diagonal a (PD) and diagonal b."""
    a = matcore.as_matrix(a)
    if not matcore.is_hermitian(a, 1e-10, relative=True) or matcore.min_eigenvalue(a) <= 0:
        raise DimensionError("off-diagonal block must be Hermitian positive definite")
    transform = DuranTransform(a, b)
    pieces = [DensityPiece(lo, hi, transform.density, (0.5, 0.5)) for lo, hi in transform.cuts()]
    return SpectralMeasure(transform.dim, [], pieces)


def perturb_first_block(base: SpectralMeasure | StieltjesEvaluator, delta_b0, s0=None) -> StieltjesEvaluator:
    """Transform of the measure whose Jacobi matrix differs from the base one only in its first diagonal block."""
    if isinstance(base, SpectralMeasure):
        base = MeasureTransform(base)
    return PerturbedTransform(base, delta_b0, s0)


@dataclass(frozen=True)
class ConstantTail:
    """Symmetrized half-line Jacobi data: root diagonal b0, tail diagonal b, off-diagonal a."""

    b0: np.ndarray
    b: np.ndarray
    a: np.ndarray


def constant_tail(model: CTOQWModel, scan_sites: int = DURAN_SCAN_SITES) -> ConstantTail | None:
    """Constant-coefficient data of J when the model qualifies for the Durán route, else None."""
    if model.kind != VertexKind.HALFLINE or not model.override_sites() <= {0}:
        return None
    window = range(scan_sites)
    try:
        chain = compute_symmetrizers(model, window)
    except CertificationError as e:
        logger.debug("no Durán route for %s: %s", model.name, e)
        return None
    j = symmetrize(assemble(model, window), chain)
    diag = [j.diag(n) for n in window]
    off = [j.lower(n) for n in window[:-1]]

    def same(x, y):
        return np.allclose(x, y, rtol=CONSTANT_TAIL_TOL, atol=CONSTANT_TAIL_TOL)

    if not all(same(diag[1], d) for d in diag[2:]) or not all(same(off[0], x) for x in off[1:]):
        return None
    x = off[0]
    if not matcore.is_hermitian(x, 1e-9, relative=True):
        return None
    x = matcore.hermitian_part(x)
    for a in (x, -x):
        if matcore.min_eigenvalue(a) > 0:
            return ConstantTail(matcore.hermitian_part(diag[0]), matcore.hermitian_part(diag[1]), a)
    return None


def halfline_transform(model: CTOQWModel, method: str = "auto", period: int = 1) -> StieltjesEvaluator:
    """Root transform B(z) = [(z + L)^{-1}]_{00} of a half-line model.

    method "duran" requires a constant symmetrized tail, "tail" always uses
    cyclic reduction, "auto" prefers the Durán route.
    """
    if model.kind != VertexKind.HALFLINE:
        raise DimensionError("half-line transform needs a half-line model")
    if method not in ("auto", "duran", "tail"):
        raise ValueError(f"unknown method {method!r}")
    if method != "tail":
        tail = constant_tail(model)
        if tail is not None:
            base = DuranTransform(tail.a, tail.b)
            delta = tail.b0 - tail.b
            if np.max(np.abs(delta)) <= CONSTANT_TAIL_TOL:
                return base
            return PerturbedTransform(base, delta)
        if method == "duran":
            raise CertificationError("symmetrized Jacobi matrix has no constant positive definite tail", site=1)
    head = max(model.override_sites(), default=0) + 1
    logger.debug("using tail resolvent for %s (head %d, period %d)", model.name, head, period)
    return TailResolventTransform(RecurrenceBlocks.from_model(model), head=head, period=period)


def fold_line_model(model: CTOQWModel, method: str = "auto") -> FoldedTransform:
    """Folded 2×2-block transform of a line model from its two half-line walks."""
    if model.kind != VertexKind.LINE:
        raise DimensionError("folding needs a line model")
    a_minus1, _, _ = site_blocks(model, -1)
    _, _, c0 = site_blocks(model, 0)
    # F_{-1} = A_{-1}* F_0 C_0^{-1} with F_0 = I
    f_minus1 = np.linalg.solve(c0.T, a_minus1.conj()).T
    b_plus = halfline_transform(restrict_right(model), method)
    b_minus = ScaledTransform(halfline_transform(reflect_left(model), method), f_minus1)
    return FoldedTransform(b_plus, b_minus, a_minus1, c0, None, np.linalg.inv(f_minus1))


def site_transform(model: CTOQWModel, site: int = 0, method: str = "auto") -> tuple[StieltjesEvaluator, np.ndarray]:
    """(B, Π) with Π B(z) = [(z + L)^{-1}]_{site,site}.

    Half-line models are rooted at 0; line models expose sites 0 and -1
    through the W_11 and W_22 blocks of the folded transform.
    """
    if model.kind == VertexKind.FINITE:
        if not model.contains(site):
            raise DimensionError(f"site {site} is outside the model")
        return TruncatedResolvent(assemble(model), site), np.eye(model.dim**2)
    if model.kind == VertexKind.HALFLINE:
        if site != 0:
            raise DimensionError("half-line transforms are available at site 0 only")
        return halfline_transform(model, method), np.eye(model.dim**2)
    folded = fold_line_model(model, method)
    if site == 0:
        return folded.block(1, 1), folded.pi_plus0
    if site == -1:
        return folded.block(2, 2), folded.pi_minus1
    raise DimensionError("line transforms are available at sites 0 and -1 only")


# --- Measures with their polynomials ---


@dataclass(frozen=True)
class CertifiedMeasure:
    """A spectral measure together with the polynomials and potentials it orthogonalizes."""

    measure: SpectralMeasure
    chain: SymmetrizerChain
    polys: PolynomialEvaluator
    transform: StieltjesEvaluator | None = None

    def potential(self, n: int) -> np.ndarray:
        return self.chain.potential(n)


def finite_model_measure(model: CTOQWModel) -> CertifiedMeasure:
    window = model.default_window()
    chain = compute_symmetrizers(model, window)
    j = symmetrize(assemble(model, window), chain)
    return CertifiedMeasure(finite_spectral_measure(j), chain, PolynomialEvaluator.for_model(model))


def halfline_measure(model: CTOQWModel, method: str = "auto", sites: int = CHAIN_SITES) -> CertifiedMeasure:
    chain = compute_symmetrizers(model, range(sites))
    transform = halfline_transform(model, method)
    measure = perron_stieltjes_invert(transform, extra_points=(0.0,))
    return CertifiedMeasure(measure, chain, PolynomialEvaluator.for_model(model), transform)


def line_measure(model: CTOQWModel, method: str = "auto", sites: int = CHAIN_SITES) -> CertifiedMeasure:
    """2d²-block measure W of a line model; polynomials are the folded family."""
    chain = compute_symmetrizers(model, range(-sites, sites))
    transform = fold_line_model(model, method)
    measure = perron_stieltjes_invert(transform, extra_points=(0.0,))
    return CertifiedMeasure(measure, chain, PolynomialEvaluator.for_model(model, Family.FOLDED), transform)


def model_measure(model: CTOQWModel, method: str = "auto") -> CertifiedMeasure:
    if model.kind == VertexKind.FINITE:
        return finite_model_measure(model)
    if model.kind == VertexKind.HALFLINE:
        return halfline_measure(model, method)
    return line_measure(model, method)


# --- Quadrature and checks ---


def quadrature(measure: SpectralMeasure, f: Callable[[float], complex]) -> np.ndarray:
    """∫ f(x) dΣ(x) for a scalar function f."""
    return integrate(measure, lambda x, w: f(x) * w)


@dataclass(frozen=True)
class GramTable:
    blocks: dict[tuple[int, int], np.ndarray]
    max_offdiagonal: float
    diagonal_conditions: dict[int, float]
    potential_defects: dict[int, float] = field(default_factory=dict)

    def passed(self, tol: float = 1e-7) -> bool:
        return (
            self.max_offdiagonal < tol
            and all(np.isfinite(c) for c in self.diagonal_conditions.values())
            and all(d < tol for d in self.potential_defects.values())
        )


def orthogonality_check(
    measure: SpectralMeasure,
    polys: Callable[[int, float], np.ndarray],
    max_degree: int,
    chain: SymmetrizerChain | None = None,
) -> GramTable:
    """Gram blocks ∫ Q_j* dΣ Q_i for 0 <= i, j <= max_degree.

    Off-diagonal blocks are reported relative to the larger diagonal norm of
    the pair. With a chain, also ‖Π_j F_j - I‖.
    """
    degrees = range(max_degree + 1)
    blocks = {}
    for jj in degrees:
        for ii in degrees:
            if ii < jj:
                continue
            blocks[jj, ii] = integrate(measure, lambda x, w, jj=jj, ii=ii: polys(jj, x).conj().T @ w @ polys(ii, x))
            if ii != jj:
                blocks[ii, jj] = blocks[jj, ii].conj().T
    norms = {n: float(np.linalg.norm(blocks[n, n], 2)) for n in degrees}
    worst = 0.0
    for (jj, ii), block in blocks.items():
        if jj != ii:
            worst = max(worst, float(np.linalg.norm(block, 2)) / max(norms[jj], norms[ii], 1e-300))
    conditions = {n: matcore.condition_number(blocks[n, n]) for n in degrees}
    defects = {}
    if chain is not None:
        for n in degrees:
            if n in chain.norms:
                product = chain.potential(n) @ blocks[n, n]
                defects[n] = float(np.max(np.abs(product - np.eye(product.shape[0]))))
    return GramTable(blocks, worst, conditions, defects)


@dataclass(frozen=True)
class HankelCheck:
    moments: list[np.ndarray]
    min_eigenvalues: list[float]

    @property
    def positive(self) -> list[bool]:
        return [value > -1e-9 * max(1.0, float(np.max(np.abs(self.moments[0])))) for value in self.min_eigenvalues]


def hankel_check(measure: SpectralMeasure, order: int) -> HankelCheck:
    """Block moments S_0..S_{2m} and the smallest eigenvalue of each Hankel matrix [S_{i+j}]_{i,j<=k}."""
    moments = [matcore.hermitian_part(integrate(measure, lambda x, w, k=k: x**k * w)) for k in range(2 * order + 1)]
    lowest = []
    for k in range(order + 1):
        hankel = np.block([[moments[r + c] for c in range(k + 1)] for r in range(k + 1)])
        scale = max(1.0, float(np.max(np.abs(hankel))))
        lowest.append(float(sla.eigvalsh(matcore.hermitian_part(hankel))[0]) / scale)
    return HankelCheck(moments, lowest)


def psd_defect(measure: SpectralMeasure, samples: int = 32) -> float:
    """Most negative eigenvalue over atom weights and sampled densities (0 when PSD)."""
    worst = 0.0
    for atom in measure.atoms:
        worst = min(worst, matcore.min_eigenvalue(atom.weight))
    for piece in measure.pieces:
        for x in np.linspace(piece.lo, piece.hi, samples + 2)[1:-1]:
            worst = min(worst, matcore.min_eigenvalue(piece.density(float(x))))
    return worst


# --- Export ---


def _entry_columns(m: np.ndarray) -> dict[str, float]:
    out = {}
    for (r, c), value in np.ndenumerate(np.asarray(m)):
        out[f"re_{r}_{c}"] = float(np.real(value))
        out[f"im_{r}_{c}"] = float(np.imag(value))
    return out


def measure_frame(measure: SpectralMeasure, samples: int = 200) -> pd.DataFrame:
    """Atoms and a density grid as one table: kind, x, multiplicity, then matrix entries."""
    rows = []
    for atom in measure.atoms:
        rows.append({"kind": "atom", "x": atom.location, "multiplicity": atom.multiplicity, **_entry_columns(atom.weight)})
    for piece in measure.pieces:
        for x in np.linspace(piece.lo, piece.hi, samples):
            rows.append({"kind": "density", "x": float(x), "multiplicity": 0, **_entry_columns(piece.density(float(x)))})
    return pd.DataFrame(rows)


def transform_frame(ev: StieltjesEvaluator, points) -> pd.DataFrame:
    """Transform samples: Re z, Im z, then matrix entries."""
    rows = []
    for z in points:
        z = complex(z)
        rows.append({"re_z": z.real, "im_z": z.imag, **_entry_columns(ev(z))})
    return pd.DataFrame(rows)
