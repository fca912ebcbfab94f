"""Closed-form regressions for the shipped worked-example models.

Each regression returns a RegressionResult; `reproduce-all` runs the whole
registry and fails when any deviation exceeds its tolerance.
"""

import logging
import math
import time
from collections.abc import Callable
from dataclasses import dataclass, replace

import numpy as np

from . import config
from .dynamics import DensityOperator, fold_check, p_direct, p_km, p_line_km
from .errors import CTOQWError
from .lindblad import CTOQWModel
from .modelfile import load_model
from .orthopoly import PolynomialEvaluator, RecurrenceBlocks
from .spectral import (
    constant_tail,
    duran_weight,
    finite_model_measure,
    fold_line_model,
    halfline_measure,
    halfline_transform,
    line_measure,
    orthogonality_check,
    site_transform,
)
from .stieltjes import (
    DuranTransform,
    MeasureTransform,
    TailResolventTransform,
    Verdict,
    classify_recurrence,
    period_two_fixed_point,
    period_two_residual,
)

logger = logging.getLogger(__name__)

HADAMARD = np.array([[1, 1], [1, -1]]) / math.sqrt(2)


@dataclass(frozen=True)
class RegressionResult:
    name: str
    description: str
    deviation: float
    tolerance: float
    passed: bool
    seconds: float = 0.0
    detail: str = ""

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "description": self.description,
            "deviation": self.deviation if math.isfinite(self.deviation) else str(self.deviation),
            "tolerance": self.tolerance,
            "passed": self.passed,
            "seconds": round(self.seconds, 3),
            "detail": self.detail,
        }


@dataclass(frozen=True)
class Regression:
    name: str
    description: str
    tolerance: float
    run: Callable[[], tuple[float, str]]


REGISTRY: dict[str, Regression] = {}


def regression(name: str, description: str, tolerance: float):
    """Register a check returning (deviation, detail)."""

    def wrap(fn):
        REGISTRY[name] = Regression(name, description, tolerance, fn)
        return fn

    return wrap


def shipped_model(name: str) -> CTOQWModel:
    return load_model(config.MODELS_DIR / f"{name}.json")


def _verdict_mismatches(expected: list[tuple[CTOQWModel, int, DensityOperator, Verdict]]) -> tuple[float, str]:
    misses = []
    for model, site, rho, verdict in expected:
        ev, pi = site_transform(model, site)
        got = classify_recurrence(ev, pi, rho, site).verdict
        if got != verdict:
            misses.append(f"{model.name}@{site}: expected {verdict}, got {got}")
    return float(len(misses)), "; ".join(misses)


# --- Noncommuting four-site chain ---

NONCOMMUTING_W1 = np.array([[3, -1, -1, 2], [-1, 2, 2, 1], [-1, 2, 2, 1], [2, 1, 1, 3]]) / 20


def noncommuting_eigenvalues() -> dict[float, int]:
    """Distinct eigenvalues of -L with their multiplicities."""
    r5, r7, r17, r41 = math.sqrt(5), math.sqrt(7), math.sqrt(17), math.sqrt(41)
    return {
        0.0: 2,
        3 - r5: 1,
        3 + r5: 1,
        3 - r7: 2,
        3 + r7: 2,
        (7 - r17) / 4: 2,
        (7 + r17) / 4: 2,
        (11 - r41) / 4: 2,
        (11 + r41) / 4: 2,
    }


def noncommuting_return_probability(rho: DensityOperator, t: float) -> float:
    a, b = float(rho.matrix[0, 0].real), rho.matrix[0, 1]
    l2, l3 = 3 - math.sqrt(5), 3 + math.sqrt(5)
    l4, l5 = 3 - math.sqrt(7), 3 + math.sqrt(7)
    v1 = math.sqrt(5) / 40 * (1 - 2 * a + 4 * b.real)
    v2 = math.sqrt(7) / 28 * (2 - a + 2 * b.real)
    e2, e3, e4, e5 = (math.exp(-lam * t) for lam in (l2, l3, l4, l5))
    return 0.25 + (e2 - e3) * v1 + (e2 + e3) / 8 + (e4 - e5) * v2 + (e4 + e5) / 4


@regression("noncommuting-spectrum", "eigenvalues, multiplicities and the weight at 0 of the noncommuting chain", 1e-8)
def _noncommuting_spectrum():
    measure = finite_model_measure(shipped_model("noncommuting-4-site")).measure
    expected = noncommuting_eigenvalues()
    if len(measure.atoms) != len(expected):
        return math.inf, f"{len(measure.atoms)} distinct eigenvalues, expected {len(expected)}"
    worst, notes = 0.0, []
    for atom, (location, multiplicity) in zip(measure.atoms, sorted(expected.items())):
        worst = max(worst, abs(atom.location - location))
        if atom.multiplicity != multiplicity:
            notes.append(f"multiplicity {atom.multiplicity} at {location:.6g}, expected {multiplicity}")
    if notes:
        return math.inf, "; ".join(notes)
    weight_error = float(np.max(np.abs(measure.atoms[0].weight - NONCOMMUTING_W1)))
    return max(worst, weight_error), f"eigenvalue error {worst:.2e}, W at 0 error {weight_error:.2e}"


@regression("noncommuting-probability", "p_00 of the noncommuting chain against its closed form on a (a, Re b, t) grid", 1e-8)
def _noncommuting_probability():
    model = shipped_model("noncommuting-4-site")
    worst = 0.0
    for a in (0.3, 0.5, 0.7):
        for b in (-0.15, 0.0, 0.15):
            rho = DensityOperator.from_bloch(a, b)
            for t in (0.25, 1.0, 4.0):
                p = p_direct(model, None, 0, 0, rho, t).value
                worst = max(worst, abs(p - noncommuting_return_probability(rho, t)))
    return worst, "27 grid points"


# --- Diagonal transitions ---


def _channel_parameters(up: np.ndarray, down: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per vec channel (r, s): products a_r a_s, c_r c_s and the interior rate ½(m_r + m_s)."""
    a, c = np.abs(np.diag(up)), np.abs(np.diag(down))
    m = a**2 + c**2
    aa, cc = np.outer(a, a).ravel(), np.outer(c, c).ravel()
    return aa, cc, 0.5 * np.add.outer(m, m).ravel()


@regression("diagonal-finite-atoms", "atoms of the three-site diagonal chain: g - sqrt(2)k, g, g + sqrt(2)k with weights 1/4, 1/2, 1/4", 1e-8)
def _diagonal_finite_atoms():
    model = shipped_model("diagonal-finite-n2")
    measure = finite_model_measure(model).measure
    aa, cc, g = _channel_parameters(model.up.default, model.down.default)
    k = np.sqrt(aa * cc)
    expected: dict[float, np.ndarray] = {}
    for channel in range(len(g)):
        for shift, weight in ((-math.sqrt(2), 0.25), (0.0, 0.5), (math.sqrt(2), 0.25)):
            x = round(float(g[channel] + shift * k[channel]), 9)
            expected.setdefault(x, np.zeros((len(g), len(g))))[channel, channel] = weight
    if len(measure.atoms) != len(expected):
        return math.inf, f"{len(measure.atoms)} atoms, expected {len(expected)}"
    worst = 0.0
    for atom, (x, weight) in zip(measure.atoms, sorted(expected.items())):
        worst = max(worst, abs(atom.location - x), float(np.max(np.abs(atom.weight - weight))))
    return worst, f"{len(expected)} atoms"


def reflecting_root_transform(z: float, a2: float, c2: float) -> float:
    """Root transform of the diagonal half-line channel with a² = a2, c² = c2, z < 0."""
    return (z - a2 + c2 + math.sqrt((z - a2 - c2) ** 2 - 4 * a2 * c2)) / (2 * c2 * z)


@regression("diagonal-halfline-transform", "root transform of the reflecting diagonal half-line against its closed form at z < 0", 1e-8)
def _diagonal_halfline_transform():
    model = shipped_model("diagonal-halfline")
    ev = halfline_transform(model)
    aa, cc, _ = _channel_parameters(model.up.default, model.down.default)
    worst = 0.0
    for z in (-0.05, -0.5, -1.0, -3.0):
        expected = np.diag([reflecting_root_transform(z, a2, c2) for a2, c2 in zip(aa, cc)])
        worst = max(worst, float(np.max(np.abs(ev(z) - expected))))
    return worst, "4 points"


@regression("diagonal-halfline-atom", "atom at 0 of weight 1 - a²/c² for the reflecting half-line with a < c", 1e-8)
def _diagonal_halfline_atom():
    model = shipped_model("diagonal-halfline")
    measure = halfline_measure(model).measure
    atoms = [a for a in measure.atoms if abs(a.location) < 1e-7]
    if not atoms:
        return math.inf, "no atom at 0"
    aa, cc, _ = _channel_parameters(model.up.default, model.down.default)
    expected = np.diag(1 - aa / cc)
    return float(np.max(np.abs(atoms[0].weight - expected))), f"{len(measure.atoms)} atoms"


@regression("symmetric-coherence-atom", "A = C = diag(1, 2): the coherence channels carry an atom of weight 0.36 at 0.9", 1e-7)
def _symmetric_coherence_atom():
    measure = halfline_measure(shipped_model("diagonal-halfline-symmetric")).measure
    atoms = [a for a in measure.atoms if abs(a.location - 0.9) < 1e-4]
    if len(atoms) != 1:
        return math.inf, f"atoms at {[round(a.location, 6) for a in measure.atoms]}"
    expected = np.diag([0.0, 0.36, 0.36, 0.0])
    deviation = max(abs(atoms[0].location - 0.9), float(np.max(np.abs(atoms[0].weight - expected))))
    return deviation, f"atom at {atoms[0].location:.10f}"


@regression("line-root-transform", "W_11 transform of the diagonal line: -1/sqrt((z - m)² - 4ac) per channel", 1e-8)
def _line_root_transform():
    model = shipped_model("diagonal-line")
    folded = fold_line_model(model)
    aa, cc, m = _channel_parameters(model.up.default, model.down.default)
    worst = 0.0
    for z in (-0.01, -0.5, -1.0, -2.0):
        expected = np.diag(-1 / np.sqrt((z - m) ** 2 - 4 * aa * cc))
        worst = max(worst, float(np.max(np.abs(folded.blocks(z)[1, 1] - expected))))
    return worst, "4 points"


# --- Durán weights ---


@regression("semicircle", "scalar Durán weight sqrt(4 - x²)/2π, and its quadrature transform at z = -3", 1e-8)
def _semicircle():
    measure = duran_weight([[1.0]], [[0.0]])
    piece = measure.pieces[0]
    grid = np.linspace(-2, 2, 102)[1:-1]
    density_error = max(abs(piece.density(x)[0, 0] - math.sqrt(4 - x * x) / (2 * math.pi)) for x in grid)
    quadrature = MeasureTransform(measure)(-3.0)[0, 0]
    closed = DuranTransform([[1.0]], [[0.0]])(-3.0)[0, 0]
    transform_error = max(abs(quadrature - closed), abs(closed - (math.sqrt(5) - 3) / 2))
    return max(density_error, transform_error), f"density {density_error:.2e}, transform {transform_error:.2e}"


@regression("duran-tail-density", "Durán weight of the mixed diagonal tail: sqrt(4k² - (x - m)²)/(2πk²) per channel, orthogonal to degree 4", 1e-7)
def _duran_tail_density():
    model = shipped_model("diagonal-halfline-mixed")
    tail = constant_tail(model)
    if tail is None:
        return math.inf, "no constant tail"
    measure = duran_weight(tail.a, tail.b)
    m, k = np.real(np.diag(tail.b)), np.real(np.diag(tail.a))
    worst = 0.0
    for piece in measure.pieces:
        for x in np.linspace(piece.lo, piece.hi, 102)[1:-1]:
            closed = np.sqrt(np.clip(4 * k**2 - (x - m) ** 2, 0, None)) / (2 * np.pi * k**2)
            worst = max(worst, float(np.max(np.abs(piece.density(x) - np.diag(closed)))))
    polys = PolynomialEvaluator(RecurrenceBlocks.constant(-tail.a, -tail.b, -tail.a))
    gram = orthogonality_check(measure, polys, 4)
    if not gram.passed(1e-7):
        return math.inf, f"Gram off-diagonal {gram.max_offdiagonal:.2e}"
    return max(worst, gram.max_offdiagonal), f"density {worst:.2e}, Gram {gram.max_offdiagonal:.2e}"


# --- Karlin-McGregor against direct evolution ---

KM_TIMES = tuple(np.linspace(0.2, 2.0, 10))


@regression("km-finite", "Karlin-McGregor against direct evolution on the noncommuting chain", 1e-6)
def _km_finite():
    model = shipped_model("noncommuting-4-site")
    certified = finite_model_measure(model)
    rho = DensityOperator.from_bloch(0.7, 0.15 - 0.1j)
    worst = 0.0
    for j in range(model.sites):
        for t in KM_TIMES:
            km = p_km(certified.measure, certified.polys, certified.chain, j, 0, rho, t)
            worst = max(worst, abs(km - p_direct(model, None, j, 0, rho, t).value))
    return worst, f"{model.sites * len(KM_TIMES)} points"


@regression("km-halfline", "Karlin-McGregor against adaptively truncated evolution on the reflecting diagonal half-line", 1e-6)
def _km_halfline():
    model = shipped_model("diagonal-halfline")
    certified = halfline_measure(model)
    rho = DensityOperator.from_bloch(0.6, 0.2)
    worst = 0.0
    for t in KM_TIMES:
        km = p_km(certified.measure, certified.polys, certified.chain, 0, 0, rho, t)
        worst = max(worst, abs(km - p_direct(model, None, 0, 0, rho, t).value))
    return worst, f"{len(KM_TIMES)} points"


@regression("km-line", "folded Karlin-McGregor against adaptively truncated evolution on the diagonal line", 1e-6)
def _km_line():
    model = shipped_model("diagonal-line")
    certified = line_measure(model)
    rho = DensityOperator.maximally_mixed(model.dim)
    worst = 0.0
    for t in KM_TIMES:
        km = p_line_km(certified.measure, certified.polys, certified.chain, 0, 0, rho, t)
        worst = max(worst, abs(km - p_direct(model, None, 0, 0, rho, t).value))
    return worst, f"{len(KM_TIMES)} points"


# --- Recurrence ---


def _states(dim: int) -> tuple[DensityOperator, DensityOperator, DensityOperator]:
    return DensityOperator.basis(dim, 0), DensityOperator.basis(dim, 1), DensityOperator.maximally_mixed(dim)


def diagonal_model(kind: str, a: tuple[float, ...], c: tuple[float, ...]) -> CTOQWModel:
    """Reflecting walk with A = diag(a) and C = diag(c)."""
    label = "-".join(f"{x:g}" for x in (*a, *c))
    return CTOQWModel.build(kind, np.diag(a), np.diag(c), boundary="reflecting", name=f"diagonal-{kind}-{label}")


_R, _T = Verdict.RECURRENT, Verdict.TRANSIENT

# (A diagonal, C diagonal) -> verdicts for |e0>, |e1> and the mixed state
HALFLINE_VERDICTS = {
    ((2.0, 2.0), (1.0, 1.0)): (_T, _T, _T),
    ((1.0, 2.0), (1.0, 1.0)): (_R, _T, _R),
    ((2.0, 1.0), (1.0, 2.0)): (_T, _R, _R),
}
LINE_VERDICTS = {
    ((1.0, 2.0), (1.0, 2.0)): (_R, _R, _R),
    ((2.0, 3.0), (1.0, 1.0)): (_T, _T, _T),
    ((2.0, 1.0), (1.0, 1.0)): (_T, _R, _R),
}


@regression("halfline-verdicts", "recurrence of the diagonal half-lines for |e0>, |e1> and the mixed state", 0.0)
def _halfline_verdicts():
    table = [
        (shipped_model("diagonal-halfline"), (_R, _R, _R)),
        (shipped_model("diagonal-halfline-mixed"), (_T, _R, _R)),
        (shipped_model("diagonal-halfline-symmetric"), (_R, _R, _R)),
    ]
    table += [(diagonal_model("halfline", a, c), v) for (a, c), v in HALFLINE_VERDICTS.items()]
    cases = []
    for model, verdicts in table:
        cases += [(model, 0, rho, v) for rho, v in zip(_states(model.dim), verdicts)]
    return _verdict_mismatches(cases)


@regression("line-verdicts", "recurrence at sites 0 and -1 of the diagonal lines for |e0>, |e1> and the mixed state", 0.0)
def _line_verdicts():
    model = shipped_model("diagonal-line")
    mirrored = replace(model, up=model.down, down=model.up, name=f"{model.name}-mirrored")
    table = [(model, (_R, _T, _R)), (mirrored, (_R, _T, _R))]
    table += [(diagonal_model("line", a, c), v) for (a, c), v in LINE_VERDICTS.items()]
    cases = []
    for walk, verdicts in table:
        for site in (0, -1):
            cases += [(walk, site, rho, v) for rho, v in zip(_states(walk.dim), verdicts)]
    return _verdict_mismatches(cases)


def perturbed_unitary_model(kind: str, h: float, h2: float = 0.3) -> CTOQWModel:
    """A = C = U diag(2, 1) U*, root self-loop I + ih UσxU* and Hamiltonian h2 I + h UσxU*."""
    sigma = HADAMARD @ np.array([[0, 1], [1, 0]]) @ HADAMARD.conj().T
    a = HADAMARD @ np.diag([2.0, 1.0]) @ HADAMARD.conj().T
    return CTOQWModel.build(
        kind,
        a,
        a,
        np.zeros((2, 2)),
        np.zeros((2, 2)),
        boundary="reflecting",
        overrides={"stay": {0: np.eye(2) + 1j * h * sigma}, "hamiltonian": {0: h2 * np.eye(2) + h * sigma}},
        name=f"unitary-{kind}-h{h:g}",
    )


@regression("unitary-perturbed-recurrence", "A = C = U diag(2, 1) U* with a perturbed root is recurrent for every h", 0.0)
def _unitary_perturbed_recurrence():
    cases = []
    for h in (0.0, 0.5, 1.0):
        half, line = perturbed_unitary_model("halfline", h), perturbed_unitary_model("line", h)
        for rho in _states(2):
            cases.append((half, 0, rho, Verdict.RECURRENT))
            cases += [(line, site, rho, Verdict.RECURRENT) for site in (0, -1)]
    return _verdict_mismatches(cases)


# --- Antidiagonal transitions ---


def antidiagonal_model(a1: float, a2: float = 1.0, c1: float = 1.0, c2: float = 1.0) -> CTOQWModel:
    return CTOQWModel.build(
        "halfline",
        [[0, a1], [a2, 0]],
        [[0, c1], [c2, 0]],
        boundary="reflecting",
        name=f"antidiagonal-a1-{a1:g}",
    )


def antidiagonal_auxiliary(a1: float, a2: float, c1: float, c2: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per channel: rate g̃ and the alternating couplings m0, m1 of the period-two auxiliary chain."""
    m = np.array([a2**2 + c2**2, a1**2 + c1**2])
    g = 0.5 * np.add.outer(m, m).ravel()
    cross = math.sqrt(a1 * a2 * c1 * c2)
    return g, np.array([a2 * c1, cross, cross, a1 * c2]), np.array([a1 * c2, cross, cross, a2 * c1])


@regression("antidiagonal-fixed-point", "period-two fixed point solves its quadratic and matches the cyclic-reduction resolvent", 1e-9)
def _antidiagonal_fixed_point():
    g, m0, m1 = antidiagonal_auxiliary(0.8, 1.0, 1.0, 1.0)
    blocks = RecurrenceBlocks(
        4,
        lambda n: -np.diag(m0 if n % 2 == 0 else m1).astype(np.complex128),
        lambda n: -np.diag(g).astype(np.complex128),
        lambda n: -np.diag(m1 if n % 2 == 0 else m0).astype(np.complex128),
    )
    ev = TailResolventTransform(blocks, head=0, period=2)
    worst = 0.0
    for z in (-1.0, -0.25 + 0.5j, 1.0 + 1.0j, 3.0 - 0.5j):
        values = [period_two_fixed_point(z, g[k], m0[k], m1[k]) for k in range(4)]
        residual = max(period_two_residual(f, z, g[k], m0[k], m1[k]) for k, f in enumerate(values))
        worst = max(worst, residual, float(np.max(np.abs(np.diag(ev(z)) - values))))
    return worst, "4 points"


# a2 = c1 = c2 = 1: recurrent up to a1 = 1, transient beyond
ANTIDIAGONAL_VERDICTS = ((0.8, _R), (0.999, _R), (1.0, _R), (1.001, _T), (1.25, _T))


@regression("antidiagonal-verdict-flip", "antidiagonal half-line flips from recurrent to transient within 1e-3 of a1 a2 = c1 c2", 0.0)
def _antidiagonal_verdict_flip():
    rho = DensityOperator.basis(2, 0)
    return _verdict_mismatches([(antidiagonal_model(a1), 0, rho, v) for a1, v in ANTIDIAGONAL_VERDICTS])



# --- Folding ---


@regression("fold-semigroup", "folded semigroup blocks equal the rearranged line semigroup on a 60-site window", 1e-8)
def _fold_semigroup():
    deviation = fold_check(shipped_model("unitary-line-perturbed"), 30, 0.5)
    return deviation, "half width 30, t = 0.5"


def run(name: str) -> RegressionResult:
    entry = REGISTRY[name]
    start = time.perf_counter()
    try:
        deviation, detail = entry.run()
    except (CTOQWError, np.linalg.LinAlgError) as e:
        logger.error("regression %s raised %s", name, e)
        deviation, detail = math.inf, f"{type(e).__name__}: {e}"
    seconds = time.perf_counter() - start
    passed = bool(deviation <= entry.tolerance)
    logger.info("%s: deviation %.3e (tolerance %.1e) in %.2fs", name, deviation, entry.tolerance, seconds)
    return RegressionResult(name, entry.description, float(deviation), entry.tolerance, passed, seconds, detail)


def run_all(names: list[str] | None = None) -> list[RegressionResult]:
    return [run(name) for name in (names or list(REGISTRY))]
