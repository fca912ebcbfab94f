"""Command-line front end: spectra, weights, probabilities, recurrence and folding of CTOQW models."""

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from . import config
from .dynamics import DensityOperator, fold_check, probability_curve
from .errors import CheckFailure, CTOQWError, DimensionError
from .lindblad import CTOQWModel, VertexKind, assemble
from .modelfile import load_density, load_model
from .orthopoly import compute_symmetrizers, symmetrize
from .regressions import REGISTRY, run_all
from .spectral import (
    finite_spectral_measure,
    fold_line_model,
    measure_frame,
    model_measure,
    psd_defect,
    site_transform,
    transform_frame,
)
from .stieltjes import Verdict, classify_recurrence

logger = logging.getLogger(__name__)

FOLD_CHECK_TOL = 1e-6
SCAN_SEED = 20240611
STATUS_ICONS = {True: "✅", False: "❌"}
VERDICT_ICONS = {Verdict.RECURRENT: "🔁", Verdict.TRANSIENT: "➡️ ", Verdict.INDETERMINATE: "⚠️ "}


# --- Argument helpers ---


def _shipped(value: str, folder: Path) -> Path:
    """A path as given, or the shipped file of that name."""
    path = Path(value)
    if path.exists():
        return path
    shipped = folder / f"{value}.json"
    return shipped if shipped.exists() else path


def time_grid(text: str) -> np.ndarray:
    """'start:stop:count' or a comma-separated list."""
    try:
        if ":" in text:
            start, stop, count = text.split(":")
            grid = np.linspace(float(start), float(stop), int(count))
        else:
            grid = np.array([float(t) for t in text.split(",") if t.strip()])
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid time grid '{text}'") from None
    if grid.size == 0 or np.any(grid < 0):
        raise argparse.ArgumentTypeError("times must be a non-empty list of non-negative numbers")
    return grid


def _output_path(given: str | None, default_name: str) -> Path:
    path = Path(given) if given else config.OUTPUT_DIR / default_name
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _write_csv(frame: pd.DataFrame, path: Path) -> None:
    frame.to_csv(path, index=False, encoding="utf-8")
    print(f"✓ Wrote {len(frame)} rows to {path}")


def _load(args) -> CTOQWModel:
    model = load_model(_shipped(args.model, config.MODELS_DIR))
    print(f"Loaded {model.name}: {model.kind} walk, internal dimension {model.dim}")
    return model


def _density(value: str, dim: int) -> DensityOperator:
    return load_density(_shipped(value, config.MODELS_DIR / "states"), dim)


# --- spectrum ---


def _spectrum_window(model: CTOQWModel, sites: int | None) -> range:
    if sites is None:
        return model.default_window()
    if sites < 1 or sites > config.MAX_WINDOW_SITES:
        raise DimensionError(f"window must have between 1 and {config.MAX_WINDOW_SITES} sites")
    if model.kind == VertexKind.LINE:
        return range(-(sites // 2), sites - sites // 2)
    if model.kind == VertexKind.FINITE:
        return range(min(sites, model.sites))
    return range(sites)


def cmd_spectrum(args) -> None:
    """Eigenvalues and root weights of a finite model or a truncated window."""
    model = _load(args)
    window = _spectrum_window(model, args.window)
    print(f"Diagonalizing {len(window)} sites ({window[0]}..{window[-1]})...")
    chain = compute_symmetrizers(model, window)
    measure = finite_spectral_measure(symmetrize(assemble(model, window), chain))

    print("-" * 62)
    print(f"{'#':<4} {'Eigenvalue':>20} {'Mult':>6} {'Tr W':>14} {'|W|':>14}")
    print("-" * 62)
    for k, atom in enumerate(measure.atoms, 1):
        trace = float(np.trace(atom.weight).real)
        print(f"{k:<4} {atom.location:>20.12f} {atom.multiplicity:>6} {trace:>14.8f} {np.linalg.norm(atom.weight, 2):>14.8f}")
    for note in measure.diagnostics:
        print(f"⚠️  {note}")

    total = sum(a.multiplicity for a in measure.atoms)
    print(f"\n✓ {len(measure.atoms)} distinct eigenvalues ({total} with multiplicity)")
    _write_csv(measure_frame(measure), _output_path(args.output, f"{model.name}-spectrum.csv"))


# --- weights ---


def cmd_weights(args) -> None:
    """Sample the spectral weight matrix: atoms plus a density grid."""
    model = _load(args)
    print(f"Computing the spectral measure ({args.method})...")
    certified = model_measure(model, args.method)
    measure = certified.measure

    if measure.atoms:
        print(f"\nAtoms ({len(measure.atoms)}):")
        print("-" * 50)
        print(f"{'Location':>20} {'Mult':>6} {'Tr W':>14}")
        print("-" * 50)
        for atom in measure.atoms:
            print(f"{atom.location:>20.12f} {atom.multiplicity:>6} {float(np.trace(atom.weight).real):>14.8f}")
    if measure.pieces:
        print(f"\nAbsolutely continuous pieces ({len(measure.pieces)}):")
        for piece in measure.pieces:
            print(f"  [{piece.lo:.10g}, {piece.hi:.10g}]")
    for note in measure.diagnostics:
        print(f"⚠️  {note}")

    if model.kind != VertexKind.LINE:
        defect = float(np.max(np.abs(measure.mass() - np.eye(measure.dim))))
        print(f"\nMass defect |Σ(R) - I|: {defect:.3e}")
    print(f"Most negative weight eigenvalue: {psd_defect(measure):.3e}")
    _write_csv(measure_frame(measure, args.samples), _output_path(args.output, f"{model.name}-weights.csv"))


# --- probability ---


def cmd_probability(args) -> None:
    """Transition probability curve p_{ji;ρ}(t)."""
    model = _load(args)
    rho = _density(args.rho, model.dim)
    print(f"Evaluating p(t) from site {args.source} to site {args.target} at {len(args.times)} times ({args.method})...")
    curve = probability_curve(model, args.target, args.source, rho, args.times, args.method)
    frame = curve.to_frame()

    print("-" * 52)
    print(f"{'t':>10} {'Method':<8} {'p':>16} {'Error':>12}")
    print("-" * 52)
    for row in frame.itertuples(index=False):
        print(f"{row.t:>10.4f} {row.method:<8} {row.p:>16.12f} {row.error:>12.2e}")
    if "abs_delta" in frame:
        print(f"\nLargest |km - direct|: {frame['abs_delta'].max():.3e}")
    _write_csv(frame, _output_path(args.output, f"{model.name}-p{args.target}{args.source}.csv"))


# --- recurrence ---


def scan_states(dim: int, count: int) -> list[DensityOperator]:
    """Basis states, the maximally mixed state, then seeded random states up to count."""
    states = [DensityOperator.basis(dim, k) for k in range(dim)] + [DensityOperator.maximally_mixed(dim)]
    rng = np.random.default_rng(SCAN_SEED)
    while len(states) < count:
        g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
        m = g @ g.conj().T
        states.append(DensityOperator(m / np.trace(m).real))
    return states[:count]


def _entries(rho: DensityOperator) -> dict[str, float]:
    out = {}
    for (r, c), value in np.ndenumerate(rho.matrix):
        out[f"re_rho_{r}_{c}"] = float(value.real)
        out[f"im_rho_{r}_{c}"] = float(value.imag)
    return out


def _scan_label(k: int, dim: int) -> str | None:
    if k < dim:
        return f"|e{k}><e{k}|"
    return "maximally mixed" if k == dim else None


def cmd_recurrence(args) -> None:
    """Recurrence verdicts from the growth of the Stieltjes transform at z = -ε."""
    model = _load(args)
    states = [_density(args.rho, model.dim)] if args.rho else scan_states(model.dim, args.scan_rho)
    ev, pi = site_transform(model, args.site, args.method)
    print(f"Classifying site {args.site} for {len(states)} state(s)...")

    rows = []
    verdicts = []
    for k, rho in enumerate(states):
        result = classify_recurrence(ev, pi, rho, args.site)
        verdicts.append(result.verdict)
        if len(states) == 1:
            print("-" * 30)
            print(f"{'ε':>10} {'s(ε)':>18}")
            print("-" * 30)
            for eps, value in result.evidence:
                print(f"{eps:>10.0e} {value:>18.10g}")
        rows.append({"state": k, "verdict": str(result.verdict), "slope": result.slope, **_entries(rho)})
        logger.debug("state %d: %s", k, result.verdict)

    print()
    for k, verdict in enumerate(verdicts):
        label = Path(args.rho).stem if args.rho else _scan_label(k, model.dim)
        if label:
            print(f"{VERDICT_ICONS[verdict]} {label:<18} {verdict}")
    counts = {v: verdicts.count(v) for v in Verdict}
    summary = ", ".join(f"{n} {v.lower()}" for v, n in counts.items() if n)
    print(f"\n✓ Site {args.site}: {summary}")
    _write_csv(pd.DataFrame(rows), _output_path(args.output, f"{model.name}-recurrence-site{args.site}.csv"))


# --- fold ---


def cmd_fold(args) -> None:
    """Sample the four W-block transforms of a line model; optionally check the folded semigroup."""
    model = _load(args)
    if model.kind != VertexKind.LINE:
        raise DimensionError("fold needs a line model")
    folded = fold_line_model(model, args.method)
    points = -np.geomspace(args.z_min, args.z_max, args.points)
    frames = []
    for alpha, beta in ((1, 1), (2, 2), (1, 2), (2, 1)):
        frame = transform_frame(folded.block(alpha, beta), points)
        frame.insert(0, "block", f"W{alpha}{beta}")
        frames.append(frame)

    print("-" * 58)
    print(f"{'z':>10} {'|W11|':>11} {'|W22|':>11} {'|W12|':>11} {'|W21|':>11}")
    print("-" * 58)
    for z in points[:: max(1, len(points) // 8)]:
        blocks = folded.blocks(z)
        norms = [np.linalg.norm(blocks[key], 2) for key in ((1, 1), (2, 2), (1, 2), (2, 1))]
        print(f"{z:>10.4f} " + " ".join(f"{n:>11.4e}" for n in norms))
    _write_csv(pd.concat(frames, ignore_index=True), _output_path(args.output, f"{model.name}-fold.csv"))

    if args.check:
        print(f"\nChecking the folded semigroup on {2 * args.half_width} sites at t = {args.t}...")
        deviation = fold_check(model, args.half_width, args.t)
        print(f"Max block deviation: {deviation:.3e}")
        if deviation > FOLD_CHECK_TOL:
            raise CheckFailure(f"folding check deviation {deviation:.3e} exceeds {FOLD_CHECK_TOL:.0e}", deviation)
        print("✓ Folding check passed")


# --- reproduce-all ---


def cmd_reproduce_all(args) -> None:
    """Run every closed-form regression of the worked examples."""
    names = args.only or list(REGISTRY)
    print(f"Running {len(names)} regressions...")
    results = run_all(names)

    print("-" * 80)
    print(f"{'Regression':<32} {'Deviation':>12} {'Tolerance':>10} {'Time':>8}  Status")
    print("-" * 80)
    for r in results:
        print(f"{r.name:<32} {r.deviation:>12.3e} {r.tolerance:>10.0e} {r.seconds:>7.2f}s  {STATUS_ICONS[r.passed]}")
        if not r.passed and r.detail:
            print(f"    {r.detail}")

    path = _output_path(args.output, "reproduce-all.json")
    summary = {
        "passed": sum(r.passed for r in results),
        "failed": sum(not r.passed for r in results),
        "results": [r.to_dict() for r in results],
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(summary, f, indent=2)
    print(f"\n✓ Wrote summary to {path}")

    if summary["failed"]:
        raise CheckFailure(f"{summary['failed']} of {len(results)} regressions failed")
    print(f"✓ All {len(results)} regressions passed")


# --- Parser ---


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ctoqw-spectral",
        description="Spectral analysis of continuous-time open quantum walks",
    )
    parser.add_argument("--verbose", action="store_true", help="Log debug detail to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_model(name: str, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("model", help="Model file, or the name of a shipped model")
        p.add_argument("--output", help="Output file (default: under CTOQW_OUTPUT_DIR)")
        return p

    def with_method(p: argparse.ArgumentParser) -> None:
        p.add_argument("--method", choices=["auto", "duran", "tail"], default="auto",
                       help="Half-line transform route")

    p = with_model("spectrum", "Eigenvalues and weights of a finite chain")
    p.add_argument("--window", type=int, help="Number of sites of the truncation window")
    p.set_defaults(handler=cmd_spectrum)

    p = with_model("weights", "Sample the spectral weight matrix")
    p.add_argument("--samples", type=int, default=200, help="Density samples per continuous piece")
    with_method(p)
    p.set_defaults(handler=cmd_weights)

    p = with_model("probability", "Transition probability curve")
    p.add_argument("--from", dest="source", type=int, required=True, help="Starting site i")
    p.add_argument("--to", dest="target", type=int, required=True, help="Target site j")
    p.add_argument("--rho", required=True, help="Density file, or the name of a shipped state")
    p.add_argument("--times", type=time_grid, default=time_grid("0:4:41"),
                   help="Time grid, 'start:stop:count' or a comma-separated list")
    p.add_argument("--method", choices=["km", "direct", "both"], default="km",
                   help="Karlin-McGregor, direct evolution, or both with |Δ|")
    p.set_defaults(handler=cmd_probability)

    p = with_model("recurrence", "Recurrence verdicts for one or many states")
    states = p.add_mutually_exclusive_group(required=True)
    states.add_argument("--rho", help="Density file, or the name of a shipped state")
    states.add_argument("--scan-rho", type=int, metavar="K", help="Scan K states (basis, mixed, then random)")
    p.add_argument("--site", type=int, default=0, help="Site to classify (line models: 0 or -1)")
    with_method(p)
    p.set_defaults(handler=cmd_recurrence)

    p = with_model("fold", "Folded 2x2-block transforms of a line model")
    p.add_argument("--check", action="store_true", help="Compare folded and unfolded semigroups")
    p.add_argument("--points", type=int, default=40, help="Number of sample points z < 0")
    p.add_argument("--z-min", type=float, default=1e-2, help="Smallest |z|")
    p.add_argument("--z-max", type=float, default=10.0, help="Largest |z|")
    p.add_argument("--half-width", type=int, default=30, help="Folded sites in the check window")
    p.add_argument("--t", type=float, default=0.5, help="Time of the semigroup check")
    with_method(p)
    p.set_defaults(handler=cmd_fold)

    p = sub.add_parser("reproduce-all", help="Run every worked-example regression")
    p.add_argument("--only", nargs="+", choices=sorted(REGISTRY), help="Run only these regressions")
    p.add_argument("--output", help="JSON summary path (default: under CTOQW_OUTPUT_DIR)")
    p.set_defaults(handler=cmd_reproduce_all)

    return parser


def run(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else config.LOG_LEVEL,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        args.handler(args)
    except CTOQWError as e:
        print(f"Error: {e}", file=sys.stderr)
        return e.exit_code
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
