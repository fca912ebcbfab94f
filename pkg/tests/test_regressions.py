import math

import pytest

from ctoqw_spectral import regressions
from ctoqw_spectral.dynamics import DensityOperator
from ctoqw_spectral.errors import CertificationError
from ctoqw_spectral.regressions import (
    REGISTRY,
    Regression,
    RegressionResult,
    noncommuting_eigenvalues,
    noncommuting_return_probability,
    reflecting_root_transform,
    run,
    run_all,
)

SLOW = {
    "duran-tail-density",
    "km-halfline",
    "km-line",
    "halfline-verdicts",
    "line-verdicts",
    "unitary-perturbed-recurrence",
    "antidiagonal-verdict-flip",
    "fold-semigroup",
}


@pytest.mark.parametrize(
    "name",
    [pytest.param(name, marks=pytest.mark.slow) if name in SLOW else name for name in REGISTRY],
)
def test_regression_passes(name):
    result = run(name)
    assert result.passed, f"{name}: deviation {result.deviation:.3e} ({result.detail})"


def test_registry_is_complete():
    assert len(REGISTRY) == 18
    assert all(entry.tolerance >= 0 for entry in REGISTRY.values())


def test_noncommuting_multiplicities_fill_the_space():
    assert sum(noncommuting_eigenvalues().values()) == 16


def test_closed_form_starts_at_one():
    rho = DensityOperator.from_bloch(0.2, 0.3 - 0.1j)
    assert noncommuting_return_probability(rho, 0.0) == pytest.approx(1.0)
    # the two-fold atom at 0 leaves a quarter of the mass at the root
    assert noncommuting_return_probability(rho, 200.0) == pytest.approx(0.25)


def test_reflecting_root_transform_decays_like_inverse_z():
    z = -1e6
    assert z * reflecting_root_transform(z, 1.0, 2.0) == pytest.approx(1.0, rel=1e-4)


def test_errors_become_failures(monkeypatch):
    def broken():
        raise CertificationError("no symmetrizer")

    monkeypatch.setitem(REGISTRY, "broken", Regression("broken", "always raises", 1e-8, broken))
    result = run("broken")
    assert not result.passed
    assert result.deviation == math.inf
    assert "CertificationError" in result.detail
    assert result.to_dict()["deviation"] == "inf"


def test_run_all_selects_names(monkeypatch):
    monkeypatch.setitem(REGISTRY, "zero", Regression("zero", "exact", 0.0, lambda: (0.0, "")))
    results = run_all(["zero"])
    assert [r.name for r in results] == ["zero"]
    assert results[0].passed


def test_result_serializes():
    doc = RegressionResult("semicircle", "scalar weight", 1.5e-12, 1e-8, True, 0.12345, "").to_dict()
    assert doc == {
        "name": "semicircle",
        "description": "scalar weight",
        "deviation": 1.5e-12,
        "tolerance": 1e-8,
        "passed": True,
        "seconds": 0.123,
        "detail": "",
    }


def test_shipped_model_lookup():
    assert regressions.shipped_model("diagonal-line").name == "diagonal-line"
