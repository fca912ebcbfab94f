import numpy as np
import pytest

from ctoqw_spectral import matcore
from ctoqw_spectral.errors import CertificationError, DimensionError, SingularBlockError
from ctoqw_spectral.lindblad import CTOQWModel, assemble
from ctoqw_spectral.orthopoly import (
    Family,
    PolynomialEvaluator,
    RecurrenceBlocks,
    check_dette,
    compute_symmetrizers,
    eval_folded,
    eval_poly,
    norm_by_product,
    symmetrize,
)


@pytest.fixture
def chebyshev():
    """-x Q_n = -Q_{n+1} - Q_{n-1}: Chebyshev polynomials of the second kind in x/2."""
    return PolynomialEvaluator(RecurrenceBlocks.constant([[-1.0]], [[0.0]], [[-1.0]]))


def test_initial_values(shipped):
    ev = PolynomialEvaluator.for_model(shipped("diagonal-halfline"))
    np.testing.assert_array_equal(ev(0, 0.4), np.eye(4))
    np.testing.assert_array_equal(ev(-1, 0.4), np.zeros((4, 4)))


def test_scalar_recurrence(chebyshev):
    x = 0.3
    assert chebyshev(1, x)[0, 0] == pytest.approx(x)
    assert chebyshev(2, x)[0, 0] == pytest.approx(x * x - 1)
    assert chebyshev(3, x)[0, 0] == pytest.approx(x**3 - 2 * x)


def test_three_term_residual(shipped):
    ev = PolynomialEvaluator.for_model(shipped("diagonal-halfline-mixed"))
    for n in range(5):
        assert ev.residual(n, 0.7) < 1e-10


def test_complex_argument(chebyshev):
    assert chebyshev(2, 1j)[0, 0] == pytest.approx(-2.0)


def test_degree_limits(shipped):
    ev = PolynomialEvaluator(RecurrenceBlocks.from_model(shipped("diagonal-halfline")), max_degree=5)
    with pytest.raises(DimensionError):
        ev(6, 0.1)
    with pytest.raises(DimensionError):
        ev(-2, 0.1)


def test_singular_up_block():
    ev = PolynomialEvaluator(RecurrenceBlocks.constant([[1.0, 0.0], [0.0, 0.0]], np.eye(2), np.eye(2)))
    with pytest.raises(SingularBlockError) as info:
        ev(1, 0.5)
    assert info.value.site == 0
    assert info.value.block == "up"


def test_frozen_evaluator_gives_same_values(shipped):
    ev = PolynomialEvaluator.for_model(shipped("diagonal-halfline-mixed"))
    before = ev(3, 1.1)
    ev.freeze()
    np.testing.assert_allclose(ev(3, 1.1), before)
    np.testing.assert_allclose(ev(4, 2.5), PolynomialEvaluator.for_model(shipped("diagonal-halfline-mixed"))(4, 2.5))


def test_folded_family(shipped):
    ev = PolynomialEvaluator.for_model(shipped("diagonal-line"), Family.FOLDED)
    np.testing.assert_array_equal(eval_folded(ev, 0, 0.2), np.eye(8))
    assert ev.two_sided(-3, 0.2).shape == (8, 4)
    for n in range(1, 4):
        assert ev.residual(n, 0.9) < 1e-10


def test_folded_only_calls(chebyshev):
    with pytest.raises(DimensionError):
        chebyshev.two_sided(1, 0.0)
    with pytest.raises(DimensionError):
        eval_folded(chebyshev, 1, 0.0)


def test_symmetrizers_match_product_formula(shipped):
    model = shipped("diagonal-halfline-mixed")
    chain = compute_symmetrizers(model, range(6))
    for n in range(6):
        np.testing.assert_allclose(chain.norm(n), norm_by_product(model, n), rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(chain.potential(n) @ chain.norm(n), np.eye(4), atol=1e-10)
        np.testing.assert_allclose(chain.root(n) @ chain.root(n), chain.norm(n), rtol=1e-10, atol=1e-10)
        assert matcore.max_eigenvalue(chain.certificates[n]) <= 1e-9


def test_symmetrizers_on_negative_sites(shipped):
    chain = compute_symmetrizers(shipped("diagonal-line"), range(-4, 4))
    assert chain.sites == list(range(-4, 4))
    np.testing.assert_array_equal(chain.norm(0), np.eye(4))


def test_symmetrized_generator_is_hermitian(shipped):
    model = shipped("diagonal-finite-n2")
    j = symmetrize(assemble(model), compute_symmetrizers(model, range(3)))
    assert matcore.is_hermitian(j.dense(), 1e-10, relative=True)
    assert matcore.min_eigenvalue(j.dense()) > -1e-10


def test_non_scalar_root_hamiltonian_is_not_certified():
    model = CTOQWModel.build("halfline", np.eye(2), 2 * np.eye(2), hamiltonian=np.diag([1.0, -1.0]))
    report = check_dette(model, range(4))
    assert not report.certified
    assert report.site == 0
    assert "Hermitian" in report.reason
    with pytest.raises(CertificationError) as info:
        compute_symmetrizers(model, range(4))
    assert info.value.exit_code == 3


def test_certified_report(shipped):
    assert check_dette(shipped("noncommuting-4-site"), range(4)).certified


def test_empty_window(shipped):
    with pytest.raises(DimensionError):
        compute_symmetrizers(shipped("diagonal-halfline"), range(0))


def test_eval_poly_reads_the_evaluator(chebyshev):
    assert eval_poly(chebyshev, 4, 0.5)[0, 0] == pytest.approx(0.5**4 - 3 * 0.5**2 + 1)
