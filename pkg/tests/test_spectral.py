import math

import numpy as np
import pytest

from ctoqw_spectral import matcore
from ctoqw_spectral.errors import CertificationError, DimensionError
from ctoqw_spectral.lindblad import BlockTridiagonal, assemble
from ctoqw_spectral.measures import Atom, SpectralMeasure
from ctoqw_spectral.orthopoly import compute_symmetrizers, symmetrize
from ctoqw_spectral.spectral import (
    constant_tail,
    duran_weight,
    finite_model_measure,
    finite_spectral_measure,
    fold_line_model,
    halfline_transform,
    hankel_check,
    measure_frame,
    model_measure,
    orthogonality_check,
    perturb_first_block,
    psd_defect,
    quadrature,
    site_transform,
    transform_frame,
)
from ctoqw_spectral.stieltjes import (
    DuranTransform,
    PerturbedTransform,
    TailResolventTransform,
    TruncatedResolvent,
    fold_identities,
    truncated_resolvent,
)


def single_site(values) -> BlockTridiagonal:
    return BlockTridiagonal(0, (np.diag(np.asarray(values, dtype=float)).astype(complex),), (), ())


def test_degenerate_eigenvalues_merge_into_one_atom():
    measure = finite_spectral_measure(single_site([1.0, 1.0, 2.0, 3.0]))
    assert [a.location for a in measure.atoms] == pytest.approx([1.0, 2.0, 3.0])
    assert [a.multiplicity for a in measure.atoms] == [2, 1, 1]
    np.testing.assert_allclose(measure.atoms[0].weight, np.diag([1.0, 1.0, 0.0, 0.0]), atol=1e-14)
    assert measure.diagnostics == []


def test_guard_band_is_reported():
    measure = finite_spectral_measure(single_site([1.0, 1.0 + 5e-8, 2.0, 3.0]))
    assert len(measure.atoms) == 4
    assert len(measure.diagnostics) == 1
    assert "guard band" in measure.diagnostics[0]


def test_non_hermitian_jacobi_matrix_is_rejected():
    bt = BlockTridiagonal(0, (np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex),), (), ())
    with pytest.raises(DimensionError):
        finite_spectral_measure(bt)


def test_idle_site_is_a_unit_atom_at_zero(shipped):
    measure = finite_model_measure(shipped("single-site-idle")).measure
    assert len(measure.atoms) == 1
    assert measure.atoms[0].location == pytest.approx(0.0, abs=1e-14)
    assert measure.atoms[0].multiplicity == 4
    np.testing.assert_allclose(measure.atoms[0].weight, np.eye(4), atol=1e-14)


def test_absorbing_site_decay_rates(shipped):
    measure = finite_model_measure(shipped("single-site-absorbing")).measure
    assert [a.location for a in measure.atoms] == pytest.approx([2.0, 3.0, 4.0])
    np.testing.assert_allclose(measure.atoms[1].weight, np.diag([0.0, 1.0, 1.0, 0.0]), atol=1e-14)


def test_finite_measure_is_normalized_and_orthogonalizes(shipped):
    certified = finite_model_measure(shipped("diagonal-finite-n2"))
    measure = certified.measure
    np.testing.assert_allclose(measure.mass(), np.eye(4), atol=1e-12)
    assert psd_defect(measure) > -1e-12
    gram = orthogonality_check(measure, certified.polys, 2, certified.chain)
    assert gram.passed(1e-8)


def test_hankel_matrices_are_positive(shipped):
    check = hankel_check(finite_model_measure(shipped("noncommuting-4-site")).measure, 2)
    assert len(check.moments) == 5
    assert all(check.positive)
    np.testing.assert_allclose(check.moments[0], np.eye(4), atol=1e-12)


def test_quadrature_of_scalar_function(shipped):
    measure = finite_model_measure(shipped("single-site-absorbing")).measure
    value = quadrature(measure, lambda x: math.exp(-x))
    np.testing.assert_allclose(value, np.diag(np.exp([-2.0, -3.0, -3.0, -4.0])), atol=1e-14)


def test_semicircle_weight():
    measure = duran_weight([[1.0]], [[0.0]])
    assert measure.intervals() == [pytest.approx((-2.0, 2.0))]
    assert measure.mass()[0, 0] == pytest.approx(1.0, abs=1e-10)
    assert measure.pieces[0].density(0.0)[0, 0] == pytest.approx(1 / math.pi)


def test_block_duran_weight_is_normalized():
    a = np.array([[2.0, 0.5], [0.5, 1.0]])
    b = np.array([[0.0, 1.0], [1.0, 3.0]])
    measure = duran_weight(a, b)
    np.testing.assert_allclose(measure.mass(), np.eye(2), atol=1e-7)
    assert psd_defect(measure) > -1e-12


def test_duran_weight_needs_positive_definite_coupling():
    with pytest.raises(DimensionError):
        duran_weight([[1.0, 0.0], [0.0, -1.0]], np.zeros((2, 2)))


def test_constant_tail_detection(shipped):
    tail = constant_tail(shipped("diagonal-halfline-mixed"))
    assert tail is not None
    assert matcore.min_eigenvalue(tail.a) > 0
    assert constant_tail(shipped("diagonal-line")) is None


def test_halfline_route_selection(shipped):
    model = shipped("diagonal-halfline")
    assert isinstance(halfline_transform(model), (DuranTransform, PerturbedTransform))
    assert isinstance(halfline_transform(model, "tail"), TailResolventTransform)
    with pytest.raises(ValueError):
        halfline_transform(model, "chebyshev")
    with pytest.raises(CertificationError):
        halfline_transform(shipped("unitary-halfline-perturbed"), "duran")


@pytest.mark.parametrize("method", ["duran", "tail"])
def test_root_transform_matches_truncated_resolvent(shipped, method):
    model = shipped("diagonal-halfline-mixed")
    ev = halfline_transform(model, method)
    bt = assemble(model, range(200))
    for z in (-0.5, -2.0, 1.0 + 1.0j):
        np.testing.assert_allclose(ev(z), truncated_resolvent(bt, 0, z), atol=1e-9)


def test_perturbed_root_agrees_with_tail_route(shipped):
    model = shipped("unitary-halfline-perturbed")
    bt = assemble(model, range(200))
    ev, pi = site_transform(model, 0)
    np.testing.assert_allclose(pi @ ev(-1.0), truncated_resolvent(bt, 0, -1.0), atol=1e-9)


def test_perturbation_of_measure_transform():
    base = duran_weight([[1.0]], [[0.0]])
    perturbed = perturb_first_block(base, [[0.5]])
    closed = perturb_first_block(DuranTransform([[1.0]], [[0.0]]), [[0.5]])
    assert perturbed(-3.0)[0, 0] == pytest.approx(closed(-3.0)[0, 0], abs=1e-7)


@pytest.mark.parametrize("site", [0, -1])
def test_line_site_transforms(shipped, site):
    model = shipped("diagonal-line")
    ev, pi = site_transform(model, site)
    bt = assemble(model, range(-150, 150))
    for z in (-0.3, -1.5):
        np.testing.assert_allclose(pi @ ev(z), truncated_resolvent(bt, site, z), atol=1e-9)


def test_site_transform_site_limits(shipped):
    with pytest.raises(DimensionError):
        site_transform(shipped("diagonal-halfline"), 1)
    with pytest.raises(DimensionError):
        site_transform(shipped("diagonal-line"), 2)
    with pytest.raises(DimensionError):
        site_transform(shipped("diagonal-finite-n2"), 5)


def test_finite_site_transform_is_a_resolvent_block(shipped):
    model = shipped("diagonal-finite-n2")
    ev, pi = site_transform(model, 1)
    dense = assemble(model).dense()
    full = np.linalg.inv(-0.7 * np.eye(12) + dense)
    np.testing.assert_allclose(pi @ ev(-0.7), full[4:8, 4:8], atol=1e-12)


def test_model_measure_dispatch(shipped):
    assert model_measure(shipped("single-site-idle")).transform is None


def test_measure_frame_layout():
    measure = SpectralMeasure(1, [Atom(0.5, np.array([[1.0]]), 2)], duran_weight([[1.0]], [[0.0]]).pieces)
    frame = measure_frame(measure, samples=10)
    assert list(frame.columns) == ["kind", "x", "multiplicity", "re_0_0", "im_0_0"]
    assert (frame["kind"] == "atom").sum() == 1
    assert (frame["kind"] == "density").sum() == 10


def test_transform_frame_layout():
    frame = transform_frame(DuranTransform([[1.0]], [[0.0]]), [-3.0, 1j])
    assert list(frame.columns) == ["re_z", "im_z", "re_0_0", "im_0_0"]
    assert frame.loc[0, "re_0_0"] == pytest.approx((math.sqrt(5) - 3) / 2)


def test_symmetrized_window_of_halfline(shipped):
    model = shipped("diagonal-halfline")
    window = range(12)
    measure = finite_spectral_measure(symmetrize(assemble(model, window), compute_symmetrizers(model, window)))
    np.testing.assert_allclose(measure.mass(), np.eye(4), atol=1e-12)


@pytest.mark.parametrize("name", ["diagonal-line", "unitary-line-perturbed"])
def test_fold_identities_rebuild_the_line_resolvent(shipped, name):
    model = shipped(name)
    folded = fold_line_model(model)
    views = fold_identities(folded.b_plus, folded.b_minus, folded.a_minus1, folded.c0, pi_minus1=folded.pi_minus1)
    bt = assemble(model, range(-150, 150))
    for z in (-0.8, -2.5):
        np.testing.assert_allclose(views[(1, 1)](z), TruncatedResolvent(bt, 0)(z), atol=1e-9)
        np.testing.assert_allclose(views[(1, 2)](z), TruncatedResolvent(bt, 0, -1)(z), atol=1e-9)
        np.testing.assert_allclose(folded.pi_minus1 @ views[(2, 1)](z), TruncatedResolvent(bt, -1, 0)(z), atol=1e-9)
        np.testing.assert_allclose(folded.pi_minus1 @ views[(2, 2)](z), TruncatedResolvent(bt, -1)(z), atol=1e-9)
