import math

import numpy as np
import pytest

from ctoqw_spectral.errors import DimensionError
from ctoqw_spectral.measures import Atom, DensityPiece, SpectralMeasure, integrate


def semicircle(x: float) -> np.ndarray:
    return np.array([[math.sqrt(max(0.0, 4 - x * x)) / (2 * math.pi)]])


def test_atoms_are_summed():
    measure = SpectralMeasure(1, [Atom(0.0, np.array([[0.25]])), Atom(2.0, np.array([[0.75]]))])
    np.testing.assert_allclose(measure.mass(), [[1.0]])
    np.testing.assert_allclose(integrate(measure, lambda x, w: x * w), [[1.5]])


def test_singular_piece_integrates_to_spectral_accuracy():
    measure = SpectralMeasure(1, pieces=[DensityPiece(-2.0, 2.0, semicircle)])
    assert measure.mass()[0, 0] == pytest.approx(1.0, abs=1e-12)
    # second moment of the semicircle is 1, fourth is 2
    assert integrate(measure, lambda x, w: x**2 * w)[0, 0] == pytest.approx(1.0, abs=1e-10)
    assert integrate(measure, lambda x, w: x**4 * w)[0, 0] == pytest.approx(2.0, abs=1e-10)


def test_inverse_square_root_edges():
    arcsine = DensityPiece(-1.0, 1.0, lambda x: np.array([[1 / (math.pi * math.sqrt(max(1e-300, 1 - x * x)))]]), (-0.5, -0.5))
    measure = SpectralMeasure(1, pieces=[arcsine])
    assert measure.mass()[0, 0] == pytest.approx(1.0, abs=1e-10)


def test_regular_piece():
    measure = SpectralMeasure(1, pieces=[DensityPiece(0.0, 1.0, lambda x: np.array([[3 * x * x]]), (0.0, 0.0))])
    assert not measure.pieces[0].singular
    assert measure.mass()[0, 0] == pytest.approx(1.0, abs=1e-12)


def test_bounds_and_intervals():
    measure = SpectralMeasure(
        1, [Atom(-0.5, np.array([[0.1]]))], [DensityPiece(1.0, 3.0, lambda x: np.array([[0.45]]), (0.0, 0.0))]
    )
    assert measure.lower_bound() == -0.5
    assert measure.upper_bound() == 3.0
    assert measure.intervals() == [(1.0, 3.0)]


def test_empty_measure_integrates_to_zero():
    np.testing.assert_array_equal(SpectralMeasure(2).mass(), np.zeros((2, 2)))


def test_sub_block():
    weight = np.array([[1.0, 2.0], [3.0, 4.0]])
    measure = SpectralMeasure(2, [Atom(1.0, weight)], [DensityPiece(0.0, 1.0, lambda x: weight, (0.0, 0.0))])
    corner = measure.block(slice(0, 1), slice(1, 2))
    assert corner.dim == 1
    np.testing.assert_allclose(corner.mass(), [[4.0]])


def test_piece_needs_positive_length():
    with pytest.raises(DimensionError):
        DensityPiece(1.0, 1.0, semicircle)
