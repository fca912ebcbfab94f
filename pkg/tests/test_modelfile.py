import numpy as np
import pytest

from ctoqw_spectral import config
from ctoqw_spectral.errors import DensityError, ModelFileError
from ctoqw_spectral.lindblad import Boundary, VertexKind
from ctoqw_spectral.modelfile import encode_matrix, load_density, load_model, model_document, parse_model

MINIMAL = {
    "format": 1,
    "internal_dim": 2,
    "vertices": {"kind": "halfline"},
    "operators": {"up": {"default": [[1, 0], [0, 1]]}, "down": {"default": [[2, 0], [0, 2]]}},
}


def document(**changes):
    return {**MINIMAL, **changes}


@pytest.mark.parametrize("path", sorted(config.MODELS_DIR.glob("*.json")), ids=lambda p: p.stem)
def test_shipped_models_load(path):
    model = load_model(path)
    assert model.name == path.stem
    assert model.dim == 2


@pytest.mark.parametrize("path", sorted((config.MODELS_DIR / "states").glob("*.json")), ids=lambda p: p.stem)
def test_shipped_states_load(path):
    rho = load_density(path, 2)
    assert np.trace(rho.matrix).real == pytest.approx(1.0)


def test_defaults():
    model = parse_model(MINIMAL)
    assert model.kind == VertexKind.HALFLINE
    assert model.boundary == Boundary.REFLECTING
    assert not model.stay.default.any()
    assert not model.hamiltonian.default.any()


def test_name_falls_back_to_file_stem(write_json):
    assert load_model(write_json("my-walk.json", MINIMAL)).name == "my-walk"


def test_complex_entries_and_site_overrides():
    operators = {
        "up": {"default": [[1, 0], [0, 1]]},
        "down": {"default": [[1, 0], [0, 1]]},
        "hamiltonian": {"default": [[0, [0, -1]], [[0, 1], 0]], "sites": {"0": [[1, 0], [0, -1]]}},
    }
    model = parse_model(document(vertices={"kind": "line"}, operators=operators))
    np.testing.assert_allclose(model.hamiltonian.default, [[0, -1j], [1j, 0]])
    np.testing.assert_allclose(model.hamiltonian.at(0), np.diag([1, -1]))
    assert model.override_sites() == {0}


def test_unknown_key_names_its_path():
    bad = document(operators={**MINIMAL["operators"], "up": {"default": [[1, 0], [0, 1]], "extra": 1}})
    with pytest.raises(ModelFileError) as info:
        parse_model(bad)
    assert info.value.key == "operators.up.extra"
    assert info.value.exit_code == 2


def test_missing_required_key():
    bad = dict(MINIMAL)
    del bad["internal_dim"]
    with pytest.raises(ModelFileError, match="internal_dim"):
        parse_model(bad)


def test_unsupported_format():
    with pytest.raises(ModelFileError, match="format"):
        parse_model(document(format=2))


def test_syntax_error_reports_line_and_column(write_json):
    path = write_json("broken.json", '{\n  "format": 1,\n  "internal_dim": 2,,\n}')
    with pytest.raises(ModelFileError) as info:
        load_model(path)
    assert info.value.line == 3
    assert info.value.column is not None


def test_missing_file(tmp_path):
    with pytest.raises(ModelFileError, match="cannot read"):
        load_model(tmp_path / "absent.json")


@pytest.mark.parametrize(
    "vertices",
    [{"kind": "finite"}, {"kind": "finite", "sites": 0}, {"kind": "line", "sites": 3}, {"kind": "ring"}],
)
def test_vertex_set_validation(vertices):
    with pytest.raises(ModelFileError, match="vertices"):
        parse_model(document(vertices=vertices))


@pytest.mark.parametrize("entry", [True, "1", [1], [1, 2, 3], None])
def test_bad_matrix_entries(entry):
    with pytest.raises(ModelFileError):
        parse_model(document(operators={"up": {"default": [[entry, 0], [0, 1]]}, "down": MINIMAL["operators"]["down"]}))


def test_wrong_matrix_size():
    with pytest.raises(ModelFileError, match="expected 2 rows"):
        parse_model(document(operators={"up": {"default": [[1]]}}))


def test_non_hermitian_hamiltonian_is_a_file_error():
    operators = {**MINIMAL["operators"], "hamiltonian": {"default": [[0, 1], [0, 0]]}}
    with pytest.raises(ModelFileError, match="Hermitian"):
        parse_model(document(operators=operators))


def test_bad_site_label():
    operators = {**MINIMAL["operators"], "stay": {"default": [[0, 0], [0, 0]], "sites": {"first": [[1, 0], [0, 1]]}}}
    with pytest.raises(ModelFileError, match="integer"):
        parse_model(document(operators=operators))


def test_document_reparses_to_the_same_model(shipped):
    model = shipped("unitary-line-perturbed")
    again = parse_model(model_document(model, "copy"))
    assert again.kind == model.kind and again.boundary == model.boundary and again.name == model.name
    for name in ("up", "down", "stay", "hamiltonian"):
        original, copied = getattr(model, name), getattr(again, name)
        np.testing.assert_allclose(copied.default, original.default)
        assert set(copied.overrides) == set(original.overrides)


def test_encode_matrix_writes_plain_reals():
    assert encode_matrix(np.array([[1, 2j]])) == [[1.0, [0.0, 2.0]]]


def test_density_must_match_model_dimension(write_json):
    path = write_json("rho.json", {"format": 1, "rho": [[1, 0, 0], [0, 0, 0], [0, 0, 0]]})
    with pytest.raises(DensityError):
        load_density(path, 2)


@pytest.mark.parametrize(
    "rho",
    [[[1, 0], [0, 1]], [[1.5, 0], [0, -0.5]], [[0.5, 0.1], [0.3, 0.5]]],
    ids=["trace", "negative", "non-hermitian"],
)
def test_invalid_density(write_json, rho):
    path = write_json("rho.json", {"format": 1, "rho": rho})
    with pytest.raises(DensityError) as info:
        load_density(path, 2)
    assert info.value.exit_code == 4


def test_density_unknown_key(write_json):
    path = write_json("rho.json", {"format": 1, "rho": [[1, 0], [0, 0]], "site": 0})
    with pytest.raises(ModelFileError):
        load_density(path)


@pytest.mark.parametrize(
    "rho",
    ["identity", [], [[1, 0], [0]], [[1, "x"], [0, 0]], [[1, [0, 1, 2]], [0, 0]]],
    ids=["string", "empty", "ragged", "bad-entry", "bad-pair"],
)
def test_malformed_density_matrix(write_json, rho):
    path = write_json("rho.json", {"format": 1, "rho": rho})
    with pytest.raises(DensityError) as info:
        load_density(path, 2)
    assert info.value.exit_code == 4
