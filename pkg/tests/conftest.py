import json

import numpy as np
import pytest

from ctoqw_spectral import config
from ctoqw_spectral.modelfile import load_model


@pytest.fixture
def shipped():
    """Loader for the model files under ctoqw_spectral/models."""

    def load(name: str):
        return load_model(config.MODELS_DIR / f"{name}.json")

    return load


@pytest.fixture(autouse=True)
def output_dir(tmp_path, monkeypatch):
    """Keep CLI output out of the working tree."""
    out = tmp_path / "output"
    monkeypatch.setattr(config, "OUTPUT_DIR", out)
    return out


@pytest.fixture
def write_json(tmp_path):
    def write(name: str, document) -> str:
        path = tmp_path / name
        if isinstance(document, str):
            path.write_text(document, encoding="utf-8")
        else:
            path.write_text(json.dumps(document), encoding="utf-8")
        return str(path)

    return write


@pytest.fixture
def rng():
    return np.random.default_rng(7)
