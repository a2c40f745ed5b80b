from __future__ import annotations

import json

import numpy as np
import pytest

from rgbdsde.basis import build_basis
from rgbdsde.errors import ConfigurationError
from rgbdsde.io import MAGIC, load_batch, save_batch, write_csv, write_json
from rgbdsde.models import two_atom_chars
from rgbdsde.paths import TimeGrid, simulate_batch


@pytest.mark.parametrize("backward", ["independent", "common"])
def test_batch_round_trip(tmp_path, backward):
    chars = two_atom_chars()
    basis = build_basis(chars)
    batch = simulate_batch(chars, basis, TimeGrid.uniform(0, 1, 7), 40, seed=9, backward=backward)
    path = tmp_path / "b.lbds"
    save_batch(batch, path)
    raw = path.read_bytes()
    assert raw[:5] == MAGIC
    back = load_batch(path)
    for name in ("counts", "dW", "dB", "dH", "L", "compensator", "drift_int", "ev_time", "ev_path"):
        assert np.array_equal(getattr(batch, name), getattr(back, name)), name
    assert back.backward_mode == backward and back.seed == 9
    assert np.array_equal(back.grid.nodes, batch.grid.nodes)


def test_bad_magic_and_truncation(tmp_path):
    p = tmp_path / "x.lbds"
    p.write_bytes(b"NOPE!" + bytes(64))
    with pytest.raises(ConfigurationError):
        load_batch(p)
    chars = two_atom_chars()
    basis = build_basis(chars)
    save_batch(simulate_batch(chars, basis, TimeGrid.uniform(0, 1, 3), 5, seed=1), p)
    p.write_bytes(p.read_bytes()[:-8])
    with pytest.raises(ConfigurationError):
        load_batch(p)


def test_writers_are_deterministic(tmp_path):
    rows = [[1, 0.1, np.float64(2.5)], [2, 1e-17, -3.0]]
    write_csv(tmp_path / "a.csv", ["i", "x", "y"], rows)
    write_csv(tmp_path / "b.csv", ["i", "x", "y"], rows)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    write_json(tmp_path / "a.json", {"b": np.arange(3), "a": np.float64(0.5), "flag": np.bool_(True)})
    data = json.loads((tmp_path / "a.json").read_text())
    assert data == {"a": 0.5, "b": [0, 1, 2], "flag": True}
