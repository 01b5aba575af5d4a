import json
import struct

import numpy as np
import pytest

from grflab import (
    Grid,
    ScalarField,
    TensorField,
    load_snapshot,
    random_form_perturbation,
    random_metric_perturbation,
    read_snapshot_header,
    save_snapshot,
)
from grflab.errors import SnapshotError
from grflab.snapshots import SNAPSHOT_MAGIC


@pytest.fixture
def sample(tmp_path):
    grid = Grid((8, 8, 8))
    fields = {
        "g": random_metric_perturbation(grid, 0.1, seed=1),
        "b": random_form_perturbation(grid, 0.2, seed=2),
        "f": ScalarField(grid, np.sin(grid.coordinate_arrays()[0])
                         * np.ones(grid.shape)),
    }
    path = tmp_path / "state.snap"
    save_snapshot(path, fields)
    return grid, fields, path


def test_round_trip(sample):
    grid, fields, path = sample
    loaded_grid, loaded = load_snapshot(path)
    assert loaded_grid == grid
    assert set(loaded) == set(fields)
    for name in fields:
        assert np.array_equal(loaded[name].values, fields[name].values)
    assert loaded["g"].symmetry == "symmetric2"
    assert loaded["b"].symmetry == "antisymmetric"
    assert isinstance(loaded["f"], ScalarField)


def test_header_readable_without_payload(sample):
    _, fields, path = sample
    header = read_snapshot_header(path)
    assert header["grid"]["resolutions"] == [8, 8, 8]
    names = [e["name"] for e in header["fields"]]
    assert names == list(fields)
    by_name = {e["name"]: e for e in header["fields"]}
    assert by_name["g"]["rank"] == 2
    assert by_name["g"]["component_count"] == 9
    assert by_name["f"]["rank"] == 0
    assert by_name["f"]["component_count"] == 1


def test_save_is_deterministic(sample, tmp_path):
    _, fields, path = sample
    again = tmp_path / "again.snap"
    save_snapshot(again, fields)
    assert path.read_bytes() == again.read_bytes()


def test_empty_field_dict_rejected(tmp_path):
    with pytest.raises(SnapshotError):
        save_snapshot(tmp_path / "empty.snap", {})


def test_mixed_grids_rejected(tmp_path):
    a = Grid((8, 8, 8))
    b = Grid((12, 12, 12))
    fields = {
        "x": ScalarField(a, np.zeros(a.shape)),
        "y": ScalarField(b, np.zeros(b.shape)),
    }
    with pytest.raises(SnapshotError):
        save_snapshot(tmp_path / "mixed.snap", fields)


def test_bad_magic_rejected(sample):
    _, _, path = sample
    raw = bytearray(path.read_bytes())
    raw[:8] = b"NOTASNAP"
    path.write_bytes(bytes(raw))
    with pytest.raises(SnapshotError, match="magic"):
        read_snapshot_header(path)


def test_truncated_payload_rejected(sample):
    _, _, path = sample
    raw = path.read_bytes()
    path.write_bytes(raw[:-100])
    with pytest.raises(SnapshotError, match="payload mismatch"):
        load_snapshot(path)


def test_trailing_bytes_rejected(sample):
    _, _, path = sample
    path.write_bytes(path.read_bytes() + b"\x00" * 16)
    with pytest.raises(SnapshotError, match="payload mismatch"):
        load_snapshot(path)


def test_corrupt_header_rejected(sample):
    _, _, path = sample
    raw = path.read_bytes()
    (hlen,) = struct.unpack("<Q", raw[8:16])
    body = bytearray(raw)
    body[16:16 + 4] = b"\xff\xfe\x00\x00"   # stomp the JSON
    path.write_bytes(bytes(body))
    with pytest.raises(SnapshotError, match="payload mismatch"):
        read_snapshot_header(path)


def test_component_count_mismatch_rejected(sample, tmp_path):
    _, _, path = sample
    raw = path.read_bytes()
    (hlen,) = struct.unpack("<Q", raw[8:16])
    header = json.loads(raw[16:16 + hlen].decode())
    header["fields"][0]["component_count"] = 5
    blob = json.dumps(header, sort_keys=True).encode()
    out = tmp_path / "tampered.snap"
    out.write_bytes(SNAPSHOT_MAGIC + struct.pack("<Q", len(blob)) + blob
                    + raw[16 + hlen:])
    with pytest.raises(SnapshotError, match="payload mismatch"):
        load_snapshot(out)


def test_symmetry_revalidated_on_load(sample, tmp_path):
    # stomp an off-diagonal entry of the symmetric payload so the declared
    # tag no longer holds at the first grid point
    _, fields, path = sample
    raw = bytearray(path.read_bytes())
    (hlen,) = struct.unpack("<Q", bytes(raw[8:16]))
    start = 16 + hlen + 8   # skip to component (0, 1) of field "g"
    raw[start:start + 8] = struct.pack("<d", 1e9)
    path.write_bytes(bytes(raw))
    from grflab.errors import FieldError
    with pytest.raises(FieldError):
        load_snapshot(path)
