"""Binary snapshot files for grids of named fields.

Layout: 8 ASCII magic bytes ("GRFSNAP1"), a little-endian uint64 header
length, a UTF-8 JSON header describing the grid and the field table, then one
raw float64 little-endian payload per field in header order, C-contiguous
over grid indices then component indices.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import SnapshotError
from .lattice import Grid, ScalarField, TensorField

SNAPSHOT_MAGIC = b"GRFSNAP1"


def _field_entry(name, fld):
    rank = 0 if isinstance(fld, ScalarField) else fld.rank
    symmetry = "scalar" if isinstance(fld, ScalarField) else fld.symmetry
    return {
        "name": name,
        "rank": rank,
        "symmetry": symmetry,
        "component_count": fld.grid.n_dims ** rank,
    }


def save_snapshot(path, fields):
    """Write named fields (a dict name -> field) sharing one grid to disk."""
    if not fields:
        raise SnapshotError("snapshot requires at least one field")
    items = list(fields.items())
    grid = items[0][1].grid
    for name, fld in items:
        if fld.grid != grid:
            raise SnapshotError(f"field {name!r} lives on a different grid")
    header = {
        "grid": {
            "dims": grid.n_dims,
            "resolutions": list(grid.resolutions),
            "periods": list(grid.periods),
        },
        "fields": [_field_entry(name, fld) for name, fld in items],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(SNAPSHOT_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for _, fld in items:
            fh.write(np.ascontiguousarray(fld.values, dtype="<f8").tobytes())


def read_snapshot_header(path):
    """Parse and validate the snapshot header without loading payloads."""
    with open(path, "rb") as fh:
        magic = fh.read(len(SNAPSHOT_MAGIC))
        if magic != SNAPSHOT_MAGIC:
            raise SnapshotError(f"bad magic: expected {SNAPSHOT_MAGIC!r}, got {magic!r}")
        raw_len = fh.read(8)
        if len(raw_len) != 8:
            raise SnapshotError("bad magic: truncated header length")
        (hlen,) = struct.unpack("<Q", raw_len)
        blob = fh.read(hlen)
        if len(blob) != hlen:
            raise SnapshotError("payload mismatch: truncated JSON header")
        try:
            header = json.loads(blob.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise SnapshotError(f"payload mismatch: unreadable header ({exc})") from exc
    for key in ("grid", "fields"):
        if key not in header:
            raise SnapshotError(f"payload mismatch: header missing {key!r}")
    return header


def load_snapshot(path):
    """Load a snapshot, returning (grid, dict name -> field).

    The byte count of every payload is checked against the header before any
    field is constructed; a short or long file fails with "payload mismatch".
    """
    header = read_snapshot_header(path)
    ginfo = header["grid"]
    grid = Grid(tuple(ginfo["resolutions"]), tuple(ginfo["periods"]))
    if int(ginfo["dims"]) != grid.n_dims:
        raise SnapshotError("payload mismatch: dims disagrees with resolutions")
    with open(path, "rb") as fh:
        fh.seek(len(SNAPSHOT_MAGIC))
        (hlen,) = struct.unpack("<Q", fh.read(8))
        fh.seek(len(SNAPSHOT_MAGIC) + 8 + hlen)
        payload = fh.read()
    out = {}
    cursor = 0
    n = grid.n_dims
    for entry in header["fields"]:
        name = entry["name"]
        rank = int(entry["rank"])
        symmetry = entry["symmetry"]
        declared = int(entry["component_count"])
        if declared != n ** rank:
            raise SnapshotError(
                f"payload mismatch: field {name!r} declares {declared} components, "
                f"rank {rank} implies {n ** rank}"
            )
        count = grid.point_count * declared
        nbytes = count * 8
        chunk = payload[cursor:cursor + nbytes]
        if len(chunk) != nbytes:
            raise SnapshotError(
                f"payload mismatch: field {name!r} needs {nbytes} bytes, "
                f"{len(chunk)} available"
            )
        cursor += nbytes
        arr = np.frombuffer(chunk, dtype="<f8").reshape(grid.shape + (n,) * rank)
        if rank == 0:
            out[name] = ScalarField(grid, arr)
        else:
            out[name] = TensorField(grid, arr, symmetry)
    if cursor != len(payload):
        raise SnapshotError(
            f"payload mismatch: {len(payload) - cursor} trailing bytes"
        )
    return grid, out
