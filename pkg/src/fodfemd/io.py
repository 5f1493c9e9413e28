"""Text file formats: fODF documents, signal tables, voxel datasets, reports.

All writers go through `atomic_write`, so an interrupted run never leaves
a half-written file behind.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .fodf import DiscreteFodf, GridFodf
from .geometry import sample_grid
from .signal import AcquisitionScheme, SignalSet

__all__ = [
    "LOAD_TOL",
    "FormatError",
    "atomic_write",
    "fodf_to_dict",
    "fodf_from_dict",
    "read_fodf",
    "write_fodf",
    "read_signal",
    "write_signal",
    "read_directions",
    "read_voxels",
    "write_json",
]

LOAD_TOL = 1e-6


class FormatError(ValueError):
    """A file does not follow the expected layout."""


def atomic_write(path, text):
    """Write `text` to `path` via a temporary file and an atomic rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _dumps(obj):
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


def write_json(path, obj):
    atomic_write(path, _dumps(dict(obj, version=__version__)))


def _load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON ({exc})") from None


# -- fODF documents ----------------------------------------------------------


def _normalize(w, where):
    w = np.asarray(w, dtype=float)
    if w.ndim != 1 or len(w) == 0:
        raise FormatError(f"{where}: weights must be a non-empty list")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise FormatError(f"{where}: weights must be finite and nonnegative")
    total = w.sum()
    if abs(total - 1.0) > LOAD_TOL:
        raise FormatError(f"{where}: weights sum to {total:.12g}, expected 1")
    return w / total


def fodf_to_dict(f):
    """``{"grid_p", "weights"}`` for fODFs on a standard grid, else ``{"atoms"}``."""
    if isinstance(f, GridFodf) and f.grid == sample_grid(f.grid.p):
        return {"grid_p": f.grid.p, "weights": [float(x) for x in f.weights]}
    if isinstance(f, GridFodf):
        keep = f.weights > 0
        dirs, w = f.grid.points[keep], f.weights[keep]
    else:
        dirs, w = f.dirs, f.weights
    return {"atoms": [{"dir": [float(c) for c in d], "w": float(x)} for d, x in zip(dirs, w)]}


def fodf_from_dict(doc, where="fODF"):
    if not isinstance(doc, dict):
        raise FormatError(f"{where}: expected an object")
    if "atoms" in doc:
        atoms = doc["atoms"]
        if not isinstance(atoms, list) or not atoms:
            raise FormatError(f"{where}: 'atoms' must be a non-empty list")
        try:
            dirs = np.array([a["dir"] for a in atoms], dtype=float)
            w = [a["w"] for a in atoms]
        except (KeyError, TypeError, ValueError):
            raise FormatError(f"{where}: each atom needs 'dir' [x, y, z] and 'w'") from None
        if dirs.shape != (len(atoms), 3):
            raise FormatError(f"{where}: atom directions must have three components")
        return DiscreteFodf(dirs, _normalize(w, where))
    if "grid_p" in doc and "weights" in doc:
        p = doc["grid_p"]
        if not isinstance(p, int) or p < 1:
            raise FormatError(f"{where}: grid_p must be a positive integer")
        w = _normalize(doc["weights"], where)
        if len(w) != p:
            raise FormatError(f"{where}: expected {p} weights, got {len(w)}")
        return GridFodf(sample_grid(p), w)
    raise FormatError(f"{where}: needs either 'atoms' or 'grid_p' + 'weights'")


def read_fodf(path):
    return fodf_from_dict(_load_json(path), str(path))


def write_fodf(path, f, **meta):
    doc = fodf_to_dict(f)
    if meta:
        doc["meta"] = meta
    write_json(path, doc)


# -- signal tables -------------------------------------------------------------

SIGNAL_COLUMNS = ("bx", "by", "bz", "y")


def _read_table(path, required):
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    meta = {}
    body = []
    for line in lines:
        if line.startswith("#"):
            if not body:
                try:
                    meta = json.loads(line[1:])
                except json.JSONDecodeError:
                    pass
            continue
        if line.strip():
            body.append(line)
    if not body:
        raise FormatError(f"{path}: empty table")
    rows = list(csv.reader(body))
    header = [h.strip().lower() for h in rows[0]]
    missing = [c for c in required if c not in header]
    if missing:
        raise FormatError(f"{path}: header must contain {', '.join(required)} (missing {missing})")
    cols = [header.index(c) for c in required]
    try:
        data = np.array([[float(r[c]) for c in cols] for r in rows[1:]], dtype=float)
    except (ValueError, IndexError) as exc:
        raise FormatError(f"{path}: malformed row ({exc})") from None
    if len(data) == 0:
        raise FormatError(f"{path}: no data rows")
    return data, meta


def read_directions(path):
    """Measurement directions from a table with bx, by, bz columns."""
    data, _ = _read_table(path, SIGNAL_COLUMNS[:3])
    return _unit_rows(data, path)


def _unit_rows(d, path):
    # rows already unit to within roundoff are kept bit-for-bit
    norms = np.linalg.norm(d, axis=1)
    if np.any(norms == 0):
        raise FormatError(f"{path}: zero-length direction")
    fix = np.abs(norms - 1.0) > 1e-12
    d = d.copy()
    d[fix] /= norms[fix, None]
    return d


def read_signal(path, kappa=None, s0=None, sigma2=None):
    """Load a signal table.

    Acquisition constants not given explicitly are taken from the file's
    metadata line; `kappa` must come from one or the other.

    Returns
    -------
    SignalSet, dict
        The signal and the file metadata.
    """
    data, meta = _read_table(path, SIGNAL_COLUMNS)
    kappa = kappa if kappa is not None else meta.get("kappa")
    if kappa is None:
        raise FormatError(f"{path}: kappa not recorded in the file; pass it explicitly")
    s0 = s0 if s0 is not None else meta.get("s0", 1.0)
    sigma2 = sigma2 if sigma2 is not None else meta.get("sigma2", 0.0)
    dirs = _unit_rows(data[:, :3], path)
    scheme = AcquisitionScheme(dirs, float(kappa), float(s0), float(sigma2))
    return SignalSet(scheme, data[:, 3]), meta


def write_signal(path, signal, **meta):
    sch = signal.scheme
    meta = dict(meta, kappa=sch.kappa, s0=sch.s0, sigma2=sch.sigma2, version=__version__)
    buf = io.StringIO()
    buf.write("# " + json.dumps(meta, sort_keys=True, separators=(",", ":")) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SIGNAL_COLUMNS)
    for d, y in zip(sch.meas_dirs, signal.y):
        w.writerow([repr(float(c)) for c in d] + [repr(float(y))])
    atomic_write(path, buf.getvalue())


# -- voxel datasets --------------------------------------------------------------


def read_voxels(path):
    """Voxel document ``{"dirs": n x 3, "voxels": [{"id", "y1", "y2"?}, ...]}``."""
    doc = _load_json(path)
    if not isinstance(doc, dict) or "dirs" not in doc or "voxels" not in doc:
        raise FormatError(f"{path}: needs 'dirs' and 'voxels'")
    dirs = np.asarray(doc["dirs"], dtype=float)
    if dirs.ndim != 2 or dirs.shape[1] != 3 or len(dirs) == 0:
        raise FormatError(f"{path}: 'dirs' must be an n x 3 array")
    if not isinstance(doc["voxels"], list):
        raise FormatError(f"{path}: 'voxels' must be a list")
    return doc
