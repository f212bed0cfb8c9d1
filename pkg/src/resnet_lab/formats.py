"""Portable text formats for parameter tables, run manifests and plot data.

ParamGrid files are CSV with header ``l,m,c0..c{k-1}`` plus a JSON sidecar
``{L, M, k, family, tau}``; ensemble files use ``j,m,c0..`` and
``{N_t, M, k, family, tau}``.  The sidecar sits next to the CSV with the
``.json`` suffix.  ``m`` is 1-based in files, matching the usual
``m = 1..M`` labelling; ``l`` and ``j`` are 0-based.
"""

from __future__ import annotations

import csv
import hashlib
import json
import platform
from pathlib import Path

import numpy as np

from . import __version__
from .activation import ActivationFamily
from .continuum import ParamPathEnsemble
from .discrete import ParamGrid
from .errors import ParseError


def sidecar_path(path):
    return Path(path).with_suffix(".json")


def _write_table(path, first, values, meta):
    T, M, k = values.shape
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([first, "m"] + [f"c{i}" for i in range(k)])
        for a in range(T):
            for m in range(M):
                w.writerow([a, m + 1] + [repr(float(v)) for v in values[a, m]])
    sidecar_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _read_table(path, first, count_key):
    path = Path(path)
    side = sidecar_path(path)
    try:
        meta = json.loads(side.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ParseError(f"missing sidecar {side}") from None
    except json.JSONDecodeError as exc:
        raise ParseError(f"bad sidecar {side}: {exc}") from None
    for key in (count_key, "M", "k"):
        if key not in meta:
            raise ParseError(f"sidecar {side} lacks key {key!r}")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError(f"{path} is empty")
    k = int(meta["k"])
    expected = [first, "m"] + [f"c{i}" for i in range(k)]
    if rows[0] != expected:
        raise ParseError(f"{path}: header {rows[0]!r} does not match {first},m,c0..c{k - 1}", row=0)
    T = int(meta[count_key]) + (1 if count_key == "N_t" else 0)
    M = int(meta["M"])
    out = np.full((T, M, k), np.nan)
    for i, row in enumerate(rows[1:], start=1):
        if len(row) != k + 2:
            raise ParseError(f"{path} row {i}: expected {k + 2} columns, got {len(row)}", row=i)
        try:
            a, m = int(row[0]), int(row[1]) - 1
            out[a, m] = [float(v) for v in row[2:]]
        except (ValueError, IndexError) as exc:
            raise ParseError(f"{path} row {i}: {exc}", row=i) from None
    if np.isnan(out).any():
        raise ParseError(f"{path}: table is incomplete")
    return out, meta


def _family_meta(family: ActivationFamily):
    return {"family": family.kind, "tau": family.tau, "d": family.d}


def family_from_meta(meta):
    return ActivationFamily(kind=meta["family"], d=int(meta["d"]), tau=float(meta.get("tau", 1.0)))


def save_grid(grid: ParamGrid, family: ActivationFamily, path):
    meta = {"L": grid.L, "M": grid.M, "k": grid.k, **_family_meta(family)}
    _write_table(path, "l", grid.theta, meta)


def load_grid(path):
    values, meta = _read_table(path, "l", "L")
    return ParamGrid(values), meta


def save_ensemble(ens: ParamPathEnsemble, family: ActivationFamily, path):
    meta = {"N_t": ens.n_intervals, "M": ens.M, "k": ens.k, **_family_meta(family)}
    _write_table(path, "j", ens.values, meta)


def load_ensemble(path):
    values, meta = _read_table(path, "j", "N_t")
    return ParamPathEnsemble(values), meta


def config_hash(config) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


def module_versions():
    import matplotlib
    import scipy

    return {
        "resnet_lab": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "matplotlib": matplotlib.__version__,
        "python": platform.python_version(),
    }


def manifest(config, seed, dataset=None, **extra):
    out = {
        "config_hash": config_hash(config),
        "seed": seed,
        "module_versions": module_versions(),
        "dataset_checksum": dataset.checksum() if dataset is not None else None,
        "config": config,
    }
    out.update(extra)
    return out


def write_json(obj, path):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n", encoding="utf-8")


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def write_gnuplot(path, columns, rows, comment=None):
    """Whitespace-separated columns with a ``#`` header, as gnuplot expects."""
    with open(path, "w", encoding="utf-8") as fh:
        if comment:
            for line in comment.splitlines():
                fh.write(f"# {line}\n")
        fh.write("# " + " ".join(columns) + "\n")
        for row in rows:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def write_csv(path, columns, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])
