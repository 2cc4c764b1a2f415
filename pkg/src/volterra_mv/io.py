"""Ensemble persistence: CSV or little-endian binary plus a JSON metadata sidecar.

Both layouts hold one row per (particle, time, component), particle-major,
with columns ``t, particle, component, X, A, M``.  CSV values are written
with 17 significant digits, so doubles survive a round trip exactly.
"""

import hashlib
import json
import os

import numpy as np

from . import __version__
from .errors import ConfigError, GridMismatch
from .solver import Partition, ParticleEnsemble

COLUMNS = ("t", "particle", "component", "X", "A", "M")
SIDECAR = "ensemble.json"


def ensemble_table(ensemble):
    N, M1, d = ensemble.X.shape
    n, j, c = np.meshgrid(np.arange(N), np.arange(M1), np.arange(d), indexing="ij")
    return np.column_stack([
        ensemble.times[j].ravel(), n.ravel().astype(float), c.ravel().astype(float),
        ensemble.X.ravel(), ensemble.A.ravel(), ensemble.Mart.ravel(),
    ])


def file_digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_ensemble(ensemble, directory, fmt="csv", extra=None):
    """Write the ensemble table and its sidecar; returns the sidecar path."""
    os.makedirs(directory, exist_ok=True)
    table = ensemble_table(ensemble)
    if fmt == "csv":
        data_name = "ensemble.csv"
        np.savetxt(os.path.join(directory, data_name), table, fmt="%.17g", delimiter=",",
                   header=",".join(COLUMNS), comments="")
        layout = {"format": "csv", "header": ",".join(COLUMNS)}
    elif fmt == "bin":
        data_name = "ensemble.bin"
        np.ascontiguousarray(table, dtype="<f8").tofile(os.path.join(directory, data_name))
        layout = {"format": "bin", "dtype": "<f8", "order": "row-major", "shape": list(table.shape),
                  "columns": list(COLUMNS)}
        write_json(os.path.join(directory, data_name + ".json"), layout)
    else:
        raise ConfigError(f"unknown output format {fmt!r}")
    labels = ensemble.labels
    default_labels = labels is None or np.array_equal(labels, np.arange(ensemble.N))
    meta = {
        "tool_version": __version__,
        "data_file": data_name,
        "data_sha256": file_digest(os.path.join(directory, data_name)),
        "layout": layout,
        "N": ensemble.N,
        "M": ensemble.partition.M,
        "d": ensemble.d,
        "m": int(ensemble.dW.shape[2]),
        "times": [float(t) for t in ensemble.times],
        "noise_times": None if ensemble.noise_partition is None else [float(t) for t in ensemble.noise_partition.times],
        "seed": ensemble.seed,
        "mode": ensemble.mode,
        "labels": "range" if default_labels else [int(v) for v in labels],
        "model": ensemble.model,
        "kernels": ensemble.kernels,
        "law_approximation": ensemble.metadata.get("law_approximation"),
    }
    meta.update(extra or {})
    path = os.path.join(directory, SIDECAR)
    write_json(path, meta)
    return path


def read_ensemble(path):
    """Load an ensemble from its sidecar (or the directory holding it).

    Brownian increments and stored diffusion values are not part of the file
    layout; the returned ensemble has ``dW`` filled with NaN.
    """
    if os.path.isdir(path):
        path = os.path.join(path, SIDECAR)
    try:
        with open(path) as fh:
            meta = json.load(fh)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read ensemble metadata {path}: {exc}") from None
    data_path = os.path.join(os.path.dirname(path), meta["data_file"])
    N, M, d = meta["N"], meta["M"], meta["d"]
    try:
        if meta["layout"]["format"] == "csv":
            table = np.loadtxt(data_path, delimiter=",", skiprows=1, ndmin=2)
        else:
            table = np.fromfile(data_path, dtype="<f8").reshape(meta["layout"]["shape"])
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read ensemble data {data_path}: {exc}") from None
    if table.shape != (N * (M + 1) * d, len(COLUMNS)):
        raise GridMismatch(f"ensemble table has shape {table.shape}, metadata promises {N}x{M + 1}x{d}")
    partition = Partition(tuple(meta["times"]))
    noise = Partition(tuple(meta["noise_times"])) if meta.get("noise_times") else None
    cube = table.reshape(N, M + 1, d, len(COLUMNS))
    labels = np.arange(N, dtype=np.int64) if meta["labels"] == "range" else np.asarray(meta["labels"], np.int64)
    return ParticleEnsemble(
        X=cube[..., 3].copy(), A=cube[..., 4].copy(), Mart=cube[..., 5].copy(),
        dW=np.full((N, M, meta["m"]), np.nan), partition=partition, seed=meta["seed"], mode=meta["mode"],
        labels=labels, model=meta["model"], kernels=meta["kernels"], noise_partition=noise,
        metadata={"law_approximation": meta.get("law_approximation"), "N": N, "source": os.path.abspath(path)},
    ), meta
