"""Deterministic file formats: CSV with a JSON header line, manifests.

Every CSV body is byte-reproducible: floats are written with 17 significant
digits (round-trip exact), no timestamps appear in bodies, and the first
line is a '#'-prefixed JSON object describing provenance.
"""
from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

ARTIFACT_VERSION = "0.1.0"


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def write_csv(path, header: dict, columns: dict) -> None:
    """Write named columns with a JSON provenance header line."""
    path = Path(path)
    names = list(columns)
    arrays = [np.asarray(columns[name]) for name in names]
    n_rows = arrays[0].shape[0]
    with open(path, "w") as fh:
        fh.write("# " + json.dumps(header, sort_keys=True) + "\n")
        fh.write(",".join(names) + "\n")
        for i in range(n_rows):
            fh.write(",".join(_fmt(col[i]) for col in arrays) + "\n")


def read_csv(path) -> tuple[dict, dict]:
    """Read back a CSV written by ``write_csv``; returns (header, columns)."""
    path = Path(path)
    with open(path) as fh:
        first = fh.readline()
        if not first.startswith("#"):
            raise ValueError(f"{path}: missing JSON header line")
        header = json.loads(first[1:])
        names = fh.readline().strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if data.size == 0:
        cols = {name: np.empty(0) for name in names}
    else:
        cols = {name: data[:, j] for j, name in enumerate(names)}
    return header, cols


def content_hash(*chunks: str) -> str:
    h = hashlib.sha256()
    for chunk in chunks:
        h.update(chunk.encode())
    return h.hexdigest()[:16]


@dataclass
class Manifest:
    """Record of one CLI invocation and the files it produced."""

    command: str
    config: dict
    outputs: list = field(default_factory=list)
    seed: int | None = None
    version: str = ARTIFACT_VERSION
    input_hash: str = ""
    wall_clock: float = 0.0
    _t0: float = field(default_factory=time.monotonic, repr=False)

    def __post_init__(self):
        self.input_hash = content_hash(self.command,
                                       json.dumps(self.config, sort_keys=True, default=str))

    def add(self, path) -> None:
        self.outputs.append(str(path))

    def header(self) -> dict:
        """Provenance block embedded in every output file."""
        return {"command": self.command, "version": self.version, "hash": self.input_hash}

    def write(self, outdir) -> Path:
        self.wall_clock = time.monotonic() - self._t0
        path = Path(outdir) / "manifest.json"
        body = {
            "command": self.command,
            "config": self.config,
            "outputs": sorted(self.outputs),
            "seed": self.seed,
            "version": self.version,
            "input_hash": self.input_hash,
            "wall_clock_s": round(self.wall_clock, 3),
        }
        with open(path, "w") as fh:
            json.dump(body, fh, indent=2, sort_keys=True, default=str)
            fh.write("\n")
        return path
