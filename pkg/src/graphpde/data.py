"""Dataset generation and the on-disk dataset format.

A dataset is a directory holding ``manifest.json`` and ``data.bin``.  The
binary file is the concatenation of little-endian float32 arrays in
row-major order; the manifest records, per sample, the definition text,
scalar payloads, grid metadata, provenance and the offset/shape of every
array, plus SHA-256 checksums of each sample's bytes and the whole file.
"""
from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import dsl
from .families import FamilySpec, sample_pde
from .fields import GridSpec, grid_for
from .solvers import BLOWUP_LIMIT, SolverError, solve_reference

SCHEMA = "graphpde-dataset"
VERSION = 1
DTYPE = np.dtype("<f4")


class DatasetError(RuntimeError):
    pass


class ChecksumError(DatasetError):
    pass


class VersionError(DatasetError):
    pass


@dataclass(eq=False)
class DataSample:
    text: str
    payloads: dict
    x: np.ndarray
    t: np.ndarray
    u: np.ndarray  # (n_t, n_x), or (V, n_t, n_x) for several unknowns
    grid: GridSpec
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=DTYPE)
        self.t = np.asarray(self.t, dtype=DTYPE)
        self.u = np.asarray(self.u, dtype=DTYPE)
        self.payloads = {k: _f32_payload(v) for k, v in self.payloads.items()}
        self.meta = json.loads(json.dumps(self.meta))
        if not np.all(np.isfinite(self.u)):
            raise DatasetError("solution contains non-finite values")

    @property
    def definition(self) -> dsl.PdeDefinition:
        return dsl.parse(self.text, self.payloads)

    @property
    def solution(self) -> np.ndarray:
        """Always (V, n_t, n_x)."""
        return self.u if self.u.ndim == 3 else self.u[None]


def _f32_payload(p):
    if isinstance(p, dsl.FieldSamples):
        return dsl.FieldSamples(np.asarray(p.coords, dtype=DTYPE), np.asarray(p.values, dtype=DTYPE))
    if isinstance(p, dsl.SeparableSamples):
        return dsl.SeparableSamples(_f32_payload(p.time), _f32_payload(p.space))
    return float(p)


# ---------------------------------------------------------------------------
# generation


def sample_seed(master: int, index: int, attempt: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([master, index, attempt]))


def make_sample(spec: FamilySpec, master: int, index: int, grid: GridSpec | None = None,
                max_attempts: int = 50, **solver_kwargs):
    """Draw and solve sample ``index``; returns (sample, discard reasons)."""
    discards = []
    for attempt in range(max_attempts):
        rng = sample_seed(master, index, attempt)
        inst = sample_pde(spec, rng, grid)
        try:
            sol = solve_reference(inst.definition, inst.payloads, inst.grid, **solver_kwargs)
        except SolverError as exc:
            discards.append(type(exc).__name__)
            continue
        meta = dict(inst.meta, seed=[master, index, attempt], solver=sol.solver, n_x=inst.grid.n_x,
                    n_t=inst.grid.n_t)
        return DataSample(inst.text, inst.payloads, sol.x, sol.t, sol.u, inst.grid, meta), discards
    raise DatasetError(f"sample {index}: no admissible draw in {max_attempts} attempts ({discards[-3:]})")


def _make_one(args):
    spec, master, index, grid, kw = args
    return make_sample(spec, master, index, grid, **kw)


def generate_dataset(spec: FamilySpec, n: int, seed: int, grid: GridSpec | None = None,
                     workers: int = 1, progress=None, **solver_kwargs):
    """Generate ``n`` samples.  Returns ``(samples, stats)``.

    Sample ``i`` depends only on ``(seed, i)``, so the result does not depend
    on ``workers``.
    """
    if n <= 0:
        raise ValueError("n must be positive")
    grid = grid or grid_for(spec.periodic)
    jobs = [(spec, seed, i, grid, solver_kwargs) for i in range(n)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            results = list(ex.map(_make_one, jobs, chunksize=4))
    else:
        results = []
        for j in jobs:
            results.append(_make_one(j))
            if progress:
                progress(len(results), n)
    samples = [r[0] for r in results]
    reasons: dict = {}
    for _, d in results:
        for r in d:
            reasons[r] = reasons.get(r, 0) + 1
    stats = {"accepted": n, "discarded": sum(reasons.values()), "discard_reasons": reasons}
    return samples, stats


# ---------------------------------------------------------------------------
# persistence


def _sample_arrays(s: DataSample):
    arrays = {"x": s.x, "t": s.t, "u": s.u}
    scalars, fields = {}, {}
    for slot, p in s.payloads.items():
        if isinstance(p, dsl.FieldSamples):
            fields[slot] = "field"
            arrays[f"{slot}.coords"], arrays[f"{slot}.values"] = p.coords, p.values
        elif isinstance(p, dsl.SeparableSamples):
            fields[slot] = "separable"
            for part in ("time", "space"):
                fp = getattr(p, part)
                arrays[f"{slot}.{part}.coords"], arrays[f"{slot}.{part}.values"] = fp.coords, fp.values
        else:
            scalars[slot] = float(p)
    return arrays, scalars, fields


def write_dataset(samples: Sequence[DataSample], path, extra: dict | None = None) -> dict:
    """Write ``samples`` to directory ``path``; returns the manifest."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    entries, offset = [], 0
    whole = hashlib.sha256()
    tmp = path / "data.bin.tmp"
    with open(tmp, "wb") as fh:
        for i, s in enumerate(samples):
            arrays, scalars, fields = _sample_arrays(s)
            h = hashlib.sha256()
            layout = []
            for name, arr in arrays.items():
                buf = np.ascontiguousarray(arr, dtype=DTYPE).tobytes()
                layout.append({"name": name, "offset": offset, "shape": list(arr.shape)})
                fh.write(buf)
                h.update(buf)
                whole.update(buf)
                offset += len(buf)
            entries.append({
                "index": i, "text": s.text, "scalars": scalars, "fields": fields, "arrays": layout,
                "grid": {"kind": s.grid.kind, "n_x": s.grid.n_x, "n_t": s.grid.n_t, "t_end": s.grid.t_end},
                "meta": s.meta, "sha256": h.hexdigest(),
            })
    manifest = {
        "schema": SCHEMA, "version": VERSION, "dtype": "float32", "byte_order": "little",
        "n_samples": len(entries), "data_file": "data.bin", "data_bytes": offset,
        "data_sha256": whole.hexdigest(), "samples": entries, "extra": extra or {},
    }
    os.replace(tmp, path / "data.bin")
    (path / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True))
    return manifest


def read_manifest(path) -> dict:
    path = Path(path)
    mf = path / "manifest.json"
    if not mf.exists():
        raise DatasetError(f"no dataset manifest in {path}")
    m = json.loads(mf.read_text())
    if m.get("schema") != SCHEMA:
        raise DatasetError(f"{path} is not a dataset directory")
    if m.get("version") != VERSION:
        raise VersionError(f"dataset version {m.get('version')} unsupported (expected {VERSION})")
    return m


def read_dataset(path) -> list[DataSample]:
    """Read and verify a dataset; nothing is returned unless every checksum matches."""
    path = Path(path)
    m = read_manifest(path)
    raw = (path / m["data_file"]).read_bytes()
    if len(raw) != m["data_bytes"] or hashlib.sha256(raw).hexdigest() != m["data_sha256"]:
        raise ChecksumError(f"{path / m['data_file']} is truncated or corrupted")
    out = []
    for e in m["samples"]:
        h = hashlib.sha256()
        arrays = {}
        for lay in e["arrays"]:
            name = lay["name"]
            count = int(np.prod(lay["shape"]))
            buf = raw[lay["offset"]: lay["offset"] + count * DTYPE.itemsize]
            h.update(buf)
            arrays[name] = np.frombuffer(buf, dtype=DTYPE).reshape(lay["shape"]).copy()
        if h.hexdigest() != e["sha256"]:
            raise ChecksumError(f"sample {e['index']} failed its checksum")
        payloads: dict = dict(e["scalars"])
        for slot, kind in e["fields"].items():
            if kind == "field":
                payloads[slot] = dsl.FieldSamples(arrays[f"{slot}.coords"], arrays[f"{slot}.values"])
            else:
                payloads[slot] = dsl.SeparableSamples(
                    *(dsl.FieldSamples(arrays[f"{slot}.{p}.coords"], arrays[f"{slot}.{p}.values"])
                      for p in ("time", "space")))
        g = e["grid"]
        out.append(DataSample(e["text"], payloads, arrays["x"], arrays["t"], arrays["u"],
                              GridSpec(g["kind"], g["n_x"], g["n_t"], g["t_end"]), e["meta"]))
    return out


def dataset_digest(path) -> str:
    return read_manifest(path)["data_sha256"]


def check_discard_rule(samples: Iterable[DataSample], limit: float = BLOWUP_LIMIT) -> bool:
    return all(float(np.max(np.abs(s.u))) <= limit for s in samples)
