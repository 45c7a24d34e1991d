"""Batch signature datasets and the selection benchmark.

``build_signatures`` turns a directory of point clouds (class labels taken
from the parent directory) into per-cloud diagram CSVs, padded copies and a
JSON manifest.  ``run_bench`` applies selection methods to every diagram of
a manifest and reports mean Wasserstein, bottleneck and entropy change per
class and overall.

Every artifact is a deterministic function of inputs, seed and config: paths
in the manifest are relative, there is no timestamp, and work done in a
process pool is gathered back in input order.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import multiprocessing
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .diagram import dataset_pad, delta_band_select, entropy_difference, topk_select
from .distances import bottleneck, wasserstein
from .persistence import compute_pd, read_diagram_csv, write_diagram_csv
from .pointcloud import PointCloudError, read_point_cloud, random_sample, write_xyz
from .rips import SimplexOverflowError
from .significance import (SelectionConfig, method1_subsampling, method2_concentration,
                           method3_shells, optimize_selection)

log = logging.getLogger(__name__)

SCHEMA_VERSION = "1"
CLOUD_SUFFIXES = {".xyz", ".txt", ".pts", ".csv", ".off"}
RETRY_SIZES = (920, 768)


class ManifestError(ValueError):
    pass


@dataclass
class CloudEntry:
    id: str
    label: str
    source: str
    status: str = "ok"              # ok | skipped | failed
    sample_size: int = 0
    requested_sample_size: int = 0
    seed: int = 0
    cloud_path: Optional[str] = None
    pd_paths: dict = field(default_factory=dict)
    padded_paths: dict = field(default_factory=dict)
    original_pd_size: dict = field(default_factory=dict)
    padded: bool = False
    retries: int = 0
    error: Optional[str] = None


@dataclass
class DatasetManifest:
    name: str
    clouds: list
    padded_size: dict
    toolkit_version: str = __version__
    threshold_policy: str = "enclosing_radius"
    max_hom_dim: int = 2
    schema_version: str = SCHEMA_VERSION

    def ok_clouds(self) -> list:
        return [c for c in self.clouds if c.status == "ok"]

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "DatasetManifest":
        raw = json.loads(text)
        if raw.get("schema_version") != SCHEMA_VERSION:
            raise ManifestError(f"unsupported schema_version {raw.get('schema_version')!r}")
        raw["clouds"] = [CloudEntry(**c) for c in raw["clouds"]]
        return cls(**raw)

    def write(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def read(cls, path) -> "DatasetManifest":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def validate_manifest(manifest: DatasetManifest, root) -> list:
    """Check every path and size claim; returns a list of problems (empty if valid)."""
    root = Path(root)
    problems = []
    for c in manifest.ok_clouds():
        for dim_key, rel in c.pd_paths.items():
            path = root / rel
            if not path.is_file():
                problems.append(f"{c.id}: missing {rel}")
                continue
            got = len(read_diagram_csv(path, int(dim_key)))
            if got != c.original_pd_size.get(dim_key):
                problems.append(f"{c.id}: {rel} has {got} pairs, manifest says "
                                f"{c.original_pd_size.get(dim_key)}")
        for dim_key, rel in c.padded_paths.items():
            path = root / rel
            if not path.is_file():
                problems.append(f"{c.id}: missing {rel}")
                continue
            got = len(read_diagram_csv(path, int(dim_key)))
            if got != manifest.padded_size.get(dim_key):
                problems.append(f"{c.id}: {rel} has {got} pairs, padded size is "
                                f"{manifest.padded_size.get(dim_key)}")
        if c.cloud_path and not (root / c.cloud_path).is_file():
            problems.append(f"{c.id}: missing {c.cloud_path}")
    return problems


# -- building ----------------------------------------------------------------

def find_clouds(input_dir) -> list:
    """Cloud files below ``input_dir`` as sorted relative POSIX paths."""
    root = Path(input_dir)
    if not root.is_dir():
        raise FileNotFoundError(f"input directory not found: {input_dir}")
    found = [p.relative_to(root).as_posix() for p in root.rglob("*")
             if p.is_file() and p.suffix.lower() in CLOUD_SUFFIXES]
    return sorted(found)


def derive_seed(root_seed: int, *keys: int) -> int:
    return int(np.random.SeedSequence([root_seed, *keys]).generate_state(1)[0])


def _retry_sizes(sample_size):
    return [sample_size] + [s for s in RETRY_SIZES if s < sample_size]


def _process_cloud(task):
    """Worker: read, sample and compute diagrams for one cloud (picklable)."""
    (rel, input_dir, output_dir, label, sample_size, max_hom_dim, threshold, cap, seed) = task
    stem = rel.rsplit(".", 1)[0]
    entry = CloudEntry(id=stem, label=label, source=rel, seed=seed,
                       requested_sample_size=sample_size)
    try:
        pc = read_point_cloud(Path(input_dir) / rel, label=label, id=stem)
    except (OSError, PointCloudError, ValueError) as exc:
        entry.status, entry.error = "skipped", f"unreadable: {exc}"
        return entry, None
    last_error = None
    for attempt, size in enumerate(_retry_sizes(sample_size)):
        entry.retries = attempt
        sample = random_sample(pc, size, seed) if len(pc) > size else pc
        try:
            dgms = compute_pd(sample, max_hom_dim, threshold=threshold, cap=cap)
        except SimplexOverflowError as exc:
            last_error = exc
            if len(sample) < size:
                break       # cloud already smaller than every retry size
            continue
        except ValueError as exc:
            entry.status, entry.error = "failed", str(exc)
            return entry, None
        entry.sample_size = len(sample)
        entry.cloud_path = f"clouds/{stem}.xyz"
        entry.pd_paths = {str(k): f"pd/{stem}_h{k}.csv" for k in dgms}
        entry.original_pd_size = {str(k): len(d) for k, d in dgms.items()}
        out = Path(output_dir)
        (out / entry.cloud_path).parent.mkdir(parents=True, exist_ok=True)
        write_xyz(sample, out / entry.cloud_path)
        for k, d in dgms.items():
            (out / entry.pd_paths[str(k)]).parent.mkdir(parents=True, exist_ok=True)
            write_diagram_csv(out / entry.pd_paths[str(k)], d)
        return entry, dgms
    entry.status, entry.error = "failed", f"simplex cap: {last_error}"
    return entry, None


def build_signatures(input_dir, output_dir, sample_size: int = 1024, max_hom_dim: int = 2,
                     seed: int = 0, workers: int = 1, threshold="auto",
                     cap: Optional[int] = None, label_map: Optional[dict] = None,
                     name: Optional[str] = None) -> DatasetManifest:
    """Compute and pad the diagrams of every cloud under ``input_dir``.

    The class label is the cloud's parent directory name, remapped through
    ``label_map`` when given.  When the simplex cap is exceeded the cloud is
    resampled at the next size in ``RETRY_SIZES``.  Unreadable clouds and
    clouds that still overflow are recorded in the manifest and skipped.
    """
    if sample_size < 2:
        raise ValueError("sample_size must be >= 2")
    rels = find_clouds(input_dir)
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    label_map = label_map or {}
    tasks = []
    for idx, rel in enumerate(rels):
        parent = rel.rsplit("/", 1)[0] if "/" in rel else Path(input_dir).resolve().name
        label = label_map.get(parent, parent)
        tasks.append((rel, str(input_dir), str(out), label, sample_size, max_hom_dim,
                      threshold, cap, derive_seed(seed, idx)))

    if workers <= 1 or len(tasks) <= 1:
        results = [_process_cloud(t) for t in tasks]
    else:
        ctx = multiprocessing.get_context("spawn")
        with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
            results = list(pool.map(_process_cloud, tasks))

    entries = [r[0] for r in results]
    for e in entries:
        if e.status != "ok":
            log.warning("%s: %s (%s)", e.source, e.status, e.error)
        elif e.retries:
            log.warning("%s: simplex cap hit, sample size reduced to %d", e.source, e.sample_size)

    done = [(e, d) for e, d in results if d is not None]
    padded_size = {}
    if done:
        flat = [d for _, dgms in done for d in dgms.values()]
        padded = iter(dataset_pad(flat))
        for e, dgms in done:
            for k in dgms:
                pd_pad = next(padded)
                padded_size[str(k)] = pd_pad.target_size
                rel = f"padded/{e.id}_h{k}.csv"
                (out / rel).parent.mkdir(parents=True, exist_ok=True)
                write_diagram_csv(out / rel, pd_pad.diagram)
                e.padded_paths[str(k)] = rel
            e.padded = True

    policy = "enclosing_radius" if threshold in (None, "auto") else f"fixed:{float(threshold)!r}"
    manifest = DatasetManifest(name=name or Path(input_dir).resolve().name, clouds=entries,
                               padded_size=padded_size, threshold_policy=policy,
                               max_hom_dim=max_hom_dim)
    manifest.write(out / "manifest.json")
    return manifest


# -- benchmark ---------------------------------------------------------------

@dataclass
class BenchRow:
    hom_dim: int
    cls: str
    n: int
    mean_wd: float
    mean_bd: float
    mean_pe_diff: float


@dataclass
class BenchReport:
    method: str
    rows: list
    runtime_s: float
    missing: int = 0

    def overall(self, dim: int) -> BenchRow:
        for r in self.rows:
            if r.hom_dim == dim and r.cls == "ALL":
                return r
        raise KeyError(dim)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["method", "hom_dim", "class", "n", "mean_wd", "mean_bd",
                    "mean_pe_diff", "runtime_s"])
        for r in self.rows:
            w.writerow([self.method, r.hom_dim, r.cls, r.n, f"{r.mean_wd:.12g}",
                        f"{r.mean_bd:.12g}", f"{r.mean_pe_diff:.12g}", f"{self.runtime_s:.6f}"])
        return buf.getvalue()

    def to_table(self) -> str:
        head = ["method", "dim", "class", "n", "mean_wd", "mean_bd", "mean_pe_diff", "runtime_s"]
        body = [[self.method, str(r.hom_dim), r.cls, str(r.n), f"{r.mean_wd:.6f}",
                 f"{r.mean_bd:.6f}", f"{r.mean_pe_diff:.6f}", f"{self.runtime_s:.3f}"]
                for r in self.rows]
        widths = [max(len(row[i]) for row in [head] + body) for i in range(len(head))]
        lines = ["  ".join(c.ljust(w) if i < 3 else c.rjust(w)
                           for i, (c, w) in enumerate(zip(row, widths)))
                 for row in [head] + body]
        return "\n".join(line.rstrip() for line in lines) + "\n"


def parse_method(spec: str):
    """``delta:0.3``, ``topk:5``, ``method1``..``method3`` or ``topoloss``."""
    name, _, arg = spec.strip().partition(":")
    if name == "delta":
        if not arg:
            raise ValueError("delta needs a value, e.g. delta:0.3")
        return name, float(arg)
    if name == "topk":
        if not arg:
            raise ValueError("topk needs a count, e.g. topk:5")
        return name, int(arg)
    if name in ("method1", "method2", "method3", "topoloss"):
        if arg:
            raise ValueError(f"{name} takes no argument")
        return name, None
    raise ValueError(f"unknown method {spec!r}")


def method_slug(spec: str) -> str:
    return spec.replace(":", "_").replace(".", "p")


def _select(method, arg, pd, cloud, alpha, seed, bands):
    if method == "delta":
        return delta_band_select(pd, arg)
    if method == "topk":
        return topk_select(pd, arg)
    if method == "topoloss":
        if len(pd) == 0:
            return pd
        return optimize_selection(pd, config=SelectionConfig(seed=seed)).hard_selected
    # one band per cloud, shared by its H1 and H2 diagrams
    if method not in bands:
        if method == "method1":
            bands[method] = method1_subsampling(cloud(), alpha=alpha, seed=seed)
        elif method == "method2":
            bands[method] = method2_concentration(cloud(), alpha=alpha)
        else:
            bands[method] = method3_shells(cloud(), alpha=alpha)
    return delta_band_select(pd, bands[method])


def _aggregate(records):
    """records: (dim, cls, wd, bd, pe) -> rows per (dim, class) plus ALL."""
    rows = []
    for dim in sorted({r[0] for r in records}):
        sub = [r for r in records if r[0] == dim]
        groups = [(cls, [r for r in sub if r[1] == cls]) for cls in sorted({r[1] for r in sub})]
        groups.append(("ALL", sub))
        for cls, rs in groups:
            vals = np.array([r[2:] for r in rs], dtype=np.float64)
            rows.append(BenchRow(dim, cls, len(rs), *map(float, vals.mean(axis=0))))
    return rows


def run_bench(manifest, methods: Sequence[str], alpha: float = 0.05, seed: int = 0,
              output=None, root=None) -> list:
    """Benchmark selection methods on a manifest; one report per method.

    Metrics compare each reduced diagram with the original unpadded one.  A
    method that fails on a diagram leaves a missing cell, which is logged
    and excluded from the means.  Reports are written as
    ``bench_<method>.csv`` and ``bench_<method>.txt`` when ``output`` is set.
    """
    if isinstance(manifest, (str, os.PathLike)):
        root = Path(root) if root is not None else Path(manifest).parent
        manifest = DatasetManifest.read(manifest)
    if root is None:
        raise ValueError("root directory is needed when passing a manifest object")
    root = Path(root)
    parsed = [(spec, *parse_method(spec)) for spec in methods]
    clouds = manifest.ok_clouds()
    diagrams = [{int(k): read_diagram_csv(root / p, int(k)) for k, p in c.pd_paths.items()}
                for c in clouds]
    reports = []
    for spec, name, arg in parsed:
        records, missing = [], 0
        t0 = time.perf_counter()
        for idx, (c, dgms) in enumerate(zip(clouds, diagrams)):
            bands: dict = {}
            cloud = (lambda c=c: read_point_cloud(root / c.cloud_path, label=c.label, id=c.id))
            for dim, pd in sorted(dgms.items()):
                try:
                    reduced = _select(name, arg, pd, cloud, alpha, derive_seed(seed, idx, dim),
                                      bands)
                    wd = wasserstein(pd, reduced)
                    bd = bottleneck(pd, reduced)
                    pe = entropy_difference(pd, reduced)
                except (ValueError, ArithmeticError, FloatingPointError) as exc:
                    log.warning("%s on %s H%d failed: %s", spec, c.id, dim, exc)
                    missing += 1
                    continue
                if not all(math.isfinite(v) for v in (wd, bd, pe)):
                    log.warning("%s on %s H%d: non-finite metric", spec, c.id, dim)
                    missing += 1
                    continue
                records.append((dim, c.label, wd, bd, pe))
        report = BenchReport(spec, _aggregate(records), time.perf_counter() - t0, missing)
        reports.append(report)
        if output is not None:
            out = Path(output)
            out.mkdir(parents=True, exist_ok=True)
            (out / f"bench_{method_slug(spec)}.csv").write_text(report.to_csv(), encoding="utf-8")
            (out / f"bench_{method_slug(spec)}.txt").write_text(report.to_table(), encoding="utf-8")
    return reports
