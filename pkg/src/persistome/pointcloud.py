"""Point clouds: parsing, sampling, perturbation and synthetic shapes.

All randomness goes through ``numpy.random.Generator`` backed by the PCG64
bit generator, seeded with an explicit integer.  PCG64 is a fixed, documented
algorithm, so a given seed yields the same stream on every platform.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist


class PointCloudError(ValueError):
    """Raised for malformed point-cloud input or invalid parameters."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed) & 0xFFFFFFFFFFFFFFFF))


@dataclass
class PointCloud:
    points: np.ndarray
    label: Optional[str] = None
    id: Optional[str] = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim == 1 and pts.size == 3:
            pts = pts.reshape(1, 3)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise PointCloudError(f"points must have shape (n, 3), got {pts.shape}")
        if pts.shape[0] < 1:
            raise PointCloudError("a point cloud needs at least one point")
        if not np.all(np.isfinite(pts)):
            raise PointCloudError("point coordinates must be finite")
        self.points = pts

    def __len__(self) -> int:
        return self.points.shape[0]

    def with_points(self, points: np.ndarray) -> "PointCloud":
        return PointCloud(points, label=self.label, id=self.id)


@dataclass
class DistanceMatrix:
    entries: np.ndarray

    @property
    def n(self) -> int:
        return self.entries.shape[0]


# -- parsing -----------------------------------------------------------------

def _parse_row(tokens, lineno):
    if len(tokens) < 3:
        raise PointCloudError(f"expected 3 coordinates, got {len(tokens)}", lineno)
    try:
        row = [float(t) for t in tokens[:3]]
    except ValueError:
        raise PointCloudError(f"non-numeric token in {tokens[:3]!r}", lineno) from None
    if not all(math.isfinite(v) for v in row):
        raise PointCloudError("non-finite coordinate", lineno)
    return row


def _parse_xyz(text: str):
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        rows.append(_parse_row(line.replace(",", " ").split(), lineno))
    return rows


def _parse_csv(text: str):
    rows = []
    reader = csv.reader(io.StringIO(text))
    first = True
    for lineno, rec in enumerate(reader, start=1):
        rec = [t.strip() for t in rec]
        if not any(rec):
            continue
        if first:
            first = False
            # header row is optional
            if [t.lower() for t in rec[:3]] == ["x", "y", "z"]:
                continue
        rows.append(_parse_row(rec, lineno))
    return rows


def _parse_off(text: str):
    lines = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if stripped:
            lines.append((lineno, stripped))
    if not lines:
        raise PointCloudError("empty input")
    lineno, head = lines[0]
    rest = lines[1:]
    # header may be glued to the counts line ("OFF8 6 0" appears in ModelNet40)
    if not head.upper().startswith("OFF"):
        raise PointCloudError("missing OFF header", lineno)
    counts_text = head[3:].strip()
    if counts_text:
        count_line = (lineno, counts_text)
    else:
        if not rest:
            raise PointCloudError("missing vertex/face counts", lineno)
        count_line, rest = rest[0], rest[1:]
    cl, ctoks = count_line[0], count_line[1].split()
    try:
        n_vertices = int(ctoks[0])
    except (ValueError, IndexError):
        raise PointCloudError("malformed OFF counts line", cl) from None
    if len(rest) < n_vertices:
        raise PointCloudError(
            f"OFF declares {n_vertices} vertices but only {len(rest)} lines follow", cl)
    return [_parse_row(tok.split(), ln) for ln, tok in rest[:n_vertices]]


_PARSERS = {"xyz": _parse_xyz, "csv": _parse_csv, "off": _parse_off}


def parse_point_cloud(text: str, format: str = "xyz", label=None, id=None) -> PointCloud:
    """Parse ``xyz``, ``csv`` or ``off`` text into a :class:`PointCloud`.

    OFF faces (and any per-vertex colours beyond the first three fields) are
    ignored.  Errors carry the offending 1-based line number.
    """
    fmt = format.lower()
    if fmt not in _PARSERS:
        raise PointCloudError(f"unknown format {format!r}")
    if not text.strip():
        raise PointCloudError("empty input")
    rows = _PARSERS[fmt](text)
    if not rows:
        raise PointCloudError("no points in input")
    return PointCloud(np.array(rows, dtype=np.float64), label=label, id=id)


def format_from_path(path) -> str:
    suffix = str(path).rsplit(".", 1)[-1].lower()
    return {"txt": "xyz", "pts": "xyz"}.get(suffix, suffix)


def read_point_cloud(path, format: Optional[str] = None, label=None, id=None) -> PointCloud:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    return parse_point_cloud(text, format or format_from_path(path), label=label, id=id)


def write_xyz(pc: PointCloud, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for x, y, z in pc.points.tolist():
            fh.write(f"{x!r} {y!r} {z!r}\n")


# -- geometry ----------------------------------------------------------------

def random_sample(pc: PointCloud, k: int, seed: int) -> PointCloud:
    """Uniform sample of ``k`` points without replacement, in drawn order."""
    n = len(pc)
    if k < 1 or k > n:
        raise PointCloudError(f"sample size must be in [1, {n}], got {k}")
    idx = make_rng(seed).choice(n, size=k, replace=False)
    return pc.with_points(pc.points[idx])


def distance_matrix(pc: PointCloud) -> DistanceMatrix:
    d = cdist(pc.points, pc.points)
    np.fill_diagonal(d, 0.0)
    return DistanceMatrix(d)


def hausdorff(a: PointCloud, b: PointCloud) -> float:
    if len(a) == 0 or len(b) == 0:
        raise PointCloudError("Hausdorff distance needs nonempty clouds")
    ab = cKDTree(b.points).query(a.points)[0].max()
    ba = cKDTree(a.points).query(b.points)[0].max()
    return float(max(ab, ba))


def perturb(pc: PointCloud, eps: float, seed: int) -> PointCloud:
    """Displace every point by an independent uniform vector in the eps-ball.

    Rejection sampling from the enclosing cube keeps the displacement norm
    bounded by ``eps`` exactly, so ``hausdorff(pc, out) <= eps``.
    """
    if eps < 0 or not math.isfinite(eps):
        raise PointCloudError(f"eps must be a finite nonnegative number, got {eps}")
    if eps == 0:
        return pc.with_points(pc.points.copy())
    rng = make_rng(seed)
    n = len(pc)
    out = np.empty((n, 3))
    filled = 0
    while filled < n:
        cand = rng.uniform(-eps, eps, size=(2 * (n - filled) + 8, 3))
        # shrink by a few ulps so rounding in the addition cannot overshoot eps
        cand = cand[np.linalg.norm(cand, axis=1) <= eps * (1.0 - 1e-12)][: n - filled]
        out[filled:filled + len(cand)] = cand
        filled += len(cand)
    return pc.with_points(pc.points + out)


# -- synthetic shapes -------------------------------------------------------

SHAPE_DEFAULTS = {
    "circle": {"radius": 1.0},
    "sphere": {"radius": 1.0},
    "torus": {"ring_radius": 2.0, "tube_radius": 0.5},
    "eyeglass": {"radius": 1.0, "neck_length": 0.6, "neck_width": 0.5},
}


def _circle(n, radius):
    t = 2.0 * np.pi * np.arange(n) / n
    return np.column_stack([radius * np.cos(t), radius * np.sin(t), np.zeros(n)])


def _sphere(n, radius):
    # Fibonacci lattice
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    r = np.sqrt(1.0 - z * z)
    phi = np.pi * (3.0 - math.sqrt(5.0)) * np.arange(n)
    return radius * np.column_stack([r * np.cos(phi), r * np.sin(phi), z])


def _torus(n, ring_radius, tube_radius):
    # grid aspect follows the ratio of the two circumferences
    n_tube = max(3, int(round(math.sqrt(n * tube_radius / ring_radius))))
    n_ring = max(3, -(-n // n_tube))
    u = 2.0 * np.pi * np.arange(n_ring) / n_ring
    v = 2.0 * np.pi * np.arange(n_tube) / n_tube
    uu, vv = np.meshgrid(u, v, indexing="ij")
    # alternate rings shifted by half a tube step: the lattice triangulates the
    # surface instead of leaving square cells that read as small loops
    vv = vv + (np.arange(n_ring)[:, None] % 2) * (np.pi / n_tube)
    uu, vv = uu.ravel(), vv.ravel()
    if uu.size > n:
        keep = np.unique(np.linspace(0, uu.size - 1, n).round().astype(int))
        uu, vv = uu[keep], vv[keep]
    rho = ring_radius + tube_radius * np.cos(vv)
    return np.column_stack([rho * np.cos(uu), rho * np.sin(uu), tube_radius * np.sin(vv)])


def _eyeglass(n, radius, neck_length, neck_width):
    """Closed curve: two circles whose facing arcs are replaced by a two-rail neck."""
    h = neck_width / 2.0
    if not 0 < h < radius:
        raise PointCloudError("neck_width must be in (0, 2*radius)")
    cx = radius * math.sqrt(1.0 - (h / radius) ** 2) + neck_length / 2.0
    theta0 = math.asin(h / radius)       # half-angle of the removed arc
    arc = 2.0 * math.pi - 2.0 * theta0
    rail = 2.0 * cx - 2.0 * radius * math.cos(theta0)
    pieces = [arc, rail, arc, rail]
    total = sum(pieces)
    s = total * np.arange(n) / n
    pts = np.zeros((n, 3))
    for k, sk in enumerate(s):
        if sk < arc:                                   # right lobe, ccw from lower rail
            a = math.pi + theta0 + sk / radius
            pts[k, :2] = (cx + radius * math.cos(a), radius * math.sin(a))
            continue
        sk -= arc
        if sk < rail:                                  # upper rail, right to left
            x0 = cx - radius * math.cos(theta0)
            pts[k, :2] = (x0 - sk, h)
            continue
        sk -= rail
        if sk < arc:                                   # left lobe
            a = theta0 + sk / radius
            pts[k, :2] = (-cx + radius * math.cos(a), radius * math.sin(a))
            continue
        sk -= arc
        x0 = -cx + radius * math.cos(theta0)           # lower rail, left to right
        pts[k, :2] = (x0 + sk, -h)
    return pts


def generate_shape(kind: str, n: int, params: Optional[dict] = None,
                   noise: float = 0.0, seed: int = 0) -> PointCloud:
    """Sample a synthetic shape; Gaussian jitter of scale ``noise`` per coordinate.

    circle: equally spaced angles in the z=0 plane.  sphere: Fibonacci lattice.
    torus: staggered parameter lattice with (ring_radius, tube_radius).  eyeglass: two
    circles joined by a narrow neck, traversed at equal arc-length spacing.
    """
    if kind not in SHAPE_DEFAULTS:
        raise PointCloudError(f"unknown shape {kind!r}")
    if n < 4:
        raise PointCloudError("shapes need n >= 4")
    if noise < 0:
        raise PointCloudError("noise must be nonnegative")
    p = dict(SHAPE_DEFAULTS[kind])
    for key, value in (params or {}).items():
        if key not in p:
            raise PointCloudError(f"unknown parameter {key!r} for {kind}")
        p[key] = float(value)
    if any(v <= 0 for v in p.values()):
        raise PointCloudError(f"shape parameters must be positive: {p}")

    if kind == "circle":
        pts = _circle(n, p["radius"])
    elif kind == "sphere":
        pts = _sphere(n, p["radius"])
    elif kind == "torus":
        if p["tube_radius"] >= p["ring_radius"]:
            raise PointCloudError("torus tube radius must be smaller than ring radius")
        pts = _torus(n, p["ring_radius"], p["tube_radius"])
    else:
        pts = _eyeglass(n, p["radius"], p["neck_length"], p["neck_width"])

    if noise > 0:
        pts = pts + make_rng(seed).normal(scale=noise, size=pts.shape)
    return PointCloud(pts, label=kind, id=f"{kind}-{n}-{seed}")
