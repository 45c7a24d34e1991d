"""Rips persistence diagrams, diagram distances and significant-feature selection."""
__version__ = "0.1.0"

from .pointcloud import PointCloud, generate_shape, read_point_cloud  # noqa: E402
from .rips import SimplexOverflowError, build_filtration  # noqa: E402
from .persistence import (PersistenceDiagram, compute_pd, reduce_fast,  # noqa: E402
                          reduce_standard, read_diagram_csv, write_diagram_csv)
from .diagram import SignificanceBand, persistent_entropy, delta_band_select  # noqa: E402
from .distances import bottleneck, wasserstein  # noqa: E402

__all__ = [
    "PointCloud", "generate_shape", "read_point_cloud", "SimplexOverflowError",
    "build_filtration", "PersistenceDiagram", "compute_pd", "reduce_fast",
    "reduce_standard", "read_diagram_csv", "write_diagram_csv", "SignificanceBand",
    "persistent_entropy", "delta_band_select", "bottleneck", "wasserstein",
]
