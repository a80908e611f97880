"""Resolution studies for per-cell tooth segmentation on intraoral meshes.

The package covers mesh I/O, quadric decimation with label carry, 24-d
cell features, seeded augmentation, a small PointMLP-style network with
its own autodiff, KNN label upsampling, metrics, and the sweep harness.
"""
from .decimate import DecimationConfig, decimate
from .errors import DataError, MeshresError
from .features import LabeledFeatures, featurize
from .mesh import CLASS_NAMES, NUM_CLASSES, LabeledMesh, TriangleMesh
from .metrics import compute_metrics, confusion, evaluate
from .upsample import TransferConfig, knn_transfer

__version__ = "0.1.0"

__all__ = [
    "CLASS_NAMES", "NUM_CLASSES", "DataError", "DecimationConfig", "LabeledFeatures",
    "LabeledMesh", "MeshresError", "TransferConfig", "TriangleMesh", "compute_metrics",
    "confusion", "decimate", "evaluate", "featurize", "knn_transfer",
]
