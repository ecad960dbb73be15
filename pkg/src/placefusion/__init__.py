"""Pseudo multi-modal visual place classification toolkit.

Turns single-modality RGB place classification into a two-modality problem:
pseudo-depth maps are encoded into 3-channel disparity/height/angle images
via iterative gravity estimation, the robot workspace is partitioned into a
grid of place classes, and per-modality classifier heads plus a fusion MLP
are trained from scratch on embedding vectors and compared by top-1
accuracy.
"""

from .errors import (
    ContractError,
    DataError,
    DivergenceError,
    EmptyCloudError,
    FormatError,
    PlaceFusionError,
)
from .geometry import (
    CameraIntrinsics,
    DepthConvention,
    DepthImage,
    GravityConfig,
    GravityEstimate,
    HhaConfig,
    HhaImage,
    HhaResult,
    OrientedPointCloud,
    backproject,
    backproject_points,
    depth_to_hha,
    encode_hha,
    estimate_gravity,
    estimate_normals,
    normalize_relative_depth,
    split_by_gravity,
    update_gravity,
)
from .places import (
    PlaceGrid,
    Viewpoint,
    build_grid,
    classify_points,
    classify_viewpoint,
    label_dataset,
)
from .data_io import (
    DatasetManifest,
    EmbeddingSet,
    ManifestEntry,
    Modality,
    PairedEmbeddings,
    join_pairs,
    load_embeddings,
    load_manifest,
    read_tensor,
    save_manifest,
    write_tensor,
)
from .fusion import (
    MlpModel,
    Prediction,
    TrainConfig,
    TrainResult,
    forward,
    forward_batch,
    load_model,
    loss_and_grad,
    naive_average_probs,
    predict,
    predict_batch,
    save_model,
    train_fusion,
    train_head,
)
from .evaluate import EvalReport, ablation_report, confusion_matrix, top1_accuracy
from .synth import (
    EmbeddingSpec,
    Plane,
    SceneSpec,
    generate_embeddings,
    render_depth,
    vertical_wall,
)

__version__ = "0.1.0"
