"""creasegen: synthetic palmprint-crease datasets and recognition metrics."""

__version__ = "0.1.0"

from .geometry import (  # noqa: F401
    BackgroundPool,
    CreaseSpec,
    Hand,
    IdentitySpec,
    NoiseConfig,
    Point2,
    Role,
    SampleParams,
    SamplerConfig,
    bezier_flatten,
    bezier_point,
    perturb_identity,
    sample_control_point,
    sample_identity,
    sample_principal_lines,
    sample_wrinkles,
)
from .metrics import (  # noqa: F401
    EmbeddingTable,
    ScoreSet,
    SplitSpec,
    build_pairs,
    cosine_similarity,
    eer,
    kfold_split,
    load_embeddings,
    open_set_split,
    roc_curve,
    tar_at_far,
    top1_accuracy,
    write_embeddings,
)
from .pipeline import (  # noqa: F401
    DatasetManifest,
    GenConfig,
    generate_dataset,
    validate_config,
    verify_manifest,
)
from .renderer import (  # noqa: F401
    BackgroundProvider,
    apply_blur,
    composite_background,
    render_sample,
    stroke_polyline,
)
from .roi import LandmarkPair, RoiTransform, extract_roi, roi_transform  # noqa: F401
from .streams import identity_stream, sample_stream  # noqa: F401
