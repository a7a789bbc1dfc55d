"""displab: a batch harness that measures and mitigates label dispersion
in zero-shot embedding-based action classification.

Submodules:
    embedding  cosine/softmax classification over precomputed embeddings
    masking    random pixel/shape, feature, and isolation perturbations
    analytics  frequency histograms, dispersion metrics, report rendering
    noise      class-specific noise learned with an augmented triplet loss
    pipeline   task runners 1-5 over dataset manifests
    emb1       the EMB1 binary embedding container
    provider   file-based exchange protocol for external encoders
"""

__version__ = "0.1.0"

from .embedding import (  # noqa: F401
    ClassCatalog,
    ClassifierConfig,
    PredictionRecord,
    cosine_similarity,
    zero_shot_classify,
    ucf101_catalog,
)
from .frames import ImageFrame, SegmentationMask  # noqa: F401
from .masking import (  # noqa: F401
    MaskSpec,
    apply_feature_mask,
    apply_isolation_mask,
    black_fraction,
    mask_random_pixels,
    mask_random_shapes,
)
from .analytics import (  # noqa: F401
    DispersionMetrics,
    FrequencyHistogram,
    build_fhc,
    dispersion_metrics,
    render_report,
)
from .noise import (  # noqa: F401
    FeatureStore,
    NoiseDictionary,
    Triplet,
    TripletConfig,
    augmented_triplet_loss,
    mine_triplets,
    noise_aware_classify,
    noise_gradient,
    train_noise_dictionary,
    triplet_loss,
)
