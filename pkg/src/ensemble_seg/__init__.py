"""Ensemble fusion, loss evaluation, post-processing and lesion-wise metrics
for multi-class 3D tumor segmentations."""

from .components import (
    ComponentMap,
    Connectivity,
    component_sizes,
    connected_components,
    dilate,
    erode,
    morph_reconstruct,
)
from .config import RunConfig, load_config
from .ensemble import fuse, fuse_to_labels
from .losses import (
    BlobLossConfig,
    LossBreakdown,
    basnet_hybrid_loss,
    blob_loss,
    ce_dice_loss,
    cross_entropy,
    dice_loss,
    jaccard_loss,
    ms_ssim_loss,
)
from .metrics import LesionwiseConfig, MetricReport, dice_score, evaluate_case, hd95, lesion_wise
from .nifti import read_nifti, write_nifti
from .postprocess import PostprocessConfig, morph_smooth, size_filter
from .ssim import MsSsimConfig, ms_ssim
from .synth import Shape, SynthSpec, make_case
from .volume import (
    BRATS_REGIONS,
    LabelVolume,
    ProbVolume,
    RegionSpec,
    VolumeMeta,
    argmax_labels,
    normalize,
    one_hot,
    region_mask,
)

__version__ = "0.1.0"
