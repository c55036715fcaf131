"""Per-pixel probabilistic graphical model fusion of land-cover probability rasters."""

from .align import GroupMap, build_group_map, group_agreement, reliability_weight
from .assess import ConfusionMatrix, class_accuracies, overall_accuracy, score
from .errors import FusionError
from .pgm import (
    FusionCpd,
    FusionMode,
    PixelModel,
    combine_pair,
    fuse_pixel,
    fuse_raster,
    fuse_raster_detailed,
    joint_enumeration_oracle,
    marginal_map,
)
from .raster import (
    BandRaster,
    GridGeometry,
    LabelRaster,
    MaskFlag,
    MaskRaster,
    ProbabilityRaster,
    SampleSet,
    normalize_distribution,
    read_raster,
    read_samples,
    write_raster,
    write_samples,
)

__version__ = "0.1.0"
