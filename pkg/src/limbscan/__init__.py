"""Microwave limb-imaging toolkit.

Pipeline: layered limb phantoms -> 2-D FDTD backscatter simulation ->
contour-derived velocity maps -> fast-marching travel times ->
time-domain backprojection -> pixel-wise detection metrics.
"""

from .constants import C0
from .geometry import ArrayGeometry
from .grid import RasterGrid, image_grid, scene_grid
from .phantom import (
    Contour,
    DielectricProps,
    PhantomSpec,
    TissueLabel,
    TissueMap,
    VelocityMap,
    build_phantom,
    extract_contour,
    perturb_contour,
    rasterize_velocity_map,
    tissue_properties,
)
from .fdtd import (
    SimConfig,
    Sinogram,
    Trace,
    Waveform,
    freespace_calibrate,
    make_waveform,
    simulate_scan,
    simulate_trace,
    time_axis_calibrate,
)
from .eikonal import TravelTimeMap, solve_all_elements, solve_travel_time, two_way_time
from .backproject import (
    BpImage,
    backproject_cgli,
    backproject_tof,
    interpolate_sample,
    normalize_minmax,
    tof_two_way_time,
)
from .metrics import (
    MaskPair,
    RocCurve,
    bce_loss,
    f1_score,
    iou_score,
    roc_curve,
    threshold_at_pfa,
    threshold_detector,
)
from .dataset import DatasetConfig, Manifest, SceneFile, generate_dataset
from .raster import load_raster, load_sinogram, save_raster, save_sinogram

__version__ = "0.1.0"
