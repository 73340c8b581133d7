"""Multi-station seismic event recognition via 1D-to-2D folding and
semantic segmentation, with a desk-scale trainable segmenter and the full
training, evaluation and streaming-inference harness."""

__version__ = "0.1.0"

from .core import (
    ClassLabel,
    EVENT_CLASSES,
    EventAnnotation,
    EventDetection,
    WindowBatch,
    label_from_code,
    label_from_name,
)
from .dsp import BandpassSpec, bandpass, normalize_max_abs
from .fold import FoldGeometry, GeometryError, fold, geometry, unfold_to_channels, unfold_to_time
from .postprocess import (
    PostConfig,
    TimeMaskSet,
    assign_class,
    binary_saturation,
    detect_events,
    run_postprocessing,
)
from .segmenter import (
    MaskStack,
    ToyUNet,
    ToyUNetSpec,
    TrainConfig,
    dice_loss,
    import_masks,
    train,
    write_masks,
)
from .dataset import (
    LabeledWindow,
    SynthClassProfile,
    augment_shuffle_stations,
    balance_classes,
    default_profiles,
    extract_windows,
    make_target,
    read_window_file,
    synth_corpus,
    write_window_file,
)
from .evaluate import (
    EvalReport,
    FlexSplit,
    NoiseSpec,
    SNR_GRID_DB,
    add_noise,
    classify_window,
    event_iou,
    evaluate_model,
    f1_report,
    flexibility_protocol,
    mean_iou,
    noise_sweep,
)
from .pipeline import StreamProcessor, infer_window, run_stream
