"""Structure-preserving one-shot stylization for segmentation under domain shift.

A deterministic-sampler diffusion autoencoder learns the source domain;
a single target exemplar then drives a style mapper whose per-step
latent correction keeps lesion geometry fixed while appearance moves to
the target domain. Stylized copies of the source training set let a
plain U-Net segmenter transfer to the target domain, and a saliency-
style metric suite (Dice, IoU, specificity, weighted F, S-measure,
E-measure, MAE) scores the result.
"""

from .checkpoints import (
    content_hash,
    load_diffae,
    load_mapper,
    load_segmenter,
    save_diffae,
    save_mapper,
    save_segmenter,
)
from .data import (
    DatasetManifest,
    DomainStyle,
    LesionSpec,
    Sample,
    SynthConfig,
    default_source_style,
    default_target_style,
    generate_synthetic,
    images_array,
    load_dataset,
    load_image,
    masks_array,
    save_images,
    split,
)
from .diffusion import (
    DiffAEConfig,
    DiffAEModel,
    LatentState,
    SemanticCode,
    ddim_forward_step,
    ddim_reverse_step,
    encode_semantic,
    generate_conditioned,
    predict_x0,
    train_diffae,
)
from .embedding import ConvEmbedding, EmbedConfig, EmbeddingBackend, train_embedding
from .experiment import ArmMetrics, ExperimentConfig, ExperimentResult, run_domain_shift_experiment
from .metrics import (
    CSV_COLUMNS,
    ConfusionCounts,
    MetricReport,
    confusion,
    dice,
    e_measure_max,
    evaluate_all,
    evaluate_directories,
    iou,
    mae,
    s_measure,
    specificity,
    weighted_fbeta,
    write_mean_csv,
    write_report_csv,
)
from .networks import CondDenoiser, SemanticEncoder, sinusoidal_time_embedding
from .schedule import NoiseSchedule
from .segmentation import SegConfig, UNetSegmenter, predict_mask, run_pipeline, seg_loss, train_segmenter
from .spn import SPN, inject, spn_apply, spn_loss
from .style import (
    StyleConfig,
    StyleMapper,
    adv_loss,
    cycle_loss,
    map_to_source,
    map_to_target,
    stylize,
    stylize_images,
    total_style_loss,
    train_style_mapper,
)

__version__ = "0.1.0"

__all__ = [
    "ArmMetrics",
    "CSV_COLUMNS",
    "CondDenoiser",
    "ConfusionCounts",
    "ConvEmbedding",
    "DatasetManifest",
    "DiffAEConfig",
    "DiffAEModel",
    "DomainStyle",
    "EmbedConfig",
    "EmbeddingBackend",
    "ExperimentConfig",
    "ExperimentResult",
    "LatentState",
    "LesionSpec",
    "MetricReport",
    "NoiseSchedule",
    "SPN",
    "Sample",
    "SegConfig",
    "SemanticCode",
    "SemanticEncoder",
    "StyleConfig",
    "StyleMapper",
    "SynthConfig",
    "UNetSegmenter",
    "adv_loss",
    "confusion",
    "content_hash",
    "cycle_loss",
    "ddim_forward_step",
    "ddim_reverse_step",
    "default_source_style",
    "default_target_style",
    "dice",
    "e_measure_max",
    "encode_semantic",
    "evaluate_all",
    "evaluate_directories",
    "generate_conditioned",
    "generate_synthetic",
    "images_array",
    "inject",
    "iou",
    "load_dataset",
    "load_diffae",
    "load_image",
    "load_mapper",
    "load_segmenter",
    "mae",
    "map_to_source",
    "map_to_target",
    "masks_array",
    "predict_mask",
    "predict_x0",
    "run_domain_shift_experiment",
    "run_pipeline",
    "s_measure",
    "save_diffae",
    "save_images",
    "save_mapper",
    "save_segmenter",
    "seg_loss",
    "sinusoidal_time_embedding",
    "specificity",
    "split",
    "spn_apply",
    "spn_loss",
    "stylize",
    "stylize_images",
    "total_style_loss",
    "train_diffae",
    "train_embedding",
    "train_segmenter",
    "train_style_mapper",
    "weighted_fbeta",
    "write_mean_csv",
    "write_report_csv",
]
