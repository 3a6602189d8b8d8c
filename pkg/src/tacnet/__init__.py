"""Audio source counting from raw waveforms with a learnable Gabor/PCEN frontend."""
from .checkpoint import load_checkpoint, save_checkpoint
from .classifier import CompactCnnConfig, classifier_forward, classifier_gradients, predict
from .datasets import (DatasetManifest, MixtureRecord, SyntheticSourceConfig, chunk_dataset,
                       ingest_wav_dir, synth_generate)
from .evaluation import (ConfusionMatrix, EvalReport, evaluate, mae_window_sweep,
                         reference_table)
from .frontend import (FrontendParams, GaborFilterParams, PcenParams, PoolingParams, filter_stage,
                       frontend_forward, frontend_gradients, gabor_kernel, gaussian_kernel,
                       init_mel, pcen_stage, pooling_stage)
from .model import TacNet
from .signal_core import (ActivityMask, LabeledChunk, Waveform, WindowConfig,
                          active_count_per_sample, label_chunk_mode, make_windows, mix_sources,
                          segment_and_label)
from .training import (Adam, TrainConfig, TrainState, cross_entropy_loss, grad_check, train_loop,
                       train_step)

__version__ = "0.1.0"

__all__ = [
    "ActivityMask",
    "Adam",
    "CompactCnnConfig",
    "ConfusionMatrix",
    "DatasetManifest",
    "EvalReport",
    "FrontendParams",
    "GaborFilterParams",
    "LabeledChunk",
    "MixtureRecord",
    "PcenParams",
    "PoolingParams",
    "SyntheticSourceConfig",
    "TacNet",
    "TrainConfig",
    "TrainState",
    "Waveform",
    "WindowConfig",
    "active_count_per_sample",
    "chunk_dataset",
    "classifier_forward",
    "classifier_gradients",
    "cross_entropy_loss",
    "evaluate",
    "filter_stage",
    "frontend_forward",
    "frontend_gradients",
    "gabor_kernel",
    "gaussian_kernel",
    "grad_check",
    "ingest_wav_dir",
    "init_mel",
    "label_chunk_mode",
    "load_checkpoint",
    "mae_window_sweep",
    "make_windows",
    "mix_sources",
    "pcen_stage",
    "pooling_stage",
    "predict",
    "reference_table",
    "save_checkpoint",
    "segment_and_label",
    "synth_generate",
    "train_loop",
    "train_step",
]
