from .edf import read_edf, write_edf
from .labels import (
    INTERICTAL,
    PREICTAL,
    LabeledInterval,
    Seizure,
    Span,
    Timeline,
    find_lead_seizures,
    label_regions,
)
from .recording import Recording, load_subject, read_annotations, write_annotations
from .synth import SynthParams, desk_subject, synth_eeg
from .windows import (
    Split,
    WindowedDataset,
    apply_normalization,
    build_dataset,
    extract_windows,
    five_fold_split,
    load_dataset,
    normalize,
    save_dataset,
    window_count,
)

__all__ = [
    "INTERICTAL",
    "PREICTAL",
    "LabeledInterval",
    "Recording",
    "Seizure",
    "Span",
    "Split",
    "SynthParams",
    "Timeline",
    "WindowedDataset",
    "apply_normalization",
    "build_dataset",
    "desk_subject",
    "extract_windows",
    "find_lead_seizures",
    "five_fold_split",
    "label_regions",
    "load_dataset",
    "load_subject",
    "normalize",
    "read_annotations",
    "read_edf",
    "save_dataset",
    "synth_eeg",
    "window_count",
    "write_annotations",
    "write_edf",
]
