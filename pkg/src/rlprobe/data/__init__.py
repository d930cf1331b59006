from .containers import (
    LABEL_KINDS,
    ROLES,
    STACK,
    Corpus,
    FeatureSet,
    SplitSpec,
    Step,
    Trajectory,
)
from .io import (
    read_corpus_file,
    read_feature_file,
    read_manifest,
    sha256_file,
    write_corpus_file,
    write_feature_file,
    write_manifest,
)
from .ops import binarize_reward, intensity_jitter, random_crop, split, split_indices

__all__ = [
    "LABEL_KINDS", "ROLES", "STACK", "Corpus", "FeatureSet", "SplitSpec", "Step", "Trajectory",
    "binarize_reward", "intensity_jitter", "random_crop", "read_corpus_file", "read_feature_file",
    "read_manifest", "sha256_file", "split", "split_indices", "write_corpus_file",
    "write_feature_file", "write_manifest",
]
