"""Two-stage multimodal (RGB + SAR) open-vocabulary segmentation at desk scale."""

from .config import RunConfig, ValidationError, load_config
from .vocab import ClassVocabulary, DatasetManifest, load_manifest, resolve_vocabulary

__all__ = [
    "ClassVocabulary", "DatasetManifest", "RunConfig", "ValidationError",
    "load_config", "load_manifest", "resolve_vocabulary",
]
