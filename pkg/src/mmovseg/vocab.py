"""Class vocabulary and dataset manifest."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from PIL import Image

from .config import RunConfig, ValidationError

SPLITS = ("train", "test")


@dataclass(frozen=True)
class ClassVocabulary:
    """Ordered classes with seen flags. Order is the channel order of every
    downstream tensor (prompts, logits, confusion matrices).

    Seen classes always come first, so the train-time label indices are a
    prefix of the test-time ones.
    """

    names: tuple[str, ...]
    seen: tuple[bool, ...]
    prompt_template: str = "a photo of {}"
    ignore_index: int = 255

    def __post_init__(self):
        if len(self.names) != len(self.seen):
            raise ValidationError("names and seen flags differ in length")
        if any(not n or not n.strip() for n in self.names):
            raise ValidationError("class names must be non-empty")
        if len(set(self.names)) != len(self.names):
            raise ValidationError("class names must be unique")
        if not any(self.seen):
            raise ValidationError("vocabulary needs at least one seen class")
        if 0 <= self.ignore_index < len(self.names):
            raise ValidationError(f"ignore_index {self.ignore_index} collides with a class index")

    def __len__(self) -> int:
        return len(self.names)

    @property
    def seen_names(self) -> list[str]:
        return [n for n, s in zip(self.names, self.seen) if s]

    @property
    def novel_names(self) -> list[str]:
        return [n for n, s in zip(self.names, self.seen) if not s]

    def prompts(self) -> list[str]:
        return [self.prompt_template.format(n) for n in self.names]

    def train_view(self) -> "ClassVocabulary":
        """Vocabulary restricted to the seen classes."""
        keep = [i for i, s in enumerate(self.seen) if s]
        return ClassVocabulary(
            tuple(self.names[i] for i in keep), tuple(True for _ in keep),
            self.prompt_template, self.ignore_index,
        )

    def index(self, name: str) -> int:
        return self.names.index(name)


def resolve_vocabulary(config: RunConfig, manifest: "DatasetManifest | None" = None) -> ClassVocabulary:
    """Seen classes followed by novel ones; the two lists must be disjoint."""
    seen, novel = list(config.seen_classes), list(config.novel_classes)
    dup = (set(seen) & set(novel)) or {n for n in seen if seen.count(n) > 1} or {
        n for n in novel if novel.count(n) > 1}
    if dup:
        raise ValidationError(f"duplicate class name(s): {', '.join(sorted(dup))}")
    return ClassVocabulary(
        tuple(seen + novel), tuple([True] * len(seen) + [False] * len(novel)),
        config.prompt_template, config.ignore_index,
    )


@dataclass(frozen=True)
class ManifestEntry:
    rgb: str
    sar: str
    label: str
    split: str
    domain: str | None = None


@dataclass(frozen=True)
class DatasetManifest:
    image_size: tuple[int, int]
    entries: tuple[ManifestEntry, ...]
    root: Path = field(default=Path("."), compare=False)

    def split(self, name: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == name]

    def split_counts(self) -> dict[str, int]:
        return {s: len(self.split(s)) for s in SPLITS}

    def resolve(self, rel: str) -> Path:
        p = Path(rel)
        return p if p.is_absolute() else self.root / p

    def filter(self, split: str | None = None, domain: str | None = None) -> "DatasetManifest":
        keep = tuple(e for e in self.entries
                     if (split is None or e.split == split) and (domain is None or e.domain == domain))
        return DatasetManifest(self.image_size, keep, self.root)

    def to_json(self) -> dict:
        return {
            "image_size": list(self.image_size),
            "entries": [_entry_json(e) for e in self.entries],
        }


def _entry_json(e: ManifestEntry) -> dict:
    d = {"rgb": e.rgb, "sar": e.sar, "label": e.label, "split": e.split}
    if e.domain is not None:
        d["domain"] = e.domain
    return d


def save_manifest(manifest: DatasetManifest, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(manifest.to_json(), indent=1) + "\n")
    return path


def load_manifest(path: str | Path, check_files: bool = True) -> DatasetManifest:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise ValidationError(f"manifest not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"malformed manifest {path}: {exc}") from None
    if not isinstance(doc, dict) or "entries" not in doc or "image_size" not in doc:
        raise ValidationError(f"manifest {path} needs 'image_size' and 'entries'")
    size = doc["image_size"]
    if not (isinstance(size, list) and len(size) == 2 and all(isinstance(v, int) and v > 0 for v in size)):
        raise ValidationError(f"manifest image_size must be [H, W], got {size!r}")
    root = path.parent
    entries = []
    for i, raw in enumerate(doc["entries"]):
        if not isinstance(raw, dict):
            raise ValidationError(f"entry {i}: not an object")
        missing = {"rgb", "sar", "label", "split"} - set(raw)
        if missing:
            raise ValidationError(f"entry {i}: missing field(s) {', '.join(sorted(missing))}")
        extra = set(raw) - {"rgb", "sar", "label", "split", "domain"}
        if extra:
            raise ValidationError(f"entry {i}: unknown field(s) {', '.join(sorted(extra))}")
        if raw["split"] not in SPLITS:
            raise ValidationError(f"entry {i}: split must be train or test, got {raw['split']!r}")
        entry = ManifestEntry(raw["rgb"], raw["sar"], raw["label"], raw["split"], raw.get("domain"))
        entries.append(entry)
    manifest = DatasetManifest((size[0], size[1]), tuple(entries), root)
    if check_files:
        _check_tiles(manifest)
    return manifest


def _check_tiles(manifest: DatasetManifest) -> None:
    h, w = manifest.image_size
    for i, e in enumerate(manifest.entries):
        for kind in ("rgb", "sar", "label"):
            p = manifest.resolve(getattr(e, kind))
            if not p.is_file():
                raise ValidationError(f"entry {i}: {kind} tile not found: {p}")
            with Image.open(p) as im:
                if im.size != (w, h):
                    raise ValidationError(
                        f"entry {i}: {kind} tile is {im.size[1]}x{im.size[0]}, manifest declares {h}x{w}"
                    )
