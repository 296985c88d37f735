"""
Checkpoint persistence.

A checkpoint is a numpy ``.npz`` archive (no pickled objects) holding one
array per parameter under ``param/<name>`` plus a ``meta`` entry: UTF-8 JSON
bytes with the magic string, schema version, epoch counter, training
configuration and metric history. Files are written atomically; loading
reads and checks everything before returning, so a failed load leaves no
partial state behind.
"""

import io
import json
import zipfile
from dataclasses import asdict
from pathlib import Path

import numpy as np

from src.config.train_config import AblationMask
from src.errors import CheckpointError
from src.models.models import Checkpoint, EpochMetrics
from src.storage.atomic import atomic_write

CHECKPOINT_MAGIC: str = "DMTP-CHECKPOINT"
CHECKPOINT_SCHEMA_VERSION: str = "1.0"
_PARAM_PREFIX: str = "param/"
_META_KEY: str = "meta"


def save_checkpoint(checkpoint: Checkpoint, path: Path) -> None:
    """Write ``checkpoint`` to ``path`` atomically."""
    meta = {
        "magic": CHECKPOINT_MAGIC,
        "schema_version": CHECKPOINT_SCHEMA_VERSION,
        "epoch": checkpoint.epoch,
        "config": checkpoint.config,
        "history": [asdict(row) for row in checkpoint.history],
    }
    arrays = {f"{_PARAM_PREFIX}{name}": np.asarray(values) for name, values in checkpoint.parameters.items()}
    arrays[_META_KEY] = np.frombuffer(json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8)

    def write(handle) -> None:
        buffer = io.BytesIO()
        np.savez(buffer, **arrays)
        handle.write(buffer.getvalue())

    atomic_write(path, write)


def load_checkpoint(path: Path, requested_mask: AblationMask | None = None) -> Checkpoint:
    """Read a checkpoint written by ``save_checkpoint``.

    Args:
        path: Checkpoint file.
        requested_mask: Ablation mask the caller asked for. The checkpoint's own
            mask always wins; a notice is printed when they differ.

    Raises:
        FileNotFoundError: If ``path`` does not exist.
        CheckpointError: For truncated or corrupt files, a wrong magic string,
            another schema version or non-finite parameters.
    """
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    try:
        with np.load(path, allow_pickle=False) as archive:
            contents = {key: archive[key] for key in archive.files}
    except (OSError, ValueError, EOFError, KeyError, zipfile.BadZipFile) as error:
        raise CheckpointError(f"{path.name}: truncated or corrupt checkpoint ({error})") from error

    if _META_KEY not in contents:
        raise CheckpointError(f"{path.name}: missing checkpoint metadata")
    try:
        meta = json.loads(contents.pop(_META_KEY).tobytes().decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as error:
        raise CheckpointError(f"{path.name}: unreadable checkpoint metadata") from error
    if not isinstance(meta, dict) or meta.get("magic") != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path.name}: not a DMTP checkpoint")
    if meta.get("schema_version") != CHECKPOINT_SCHEMA_VERSION:
        raise CheckpointError(
            f"{path.name}: checkpoint version {meta.get('schema_version')!r}, expected {CHECKPOINT_SCHEMA_VERSION!r}"
        )

    parameters: dict[str, np.ndarray] = {}
    for key, values in contents.items():
        if not key.startswith(_PARAM_PREFIX):
            raise CheckpointError(f"{path.name}: unexpected entry {key!r}")
        if not np.all(np.isfinite(values)):
            raise CheckpointError(f"{path.name}: parameter {key[len(_PARAM_PREFIX):]} is not finite")
        parameters[key[len(_PARAM_PREFIX):]] = values

    try:
        history = [EpochMetrics(**row) for row in meta.get("history", [])]
        checkpoint = Checkpoint(
            parameters=parameters, config=dict(meta["config"]), epoch=int(meta["epoch"]), history=history
        )
    except (KeyError, TypeError, ValueError) as error:
        raise CheckpointError(f"{path.name}: incomplete checkpoint metadata ({error})") from error

    if requested_mask is not None:
        stored = AblationMask(**checkpoint.config.get("ablation", {}))
        if stored != requested_mask:
            print(f"ℹ️  Checkpoint ablation mask {asdict(stored)} overrides requested {asdict(requested_mask)}")
    return checkpoint
