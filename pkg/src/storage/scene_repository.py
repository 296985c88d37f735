"""
Scene and dataset persistence.

A scene is one JSON document (``SceneDocument``); a dataset is a directory
of scene files plus ``manifest.json`` listing them. Loading validates the
document schema with pydantic and then every scene invariant; the first
problem is raised as ``SceneParseError`` with its field path.
"""

import json
from pathlib import Path

from pydantic import ValidationError

from src.errors import SceneParseError
from src.models.models import AgentState, AgentTrack, MapPolyline, Scene, TrafficSignal
from src.models.schemas import (
    DATASET_SCHEMA_VERSION,
    SCENE_SCHEMA_VERSION,
    AgentStateDocument,
    AgentTrackDocument,
    DatasetManifest,
    MapPolylineDocument,
    SceneDocument,
    TrafficSignalDocument,
)
from src.scene.validation import validate_scene
from src.storage.atomic import atomic_write_text

MANIFEST_NAME: str = "manifest.json"
_NOT_SCENES: frozenset[str] = frozenset({MANIFEST_NAME, "run_manifest.json"})


# =============================================================================
# Document conversion
# =============================================================================


def scene_to_document(scene: Scene) -> SceneDocument:
    return SceneDocument(
        schema_version=SCENE_SCHEMA_VERSION,
        scene_id=scene.scene_id,
        t_obs=scene.t_obs,
        t_fut=scene.t_fut,
        family=scene.family,
        tracks=[
            AgentTrackDocument(
                agent_id=track.agent_id,
                agent_type=track.agent_type,
                states=[
                    AgentStateDocument(x=s.x, y=s.y, heading=s.heading, vx=s.vx, vy=s.vy, valid=s.valid)
                    for s in track.states
                ],
            )
            for track in scene.tracks
        ],
        map=[MapPolylineDocument(polyline_type=p.polyline_type, points=list(p.points)) for p in scene.map_polylines],
        signals=[
            TrafficSignalDocument(
                signal_id=s.signal_id, position=s.position, state_per_step=list(s.state_per_step)
            )
            for s in scene.signals
        ],
        predict_ids=list(scene.predict_ids),
    )


def document_to_scene(document: SceneDocument) -> Scene:
    return Scene(
        scene_id=document.scene_id,
        t_obs=document.t_obs,
        t_fut=document.t_fut,
        tracks=tuple(
            AgentTrack(
                agent_id=track.agent_id,
                agent_type=track.agent_type,
                states=tuple(
                    AgentState(x=s.x, y=s.y, heading=s.heading, vx=s.vx, vy=s.vy, valid=s.valid)
                    for s in track.states
                ),
            )
            for track in document.tracks
        ),
        map_polylines=tuple(
            MapPolyline(polyline_type=p.polyline_type, points=tuple((float(x), float(y)) for x, y in p.points))
            for p in document.map
        ),
        signals=tuple(
            TrafficSignal(
                signal_id=s.signal_id,
                position=(float(s.position[0]), float(s.position[1])),
                state_per_step=tuple(s.state_per_step),
            )
            for s in document.signals
        ),
        predict_ids=tuple(document.predict_ids),
        family=document.family,
    )


def _field_path(error: ValidationError) -> str:
    first = error.errors()[0]
    parts: list[str] = []
    for item in first["loc"]:
        if isinstance(item, int):
            parts[-1:] = [f"{parts[-1]}[{item}]"] if parts else [f"[{item}]"]
        else:
            parts.append(str(item))
    return ".".join(parts)


def parse_scene(payload: dict, source: str = "") -> Scene:
    """Validate a decoded JSON payload and build a Scene.

    Raises:
        SceneParseError: On schema-version mismatch, schema errors or scene
            invariant violations, naming the offending field.
    """
    prefix = f"{source}: " if source else ""
    version = payload.get("schema_version") if isinstance(payload, dict) else None
    if version != SCENE_SCHEMA_VERSION:
        raise SceneParseError(
            f"{prefix}schema version {version!r} does not match {SCENE_SCHEMA_VERSION!r}", "schema_version"
        )
    try:
        document = SceneDocument.model_validate(payload)
    except ValidationError as error:
        raise SceneParseError(f"{prefix}{error.errors()[0]['msg']}", _field_path(error)) from error
    scene = document_to_scene(document)
    violations = validate_scene(scene)
    if violations:
        raise SceneParseError(f"{prefix}{violations[0].message}", violations[0].field_path)
    return scene


# =============================================================================
# Files
# =============================================================================


def save_scene(scene: Scene, path: Path) -> None:
    atomic_write_text(path, scene_to_document(scene).model_dump_json(indent=1) + "\n")


def load_scene(path: Path) -> Scene:
    """Read one scene file.

    Raises:
        FileNotFoundError: If ``path`` does not exist.
        SceneParseError: For malformed JSON or an invalid scene.
    """
    if not path.exists():
        raise FileNotFoundError(f"scene file not found: {path}")
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as error:
        raise SceneParseError(f"{path.name}: malformed JSON ({error.msg} at line {error.lineno})") from error
    return parse_scene(payload, source=path.name)


class SceneRepository:
    """Reads and writes a dataset directory of scene files plus its manifest."""

    def __init__(self, dataset_dir: Path) -> None:
        self._dataset_dir = dataset_dir

    @property
    def dataset_dir(self) -> Path:
        return self._dataset_dir

    @property
    def manifest_path(self) -> Path:
        return self._dataset_dir / MANIFEST_NAME

    def save_dataset(self, scenes: list[Scene]) -> list[Path]:
        """Write every scene and then the manifest listing them."""
        self._dataset_dir.mkdir(parents=True, exist_ok=True)
        paths = []
        for scene in scenes:
            path = self._dataset_dir / f"{scene.scene_id}.json"
            save_scene(scene, path)
            paths.append(path)
        self._write_manifest([p.name for p in paths])
        return paths

    def load_dataset(self) -> list[Scene]:
        """Load every scene listed in the manifest, in manifest order.

        Raises:
            FileNotFoundError: If the manifest or a listed file is missing.
            SceneParseError: For a malformed manifest or scene.
        """
        manifest = self.read_manifest()
        return [load_scene(self._dataset_dir / name) for name in manifest.files]

    def read_manifest(self) -> DatasetManifest:
        if not self.manifest_path.exists():
            raise FileNotFoundError(f"dataset manifest not found: {self.manifest_path}")
        try:
            payload = json.loads(self.manifest_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as error:
            raise SceneParseError(f"{MANIFEST_NAME}: malformed JSON ({error.msg})") from error
        if not isinstance(payload, dict) or payload.get("schema_version") != DATASET_SCHEMA_VERSION:
            raise SceneParseError(f"{MANIFEST_NAME}: unsupported schema version", "schema_version")
        try:
            manifest = DatasetManifest.model_validate(payload)
        except ValidationError as error:
            raise SceneParseError(f"{MANIFEST_NAME}: {error.errors()[0]['msg']}", _field_path(error)) from error
        if manifest.count != len(manifest.files):
            raise SceneParseError(f"{MANIFEST_NAME}: count {manifest.count} != {len(manifest.files)} files", "count")
        return manifest

    def rebuild_manifest(self) -> DatasetManifest:
        """Recreate the manifest from the scene files present in the directory.

        Files that fail to parse are skipped with a warning line.
        """
        names = []
        for path in sorted(self._dataset_dir.glob("*.json")):
            if path.name in _NOT_SCENES or path.name.startswith("."):
                continue
            try:
                load_scene(path)
            except SceneParseError as error:
                print(f"⚠️  Skipping {path.name}: {error}")
                continue
            names.append(path.name)
        return self._write_manifest(names)

    def _write_manifest(self, names: list[str]) -> DatasetManifest:
        manifest = DatasetManifest(schema_version=DATASET_SCHEMA_VERSION, count=len(names), files=names)
        atomic_write_text(self.manifest_path, manifest.model_dump_json(indent=2) + "\n")
        return manifest
