"""
Report repository for the DMTP toolkit.

Implements the repository pattern to keep persistence out of the pipeline
facade. Every artifact a command produces (predictions, metric reports,
Shapley reports, training logs, ablation tables, run manifests) is written
through this class, atomically, into one output directory. JSON documents are
validated with the pydantic schemas; tabular outputs are plot-ready CSV.
"""

import json
from dataclasses import asdict
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd
from pydantic import ValidationError

from src.errors import SceneParseError
from src.models.models import (
    FEATURE_GROUPS,
    EpochMetrics,
    FeatureGroup,
    MetricReport,
    PredictionSet,
    ShapleyReport,
)
from src.models.schemas import (
    PREDICTION_SCHEMA_VERSION,
    ElementDocument,
    ElementsDocument,
    MetricReportDocument,
    PhiDocument,
    PredictionDocument,
    PredictionFile,
    RunManifest,
    SceneMetricsDocument,
    ShapleyReportDocument,
)
from src.storage.atomic import atomic_write_text
from src.training.ablation import AblationRow

HEATMAP_COLUMNS: tuple[str, ...] = ("h", "n", "s", "m")
TRAINING_LOG_COLUMNS: tuple[str, ...] = ("epoch", "L_ddpm", "L_traj", "L_conf", "minSADE_val", "minSFDE_val")


# =============================================================================
# Document conversion
# =============================================================================


def prediction_to_document(prediction: PredictionSet) -> PredictionDocument:
    return PredictionDocument(
        scene_id=prediction.scene_id,
        agent_ids=list(prediction.agent_ids),
        trajectories=prediction.trajectories.tolist(),
        confidences=prediction.confidences.tolist(),
    )


def document_to_prediction(document: PredictionDocument) -> PredictionSet:
    """Build a PredictionSet, checking the nested lists form a (K, A, T, 2) block.

    Raises:
        SceneParseError: If the trajectory lists are ragged or disagree with
            the agent and confidence counts.
    """
    try:
        trajectories = np.array(document.trajectories, dtype=np.float64)
    except ValueError as error:
        raise SceneParseError(f"{document.scene_id}: ragged trajectories", "trajectories") from error
    confidences = np.array(document.confidences, dtype=np.float64)
    num_modes = len(document.confidences)
    if trajectories.ndim != 4 or trajectories.shape[0] != num_modes or trajectories.shape[1] != len(document.agent_ids):
        raise SceneParseError(
            f"{document.scene_id}: trajectories {trajectories.shape} do not match "
            f"{num_modes} modes x {len(document.agent_ids)} agents",
            "trajectories",
        )
    return PredictionSet(
        scene_id=document.scene_id,
        agent_ids=tuple(document.agent_ids),
        trajectories=trajectories,
        confidences=confidences,
    )


def metric_report_to_document(report: MetricReport) -> MetricReportDocument:
    return MetricReportDocument(
        min_sade=report.min_sade,
        min_sfde=report.min_sfde,
        smr=report.smr,
        map_score=report.map_score,
        miss_threshold=report.miss_threshold,
        excluded_count=len(report.excluded),
        excluded=list(report.excluded),
        scenes=[SceneMetricsDocument(**asdict(row)) for row in report.scenes],
    )


def shapley_report_to_document(report: ShapleyReport) -> ShapleyReportDocument:
    return ShapleyReportDocument(
        scene_id=report.scene_id,
        metric=report.metric,
        v_empty=report.v_empty,
        v_full=report.v_full,
        error_empty=report.error_empty,
        error_full=report.error_full,
        phi=PhiDocument(**{group.value: report.phi[group] for group in FEATURE_GROUPS}),
        elements=ElementsDocument(
            neighbors=[ElementDocument(id=e.element_id, contribution=e.contribution) for e in report.neighbor_elements],
            signals=[ElementDocument(id=e.element_id, contribution=e.contribution) for e in report.signal_elements],
        ),
        coalition_values=dict(report.coalition_values),
        seeds=list(report.seeds),
    )


def heatmap_frame(reports: Sequence[ShapleyReport]) -> pd.DataFrame:
    """One row per report, columns ``scene_id, h, n, s, m``."""
    rows = [
        {"scene_id": report.scene_id, **{col: report.phi[group] for col, group in zip(HEATMAP_COLUMNS, FeatureGroup)}}
        for report in reports
    ]
    return pd.DataFrame(rows, columns=["scene_id", *HEATMAP_COLUMNS])


def _csv_text(frame: pd.DataFrame) -> str:
    return frame.to_csv(index=False, lineterminator="\n", float_format="%.9g")


class ReportRepository:
    """Writes command outputs into one directory and reads predictions back."""

    PREDICTIONS_NAME: str = "predictions.json"
    METRICS_NAME: str = "metrics.json"
    METRICS_CSV_NAME: str = "metrics_per_scene.csv"
    TRAINING_LOG_NAME: str = "training_log.csv"
    CHECKPOINT_NAME: str = "checkpoint.npz"
    ABLATION_NAME: str = "ablation_{grid}.csv"
    HEATMAP_NAME: str = "importance_heatmap.csv"
    RUN_MANIFEST_NAME: str = "run_manifest.json"

    def __init__(self, output_dir: Path) -> None:
        """Initialize the repository and ensure the output directory exists.

        Args:
            output_dir: Directory every artifact of one command is written to.
        """
        self._output_dir = output_dir
        self._output_dir.mkdir(parents=True, exist_ok=True)

    @property
    def output_dir(self) -> Path:
        return self._output_dir

    @property
    def checkpoint_path(self) -> Path:
        return self._output_dir / self.CHECKPOINT_NAME

    # ------------------------------------------------------------------
    # Predictions
    # ------------------------------------------------------------------

    def save_predictions(self, predictions: Sequence[PredictionSet]) -> Path:
        path = self._output_dir / self.PREDICTIONS_NAME
        document = PredictionFile(
            schema_version=PREDICTION_SCHEMA_VERSION,
            predictions=[prediction_to_document(p) for p in predictions],
        )
        atomic_write_text(path, document.model_dump_json(indent=1) + "\n")
        return path

    @staticmethod
    def load_predictions(path: Path) -> list[PredictionSet]:
        """Read a prediction file written by ``save_predictions``.

        Raises:
            FileNotFoundError: If ``path`` does not exist.
            SceneParseError: For malformed JSON, another schema version or
                structurally invalid predictions.
        """
        if not path.exists():
            raise FileNotFoundError(f"prediction file not found: {path}")
        try:
            payload = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as error:
            raise SceneParseError(f"{path.name}: malformed JSON ({error.msg} at line {error.lineno})") from error
        version = payload.get("schema_version") if isinstance(payload, dict) else None
        if version != PREDICTION_SCHEMA_VERSION:
            raise SceneParseError(
                f"{path.name}: schema version {version!r} does not match {PREDICTION_SCHEMA_VERSION!r}",
                "schema_version",
            )
        try:
            document = PredictionFile.model_validate(payload)
        except ValidationError as error:
            first = error.errors()[0]
            location = ".".join(str(item) for item in first["loc"])
            raise SceneParseError(f"{path.name}: {first['msg']}", location) from error
        return [document_to_prediction(item) for item in document.predictions]

    # ------------------------------------------------------------------
    # Reports
    # ------------------------------------------------------------------

    def save_metric_report(self, report: MetricReport) -> list[Path]:
        """Write the report as JSON plus a per-scene CSV breakdown."""
        json_path = self._output_dir / self.METRICS_NAME
        atomic_write_text(json_path, metric_report_to_document(report).model_dump_json(indent=2) + "\n")
        csv_path = self._output_dir / self.METRICS_CSV_NAME
        frame = pd.DataFrame(
            [asdict(row) for row in report.scenes],
            columns=["scene_id", "min_sade", "min_sfde", "missed", "best_mode"],
        )
        atomic_write_text(csv_path, _csv_text(frame))
        return [json_path, csv_path]

    def save_shapley_reports(self, reports: Sequence[ShapleyReport]) -> list[Path]:
        """One ``shapley_<scene_id>.json`` per report plus the shared heatmap CSV."""
        paths = []
        for report in reports:
            path = self._output_dir / f"shapley_{report.scene_id}.json"
            atomic_write_text(path, shapley_report_to_document(report).model_dump_json(indent=2) + "\n")
            paths.append(path)
        heatmap = self._output_dir / self.HEATMAP_NAME
        atomic_write_text(heatmap, _csv_text(heatmap_frame(reports)))
        paths.append(heatmap)
        return paths

    def save_training_log(self, history: Sequence[EpochMetrics]) -> Path:
        path = self._output_dir / self.TRAINING_LOG_NAME
        frame = pd.DataFrame(
            [
                (row.epoch, row.l_ddpm, row.l_traj, row.l_conf, row.min_sade_val, row.min_sfde_val)
                for row in history
            ],
            columns=list(TRAINING_LOG_COLUMNS),
        )
        atomic_write_text(path, _csv_text(frame))
        return path

    def save_ablation(self, grid: str, rows: Sequence[AblationRow]) -> Path:
        path = self._output_dir / self.ABLATION_NAME.format(grid=grid)
        frame = pd.DataFrame([asdict(row) for row in rows], columns=list(AblationRow.__dataclass_fields__))
        atomic_write_text(path, _csv_text(frame))
        return path

    def save_json(self, name: str, payload: dict) -> Path:
        """Write an arbitrary JSON payload (used for the information-theory demo)."""
        path = self._output_dir / name
        atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")
        return path

    def save_run_manifest(self, manifest: RunManifest) -> Path:
        path = self._output_dir / self.RUN_MANIFEST_NAME
        atomic_write_text(path, manifest.model_dump_json(indent=2) + "\n")
        return path
