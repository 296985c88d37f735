"""
Experiment orchestrator for the DMTP toolkit.

Coordinates scene generation, training, sampling, evaluation, explanation,
ablation and the information-theory demo, following the facade pattern to
provide a single entry point for the CLI. Every command writes its artifacts
through ``ReportRepository`` and finishes with a ``run_manifest.json``.
"""

import time
from dataclasses import asdict
from pathlib import Path
from typing import Sequence

from src.config import settings
from src.config.train_config import AblationMask, TrainConfig
from src.errors import ExplainInputError
from src.explain.infotheory import info_demo
from src.explain.oracles import ConstantPredictor, MapFollowingOracle
from src.explain.shapley import Predictor, aggregate_global, explain_dataset
from src.metrics.report import evaluate_predictions
from src.models.models import Checkpoint, MetricReport, Scene, ShapleyReport
from src.models.schemas import RunManifest
from src.predictor.model import TrajectoryModel
from src.scene.generator import GeneratorConfig, generate_dataset
from src.storage.checkpoint_repository import load_checkpoint, save_checkpoint
from src.storage.repository import ReportRepository
from src.storage.scene_repository import SceneRepository
from src.training.ablation import AblationRow, run_ablation
from src.training.trainer import Trainer

ORACLES: tuple[str, ...] = ("map", "constant")


class ExperimentPipeline:
    """Runs one CLI command end to end and records what it did.

    Callers interact only with this class, without needing knowledge of the
    model, storage or explanation modules.
    """

    def __init__(self, output_dir: Path, show_progress: bool = True) -> None:
        """Initialise the pipeline for one output directory.

        Args:
            output_dir: Directory every artifact of the command is written to.
            show_progress: Whether long loops draw tqdm progress bars.
        """
        self._output_dir = output_dir
        self._repository = ReportRepository(output_dir)
        self._show_progress = show_progress
        self._started = time.monotonic()

    @property
    def repository(self) -> ReportRepository:
        return self._repository

    # ------------------------------------------------------------------
    # Commands
    # ------------------------------------------------------------------

    def generate_data(self, family: str, count: int, seed: int, config: GeneratorConfig) -> list[Path]:
        """Generate ``count`` scenes of ``family`` into the output directory."""
        self._started = time.monotonic()
        scenes = generate_dataset(family, count, seed, config)
        repository = SceneRepository(self._output_dir)
        paths = repository.save_dataset(scenes)
        print(f"🗺️  Generated {len(paths)} {family} scene(s) → {self._output_dir}")
        self._write_manifest(
            "gen-data",
            {"family": family, "count": count, "generator": asdict(config)},
            inputs={},
            outputs={"manifest": str(repository.manifest_path)},
            seed=seed,
        )
        return paths

    def train(self, data_dir: Path, config: TrainConfig, validation_dir: Path | None = None) -> Checkpoint:
        """Train on a dataset directory and save the checkpoint plus its metric log."""
        self._started = time.monotonic()
        scenes = SceneRepository(data_dir).load_dataset()
        validation = SceneRepository(validation_dir).load_dataset() if validation_dir else None
        trainer = Trainer(config, show_progress=self._show_progress)
        checkpoint = trainer.train(scenes, validation)
        save_checkpoint(checkpoint, self._repository.checkpoint_path)
        log_path = self._repository.save_training_log(checkpoint.history)
        print(f"💾 Checkpoint → {self._repository.checkpoint_path}")
        inputs = {"data": str(data_dir)}
        if validation_dir:
            inputs["validation"] = str(validation_dir)
        self._write_manifest(
            "train",
            trainer.config.to_dict(),
            inputs=inputs,
            outputs={"checkpoint": str(self._repository.checkpoint_path), "training_log": str(log_path)},
            seed=config.seed,
        )
        return checkpoint

    def predict(
        self,
        checkpoint_path: Path,
        data_dir: Path,
        seed: int,
        requested_mask: AblationMask | None = None,
    ) -> Path:
        """Sample K joint futures for every scene of a dataset."""
        self._started = time.monotonic()
        model = self._load_model(checkpoint_path, requested_mask)
        scenes = SceneRepository(data_dir).load_dataset()
        predictions = [model.predict(scene, seed=seed) for scene in scenes]
        path = self._repository.save_predictions(predictions)
        print(f"🔮 Predicted {len(predictions)} scene(s) → {path}")
        self._write_manifest(
            "predict",
            model.config.to_dict(),
            inputs={"checkpoint": str(checkpoint_path), "data": str(data_dir)},
            outputs={"predictions": str(path)},
            seed=seed,
        )
        return path

    def evaluate(self, predictions_path: Path, data_dir: Path, miss_threshold: float, seed: int) -> MetricReport:
        """Score a prediction file against the scenes it was made for."""
        self._started = time.monotonic()
        predictions = ReportRepository.load_predictions(predictions_path)
        scenes = SceneRepository(data_dir).load_dataset()
        report = evaluate_predictions(predictions, scenes, miss_threshold)
        paths = self._repository.save_metric_report(report)
        print(
            f"📊 minSADE={report.min_sade:.3f}  minSFDE={report.min_sfde:.3f}  "
            f"sMR={report.smr:.3f}  mAP={report.map_score:.3f}"
        )
        if report.excluded:
            print(f"⚠️  Excluded {len(report.excluded)} scene(s) without a valid future step")
        self._write_manifest(
            "evaluate",
            {"miss_threshold": miss_threshold},
            inputs={"predictions": str(predictions_path), "data": str(data_dir)},
            outputs={"metrics": str(paths[0]), "metrics_per_scene": str(paths[1])},
            seed=seed,
        )
        return report

    def explain(
        self,
        data_dir: Path,
        metric: str,
        seeds: Sequence[int],
        checkpoint_path: Path | None = None,
        oracle: str | None = None,
        scene_id: str | None = None,
        workers: int = 1,
        requested_mask: AblationMask | None = None,
    ) -> list[ShapleyReport]:
        """Per-scene feature importance for one scene or a whole dataset."""
        self._started = time.monotonic()
        model = self._predictor(checkpoint_path, oracle, requested_mask)
        scenes = self._select(SceneRepository(data_dir).load_dataset(), scene_id)
        reports = explain_dataset(model, scenes, metric, seeds, workers, self._show_progress)
        paths = self._repository.save_shapley_reports(reports)
        print(f"🧭 Explained {len(reports)} scene(s) → {self._output_dir}")
        self._write_manifest(
            "explain",
            self._explain_config(metric, seeds, oracle, scene_id, workers),
            inputs=self._explain_inputs(data_dir, checkpoint_path),
            outputs={path.stem: str(path) for path in paths},
            seed=seeds[0],
        )
        return reports

    def explain_global(
        self,
        data_dir: Path,
        metric: str,
        seeds: Sequence[int],
        checkpoint_path: Path | None = None,
        oracle: str | None = None,
        workers: int = 1,
        requested_mask: AblationMask | None = None,
    ) -> ShapleyReport:
        """Dataset-level feature importance; scene reports are written alongside."""
        self._started = time.monotonic()
        model = self._predictor(checkpoint_path, oracle, requested_mask)
        scenes = SceneRepository(data_dir).load_dataset()
        reports = explain_dataset(model, scenes, metric, seeds, workers, self._show_progress)
        overall = aggregate_global(reports)
        paths = self._repository.save_shapley_reports([*reports, overall])
        ranking = sorted(overall.phi.items(), key=lambda item: -item[1])
        print("🌍 Global importance: " + ", ".join(f"{group.value}={value:.3f}" for group, value in ranking))
        self._write_manifest(
            "explain-global",
            self._explain_config(metric, seeds, oracle, None, workers),
            inputs=self._explain_inputs(data_dir, checkpoint_path),
            outputs={path.stem: str(path) for path in paths},
            seed=seeds[0],
        )
        return overall

    def ablate(
        self, grid: str, data_dir: Path, config: TrainConfig, eval_dir: Path | None = None
    ) -> list[AblationRow]:
        """Run an ablation grid and write its comparison CSV."""
        self._started = time.monotonic()
        train_scenes = SceneRepository(data_dir).load_dataset()
        eval_scenes = SceneRepository(eval_dir).load_dataset() if eval_dir else None
        rows = run_ablation(grid, config, train_scenes, eval_scenes, self._show_progress)
        path = self._repository.save_ablation(grid, rows)
        print(f"🧪 {len(rows)} ablation row(s) → {path}")
        inputs = {"data": str(data_dir)}
        if eval_dir:
            inputs["eval"] = str(eval_dir)
        self._write_manifest(
            "ablate",
            {"grid": grid, "base": config.to_dict()},
            inputs=inputs,
            outputs={"ablation": str(path)},
            seed=config.seed,
        )
        return rows

    def info_demo(self, seed: int) -> dict[str, dict[str, float]]:
        """Exact information-theory quantities on the built-in tables."""
        self._started = time.monotonic()
        results = info_demo()
        path = self._repository.save_json("info_demo.json", results)
        for table, quantities in results.items():
            print(f"🔢 {table}: " + ", ".join(f"{name}={value:.6f}" for name, value in quantities.items()))
        self._write_manifest("info-demo", {}, inputs={}, outputs={"info_demo": str(path)}, seed=seed)
        return results

    # ------------------------------------------------------------------
    # Private helpers
    # ------------------------------------------------------------------

    @staticmethod
    def _load_model(checkpoint_path: Path, requested_mask: AblationMask | None) -> TrajectoryModel:
        return TrajectoryModel.from_checkpoint(load_checkpoint(checkpoint_path, requested_mask))

    def _predictor(
        self, checkpoint_path: Path | None, oracle: str | None, requested_mask: AblationMask | None
    ) -> Predictor:
        if (checkpoint_path is None) == (oracle is None):
            raise ExplainInputError("explain needs exactly one of a checkpoint or an oracle")
        if checkpoint_path is not None:
            return self._load_model(checkpoint_path, requested_mask)
        if oracle == "map":
            return MapFollowingOracle()
        if oracle == "constant":
            return ConstantPredictor()
        raise ExplainInputError(f"unknown oracle {oracle!r}; expected one of {list(ORACLES)}")

    @staticmethod
    def _select(scenes: list[Scene], scene_id: str | None) -> list[Scene]:
        if scene_id is None:
            return scenes
        chosen = [scene for scene in scenes if scene.scene_id == scene_id]
        if not chosen:
            raise ExplainInputError(f"{scene_id}: no such scene in the dataset")
        return chosen

    @staticmethod
    def _explain_config(
        metric: str, seeds: Sequence[int], oracle: str | None, scene_id: str | None, workers: int
    ) -> dict:
        return {"metric": metric, "seeds": list(seeds), "oracle": oracle, "scene_id": scene_id, "workers": workers}

    @staticmethod
    def _explain_inputs(data_dir: Path, checkpoint_path: Path | None) -> dict[str, str]:
        inputs = {"data": str(data_dir)}
        if checkpoint_path is not None:
            inputs["checkpoint"] = str(checkpoint_path)
        return inputs

    def _write_manifest(
        self, command: str, config: dict, inputs: dict[str, str], outputs: dict[str, str], seed: int
    ) -> None:
        manifest = RunManifest(
            command=command,
            config=config,
            inputs=inputs,
            outputs=outputs,
            seed=seed,
            tool_version=settings.TOOL_VERSION,
            duration_seconds=round(time.monotonic() - self._started, 3),
        )
        path = self._repository.save_run_manifest(manifest)
        print(f"   Manifest  → {path}")
