"""
Pipeline Runner Module

PipelineRunner coordinates the stages of a detection run:
- gen-data: build (or ingest) the dataset and split it
- train-backbone: train and freeze the classifier
- train-aux: train the auxiliary ArcFace blocks against the frozen taps
- select-layers: score the blocks on validation data and pick the subset
- build-detector: fit DKNN / DNR over raw and refined embeddings, plus SAD
- attack: generate adversarial batches on the held-out test samples
- evaluate: score every detector x batch cell
- report: verify the cells against raw scores, write curves and plots
- bench: parameter overhead and per-batch latency

Each stage reads its inputs from the output directory and writes its
outputs there, so stages can be run one at a time or all together.
"""

import time
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from src.attacks import AdvBatch, AttackConfig, ada_dknn, cw_linf, pgd
from src.config import RunConfig, save_config
from src.data import (LabeledDataset, gen_blobs, gen_synthetic, load_cifar10_binary, load_splits, save_splits,
                      split_dataset)
from src.detectors import (
    Detector,
    DknnDetector,
    RawTapSource,
    SadDetector,
    UcanSource,
    dknn_build,
    dnr_train,
    load_detector,
    save_detector,
)
from src.evaluation import (
    BatchKey,
    evaluate_grid,
    latency_table,
    load_report,
    overhead_report,
    verify_report,
    write_latency,
    write_report,
)
from src.exceptions import CancelledError, ContractError, DataError
from src.logger import get_logger, set_log_mode
from src.model import BackboneModel, build_spec, load_model, serialize_model, train_backbone
from src.pipeline.artifacts import ArtifactPaths, require
from src.storage import read_json, write_json
from src.ucan import (
    ArcFaceConfig,
    build_aux_blocks,
    layer_scores,
    load_aux_blocks,
    save_aux_blocks,
    select_layers,
    train_aux,
)

logger = get_logger(__name__)

STAGES = (
    "gen-data",
    "train-backbone",
    "train-aux",
    "select-layers",
    "build-detector",
    "attack",
    "evaluate",
    "report",
    "bench",
)

# Stages executed by `run`, in order; bench stays opt-in
RUN_STAGES = STAGES[:-1]

ProgressCallback = Callable[[str, int, int], None]


class PipelineRunner:
    """
    Runs detection pipeline stages against one output directory.

    Features:
    - Every stage is a pure function of the run config and persisted artifacts
    - Missing inputs raise ResolutionError naming the artifact
    - Optional progress callback and cancellation hook for long stages
    """

    def __init__(self, config: RunConfig, progress_callback: Optional[ProgressCallback] = None,
                 cancel_check: Optional[Callable[[], bool]] = None):
        """
        Initialize the runner.

        Args:
            config: Validated run configuration
            progress_callback: Called as (stage, done, total) during attack and evaluate
            cancel_check: Returns True when the current stage should stop early
        """
        self.config = config
        self.paths = ArtifactPaths(config.out_dir)
        self.progress_callback = progress_callback
        self.cancel_check = cancel_check
        set_log_mode(config.get("logging", "mode"), config.log_file)

    # ============================================================
    # Dispatch
    # ============================================================

    def run_stage(self, stage: str) -> Dict[str, Any]:
        handlers = {
            "gen-data": self.gen_data,
            "train-backbone": self.train_backbone,
            "train-aux": self.train_aux,
            "select-layers": self.select_layers,
            "build-detector": self.build_detectors,
            "attack": self.attack,
            "evaluate": self.evaluate,
            "report": self.report,
            "bench": self.bench,
        }
        if stage not in handlers:
            raise ContractError(f"Unknown stage '{stage}'", details={"choices": list(STAGES)})
        started = time.time()
        logger.info("Stage %s started (out=%s)", stage, self.paths.root)
        summary = handlers[stage]()
        logger.info("Stage %s finished in %.1fs", stage, time.time() - started)
        return summary

    def run_all(self, stages: Sequence[str] = RUN_STAGES) -> Dict[str, Dict[str, Any]]:
        return {stage: self.run_stage(stage) for stage in stages}

    def _raise_if_cancelled(self, stage: str) -> None:
        if self.cancel_check and self.cancel_check():
            logger.info("Stage %s cancelled", stage)
            raise CancelledError(f"Stage {stage} cancelled", details={"stage": stage})

    def _progress(self, stage: str) -> Optional[Callable[[int, int], None]]:
        if self.progress_callback is None:
            return None
        return lambda done, total: self.progress_callback(stage, done, total)

    # ============================================================
    # Loading persisted artifacts
    # ============================================================

    def load_splits(self) -> Dict[str, LabeledDataset]:
        return load_splits(require(self.paths.splits, "dataset splits"))

    def load_model(self) -> BackboneModel:
        return load_model(require(self.paths.backbone, "backbone"), frozen=True)

    def load_blocks(self):
        return load_aux_blocks(require(self.paths.aux, "aux blocks"))

    def load_selection(self) -> List[int]:
        return [int(k) for k in read_json(require(self.paths.selection, "layer selection"))["layers"]]

    def load_detectors(self) -> List[Detector]:
        files = sorted(self.paths.detectors_dir.glob("*.ucan")) if self.paths.detectors_dir.exists() else []
        if not files:
            raise DataError(f"No detectors in {self.paths.detectors_dir}; run build-detector first")
        blocks = self.load_blocks() if self.paths.aux.exists() else None
        return [load_detector(path, blocks=blocks) for path in files]

    def load_batches(self) -> Dict[BatchKey, AdvBatch]:
        files = self.paths.attack_files() if self.paths.attacks_dir.exists() else []
        if not files:
            raise DataError(f"No adversarial batches in {self.paths.attacks_dir}; run attack first")
        batches = {}
        for path in files:
            batch = AdvBatch.load(path)
            target = (batch.config.get("detector_source") or {}).get("name", "")
            batches[BatchKey(batch.attack, batch.epsilon, int(batch.config.get("seed", 0)), target)] = batch
        return batches

    def evaluation_samples(self, splits: Dict[str, LabeledDataset]) -> LabeledDataset:
        """The test split, subsampled (seeded, order kept) to [eval] test_limit when that is non-zero."""
        test = splits["test"]
        test.require_nonempty("test split")
        limit = self.config.get("eval", "test_limit")
        if not limit or limit >= len(test):
            return test
        rng = np.random.default_rng(self.config.seed)
        return test.subset(np.sort(rng.choice(len(test), size=limit, replace=False)))

    # ============================================================
    # Stages
    # ============================================================

    def gen_data(self) -> Dict[str, Any]:
        data = self.config["data"]
        if data["source"] == "cifar10":
            dataset = load_cifar10_binary(data["cifar_path"], data["cifar_classes"] or None)
        elif data["source"] == "blobs":
            dataset = gen_blobs(data["classes"], data["per_class"], dim=data["dim"], separation=data["separation"],
                                seed=self.config.seed)
        else:
            dataset = gen_synthetic(data["classes"], data["per_class"], image_size=data["image_size"],
                                    separation=data["separation"], seed=self.config.seed,
                                    channels=data["channels"])
        splits = split_dataset(dataset, self.config.fractions, seed=self.config.seed)
        save_splits(splits, self.paths.splits, meta={"source": data["source"], "seed": self.config.seed})
        save_config(self.config, self.paths.config)
        sizes = {name: len(ds) for name, ds in splits.items()}
        logger.info("Dataset: %d samples, %d classes, splits %s", len(dataset), dataset.num_classes, sizes)
        return {"samples": len(dataset), "classes": dataset.num_classes, "splits": sizes}

    def train_backbone(self) -> Dict[str, Any]:
        cfg = self.config["backbone"]
        splits = self.load_splits()
        train, val = splits["train"], splits["val"]
        spec = build_spec(cfg["arch"], train.sample_shape, train.num_classes, cfg["widths"], cfg["downsample"])
        model = BackboneModel.initialize(spec, seed=self.config.seed)
        log = train_backbone(model, train, cfg["epochs"], seed=self.config.seed, val=val, lr=cfg["lr"],
                             momentum=cfg["momentum"], batch_size=cfg["batch_size"],
                             noise_augment=cfg["noise_augment"])
        model.freeze()
        val_accuracy = model.accuracy(val.samples, val.labels) if len(val) else float("nan")
        serialize_model(model, self.paths.backbone, meta={"val_accuracy": val_accuracy})
        write_json(self.paths.backbone_log, log.to_dict())
        return {"parameters": model.num_parameters(), "val_accuracy": val_accuracy, "epochs": len(log)}

    def train_aux(self) -> Dict[str, Any]:
        cfg = self.config["aux"]
        splits = self.load_splits()
        model = self.load_model()
        arcface = ArcFaceConfig(num_classes=model.spec.num_classes, scale=cfg["scale"], margin=cfg["margin"],
                                d_prime=cfg["d_prime"])
        blocks = build_aux_blocks(model.spec.tap_channels(), arcface, seed=self.config.seed)
        log = train_aux(model, blocks, splits["train"], cfg["epochs"], seed=self.config.seed, val=splits["val"],
                        lr=cfg["lr"], momentum=cfg["momentum"], batch_size=cfg["batch_size"])
        save_aux_blocks(blocks, self.paths.aux, meta={"best_epoch": log.best_epoch})
        write_json(self.paths.aux_log, log.to_dict())
        tcs = log.metric("tcs")
        return {"blocks": len(blocks), "initial_tcs": log.initial.get("tcs"),
                "final_tcs": tcs[log.best_epoch - 1] if tcs and log.best_epoch else None}

    def select_layers(self) -> Dict[str, Any]:
        cfg = self.config["selection"]
        splits = self.load_splits()
        model, blocks = self.load_model(), self.load_blocks()
        scores, tcs = layer_scores(model, blocks, splits["val"])
        layers = select_layers(scores, cfg["policy"], cfg["value"])
        document = {"policy": cfg["policy"], "value": cfg["value"], "layers": layers, "tcs": tcs,
                    "scores": [s.to_dict() for s in scores]}
        write_json(self.paths.selection, document)
        logger.info("Selected layers %s (%s=%s)", layers, cfg["policy"], cfg["value"])
        return document

    def build_detectors(self) -> Dict[str, Any]:
        cfg = self.config["detector"]
        splits = self.load_splits()
        model, layers = self.load_model(), self.load_selection()
        blocks = self.load_blocks() if "ucan" in cfg["sources"] else None
        train, calib = splits["train"], splits["calib"]
        built = []

        for source_kind in cfg["sources"]:
            for kind in cfg["kinds"]:
                if kind == "sad":
                    continue
                if source_kind == "ucan":
                    source = UcanSource(blocks, layers)
                else:
                    # DNR over raw taps works on pooled channel vectors
                    source = RawTapSource(layers, pooled=(kind == "dnr"))
                _, train_features = source.extract(model, train.samples)
                if kind == "dknn":
                    _, calib_features = source.extract(model, calib.samples)
                    detector = dknn_build(train_features, train.labels, calib_features, calib.labels, k=cfg["k"],
                                          num_classes=train.num_classes, source=source,
                                          smoothed=cfg["smoothed"], seed=self.config.seed)
                else:
                    detector = dnr_train(train_features, train.labels, num_classes=train.num_classes,
                                         source=source, C=cfg["svm_c"], tol=cfg["svm_tol"],
                                         max_iter=cfg["svm_max_iter"])
                save_detector(detector, self.paths.detector(kind, source_kind), meta={"layers": layers})
                built.append(f"{kind}/{source_kind}")

        if "sad" in cfg["kinds"]:
            save_detector(SadDetector(), self.paths.detector("sad", "logits"))
            built.append("sad/logits")
        logger.info("Built detectors: %s", ", ".join(built))
        return {"detectors": built, "layers": layers}

    def _attack_config(self, epsilon: float, seed: int) -> AttackConfig:
        cfg = self.config["attack"]
        return AttackConfig(epsilon=epsilon, steps=cfg["steps"], cw_c=cfg["cw_c"], cw_kappa=cfg["cw_kappa"],
                            cw_lr=cfg["cw_lr"], ada_steps=cfg["ada_steps"], ada_m=cfg["ada_m"],
                            ada_refresh=cfg["ada_refresh"], ada_weight=cfg["ada_weight"], seed=seed,
                            chunk_size=cfg["chunk_size"], workers=cfg["workers"])

    def attack(self) -> Dict[str, Any]:
        names = self.config.get("attack", "names")
        model = self.load_model()
        samples = self.evaluation_samples(self.load_splits())
        x, y = samples.samples, samples.labels
        dknn_detectors = []
        if "ada_dknn" in names:
            dknn_detectors = [d for d in self.load_detectors() if isinstance(d, DknnDetector)]
            if not dknn_detectors:
                raise DataError("ada_dknn needs at least one DKNN detector; add dknn to [detector] kinds")

        progress = self._progress("attack")
        written = []
        for seed in self.config.get("eval", "seeds"):
            for epsilon in self.config.get("attack", "epsilons"):
                cfg = self._attack_config(epsilon, seed)
                for name in names:
                    self._raise_if_cancelled("attack")
                    if name == "ada_dknn":
                        for detector in dknn_detectors:
                            batch = ada_dknn(model, detector, x, y, cfg, progress, self.cancel_check)
                            batch.save(self.paths.attack(name, epsilon, seed, detector.source_name))
                            written.append(batch.success_rate)
                        continue
                    attack_fn = pgd if name == "pgd" else cw_linf
                    batch = attack_fn(model, x, y, cfg, progress, self.cancel_check)
                    batch.save(self.paths.attack(name, epsilon, seed))
                    written.append(batch.success_rate)
        return {"batches": len(written), "samples": len(samples), "mean_success_rate": float(np.mean(written)) if written else 0.0}

    def evaluate(self) -> Dict[str, Any]:
        cfg = self.config["eval"]
        model = self.load_model()
        detectors = self.load_detectors()
        batches = self.load_batches()
        report = evaluate_grid(model, detectors, batches, positives=cfg["positives"], workers=cfg["workers"],
                               curve_grid=cfg["curve_grid"], progress_callback=self._progress("evaluate"),
                               cancel_check=self.cancel_check)
        self._raise_if_cancelled("evaluate")
        if self.paths.aux.exists():
            report.overhead = overhead_report(model, self.load_blocks()).to_dict()
        write_report(report, self.paths.report_dir, plots=False)
        return {"cells": len(report.cells), "failed": len(report.failed_cells())}

    def report(self) -> Dict[str, Any]:
        directory = require(self.paths.report_dir, "evaluation results")
        report = load_report(directory)
        mismatches = verify_report(directory)
        if mismatches:
            raise DataError(f"{len(mismatches)} cells disagree with their raw scores",
                            details={"cells": mismatches})
        write_report(report, directory, plots=True)
        averages = [row for row in report.averages() if row["attack"] == "all"]
        for row in averages:
            logger.info("%s/%s: mean best F1 %.4f over %d cells", row["detector"], row["source"], row["mean_f1"],
                        row["cells"])
        return {"cells": len(report.cells), "averages": averages}

    def bench(self) -> Dict[str, Any]:
        cfg = self.config["bench"]
        model = self.load_model()
        detectors = {f"{d.name}/{d.source_name}": d for d in self.load_detectors()}
        samples = self.evaluation_samples(self.load_splits()).samples
        table = latency_table(model, detectors, samples, batch=cfg["batch"], iterations=cfg["iterations"])
        write_latency(self.paths.latency, [stats.to_dict() for stats in table])
        write_json(self.paths.bench_dir / "environment.json", table[0].environment)
        overhead = overhead_report(model, self.load_blocks()).to_dict() if self.paths.aux.exists() else None
        if overhead is not None:
            write_json(self.paths.bench_dir / "overhead.json", overhead)
        return {"latency": [stats.to_dict() for stats in table], "overhead": overhead}
