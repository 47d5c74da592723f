"""
Detector artifacts ("detector" kind).

Meta records the detector name, its embedding source description and
scalar settings; sections hold arrays. A UcanSource is rebuilt from the
aux blocks passed to ``load_detector``.
"""

from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np

from src.detectors.base import Detector
from src.detectors.dknn import CalibrationStore, DknnDetector
from src.detectors.dnr import DnrDetector
from src.detectors.sad import SadDetector
from src.detectors.sources import source_from_description
from src.detectors.svm import RbfSvm
from src.exceptions import ContractError
from src.storage import Container, load, save
from src.ucan.auxiliary import AuxBlock


def _svm_meta(svm: RbfSvm) -> dict:
    return {"bias": svm.bias, "gamma": svm.gamma, "C": svm.C, "residual": svm.residual,
            "iterations": svm.iterations}


def _put_svm(container: Container, prefix: str, svm: RbfSvm) -> dict:
    container.sections[f"{prefix}.sv"] = [svm.support_vectors]
    container.sections[f"{prefix}.coef"] = [svm.dual_coef]
    return _svm_meta(svm)


def _get_svm(container: Container, prefix: str, meta: dict) -> RbfSvm:
    return RbfSvm(support_vectors=container.tensor(f"{prefix}.sv"), dual_coef=container.tensor(f"{prefix}.coef"),
                  bias=float(meta["bias"]), gamma=float(meta["gamma"]), C=float(meta["C"]),
                  residual=float(meta.get("residual", 0.0)), iterations=int(meta.get("iterations", 0)))


def save_detector(detector: Detector, path: Union[str, Path], meta: Optional[dict] = None) -> Path:
    container = Container(kind="detector", meta={
        "detector": detector.name,
        "source": detector.source.describe() if detector.source is not None else None,
        **(meta or {}),
    })
    if isinstance(detector, DknnDetector):
        container.meta.update({"k": detector.k, "num_classes": detector.num_classes,
                               "smoothed": detector.smoothed, "seed": detector.seed})
        container.sections["train.embeddings"] = list(detector.store.train_embeddings)
        container.sections["train.labels"] = [detector.store.train_labels.astype(np.float64)]
        container.sections["calibration"] = [detector.store.calibration]
    elif isinstance(detector, DnrDetector):
        svm_meta: List[List[dict]] = []
        for position, svms in enumerate(detector.layer_svms):
            svm_meta.append([_put_svm(container, f"layer{position}.c{c}", svm) for c, svm in enumerate(svms)])
        combiner_meta = None
        if detector.combiner is not None:
            combiner_meta = [_put_svm(container, f"combiner.c{c}", svm) for c, svm in enumerate(detector.combiner)]
        container.meta.update({"layer_svms": svm_meta, "combiner": combiner_meta,
                               "center": detector.center, "spread": detector.spread})
    elif not isinstance(detector, SadDetector):
        raise ContractError(f"Cannot persist detector type {type(detector).__name__}")
    return save(container, path)


def load_detector(path: Union[str, Path], blocks: Optional[Sequence[AuxBlock]] = None) -> Detector:
    container = load(path, expected_kind="detector")
    meta = container.meta
    source = source_from_description(meta["source"], blocks) if meta.get("source") else None
    name = meta["detector"]
    if name == "dknn":
        store = CalibrationStore(
            train_embeddings=list(container.section("train.embeddings")),
            train_labels=np.rint(container.tensor("train.labels")).astype(np.int64),
            calibration=container.tensor("calibration"),
        )
        return DknnDetector(store, int(meta["k"]), int(meta["num_classes"]), source=source,
                            smoothed=bool(meta["smoothed"]), seed=int(meta["seed"]))
    if name == "dnr":
        layer_svms = [[_get_svm(container, f"layer{p}.c{c}", m) for c, m in enumerate(row)]
                      for p, row in enumerate(meta["layer_svms"])]
        combiner = None
        if meta.get("combiner"):
            combiner = [_get_svm(container, f"combiner.c{c}", m) for c, m in enumerate(meta["combiner"])]
        return DnrDetector(layer_svms, combiner, meta["center"], meta["spread"], source=source)
    if name == "sad":
        return SadDetector()
    raise ContractError(f"Unknown detector kind '{name}' in {path}")
