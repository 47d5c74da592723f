"""
Artifact paths under a run's output directory.

Every stage reads and writes only the paths declared here, so a stage can
be re-run from the output directory alone.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import List

from src.exceptions import ResolutionError

ARTIFACT_SUFFIX = ".ucan"


@dataclass(frozen=True)
class ArtifactPaths:
    root: Path

    @property
    def config(self) -> Path:
        return self.root / "run.ini"

    @property
    def splits(self) -> Path:
        return self.root / "data" / f"splits{ARTIFACT_SUFFIX}"

    @property
    def backbone(self) -> Path:
        return self.root / "models" / f"backbone{ARTIFACT_SUFFIX}"

    @property
    def backbone_log(self) -> Path:
        return self.root / "models" / "backbone_log.json"

    @property
    def aux(self) -> Path:
        return self.root / "models" / f"aux{ARTIFACT_SUFFIX}"

    @property
    def aux_log(self) -> Path:
        return self.root / "models" / "aux_log.json"

    @property
    def selection(self) -> Path:
        return self.root / "selection.json"

    @property
    def detectors_dir(self) -> Path:
        return self.root / "detectors"

    @property
    def attacks_dir(self) -> Path:
        return self.root / "attacks"

    @property
    def report_dir(self) -> Path:
        return self.root / "report"

    @property
    def bench_dir(self) -> Path:
        return self.root / "bench"

    @property
    def latency(self) -> Path:
        return self.bench_dir / "latency.csv"

    def detector(self, kind: str, source: str) -> Path:
        return self.detectors_dir / f"{kind}_{source}{ARTIFACT_SUFFIX}"

    def attack(self, attack: str, epsilon: float, seed: int, target: str = "") -> Path:
        suffix = f"_{target}" if target else ""
        return self.attacks_dir / f"{attack}_eps{epsilon:.4f}_s{seed}{suffix}{ARTIFACT_SUFFIX}"

    def attack_files(self) -> List[Path]:
        return sorted(self.attacks_dir.glob(f"*{ARTIFACT_SUFFIX}"))


def require(path: Path, artifact: str) -> Path:
    """The path itself, or ResolutionError naming the missing artifact."""
    if not path.exists():
        raise ResolutionError(artifact, path)
    return path
