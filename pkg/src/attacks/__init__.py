"""
Attacks module - white-box adversarial example generation

This module provides:
- AttackConfig / AdvBatch: budgets, results and their artifacts
- pgd: l_inf projected gradient descent
- cw_linf: Carlini-Wagner under an l_inf budget
- ada_dknn: adaptive attack steering embeddings toward a wrong class
- attack_success_rate
"""

from src.attacks.base import (
    AdvBatch,
    AttackConfig,
    attack_success_rate,
    check_budget,
    project,
    read_sidecar,
    run_chunked,
    sidecar_path,
)
from src.attacks.pgd import pgd
from src.attacks.cw import cw_linf
from src.attacks.adaptive import ada_dknn, choose_targets

ATTACK_NAMES = ("pgd", "cw", "ada_dknn")

__all__ = [
    "AdvBatch",
    "AttackConfig",
    "attack_success_rate",
    "check_budget",
    "project",
    "read_sidecar",
    "run_chunked",
    "sidecar_path",
    "pgd",
    "cw_linf",
    "ada_dknn",
    "choose_targets",
    "ATTACK_NAMES",
]
