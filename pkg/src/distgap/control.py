"""Training policies for the distance-bias slope.

Four policies are compared: a neutral run (fixed lambda = 0), fixed-lambda
sweeps, a zero-gap controller that drives the measured mean-distance gap
to 0, and an oracle target-gap controller whose setpoint comes offline
from the validation-selected best fixed lambda per task.

The control law is a clipped proportional update
``lambda <- clip(lambda - kappa * (gap - target))``. A measured gap above
the target means attention is too local relative to where the task's
signal lives, so lambda must fall to globalize; the actuated plant's gap
rises with lambda, making the loop a contraction for kappa * slope < 2.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Callable, Iterable, NamedTuple

import numpy as np

from .errors import ControllerError, IncompleteTableError, ParameterError


class ControllerKind(enum.Enum):
    FIXED = "fixed"
    ZERO_GAP = "zero_gap"
    TARGET_GAP = "target_gap"


@dataclass(frozen=True)
class ControllerConfig:
    kind: ControllerKind = ControllerKind.FIXED
    lambda_init: float = 0.0
    target_gap: float = 0.0  # setpoint for TARGET_GAP; ignored otherwise
    kappa: float = 0.25
    update_every: int = 2
    lambda_bounds: tuple[float, float] = (-1.0, 3.0)
    warmup_epochs: int = 10

    def __post_init__(self):
        lo, hi = self.lambda_bounds
        if not lo <= self.lambda_init <= hi:
            raise ParameterError(
                f"lambda_init {self.lambda_init} outside bounds [{lo}, {hi}]"
            )
        if self.kappa <= 0:
            raise ParameterError("kappa must be > 0")
        if self.update_every < 1:
            raise ParameterError("update_every must be >= 1")
        if self.warmup_epochs < 0:
            raise ParameterError("warmup_epochs must be >= 0")

    @property
    def effective_target(self) -> float:
        """ZERO_GAP is TARGET_GAP with a hard-wired setpoint of 0."""
        return 0.0 if self.kind is ControllerKind.ZERO_GAP else self.target_gap


@dataclass(frozen=True)
class ControllerState:
    lam: float
    last_update_epoch: int | None = None
    gap_history: tuple = ()  # (epoch, measured_gap) per applied update


def initial_controller_state(cfg: ControllerConfig) -> ControllerState:
    return ControllerState(lam=cfg.lambda_init)


def controller_step(
    cfg: ControllerConfig,
    st: ControllerState,
    epoch: int,
    measured_gap: float,
) -> ControllerState:
    """Apply one measurement. FIXED never moves lambda; the gap policies
    update only after warmup and at most once per ``update_every`` epochs,
    clipping lambda into bounds."""
    if not np.isfinite(measured_gap):
        raise ControllerError(
            f"non-finite gap measurement {measured_gap!r} at epoch {epoch}"
        )
    if cfg.kind is ControllerKind.FIXED:
        return st
    if epoch < cfg.warmup_epochs:
        return st
    if st.last_update_epoch is not None and epoch - st.last_update_epoch < cfg.update_every:
        return st

    lo, hi = cfg.lambda_bounds
    new_lam = st.lam - cfg.kappa * (measured_gap - cfg.effective_target)
    new_lam = min(max(new_lam, lo), hi)
    return ControllerState(
        lam=new_lam,
        last_update_epoch=epoch,
        gap_history=st.gap_history + ((epoch, measured_gap),),
    )


class FixedRunSummary(NamedTuple):
    """Final-epoch summary of one fixed-lambda run, as consumed by the
    offline selection step."""

    beta: float
    lam: float
    seed: int
    val_acc: float
    test_acc: float
    final_gap: float


class Selection(NamedTuple):
    lambda_star: float
    val_acc: float  # mean over seeds at lambda_star
    test_acc: float
    target_gap: float  # mean final-epoch gap of the lambda_star runs


def select_lambda_star(
    rows: Iterable[FixedRunSummary],
    expected_betas: Iterable[float] | None = None,
) -> dict[float, Selection]:
    """Per task-mixture beta, pick the non-negative lambda with the best
    mean validation accuracy; ties break toward smaller lambda. The mean
    final gap of the winning runs becomes the oracle target.

    Negative slopes are deliberately not selection candidates: with two or
    more attention layers a repulsive slope composes into a broad global
    smoother whose accuracy reflects depth, not alignment with the task's
    hop profile, so selecting it would decouple lambda* from locality.
    Negative cells still belong in sweeps for the gap and W1 diagnostics.
    A grid with no non-negative slope falls back to the full grid."""
    by_beta: dict[float, dict[float, list[FixedRunSummary]]] = {}
    for row in rows:
        by_beta.setdefault(row.beta, {}).setdefault(row.lam, []).append(row)

    if expected_betas is not None:
        missing = sorted(b for b in expected_betas if b not in by_beta)
        if missing:
            raise IncompleteTableError(
                f"sweep table has no rows for beta values {missing}", missing=missing
            )

    out: dict[float, Selection] = {}
    for beta in sorted(by_beta):
        candidates = []
        for lam, group in by_beta[beta].items():
            val = float(np.mean([r.val_acc for r in group]))
            test = float(np.mean([r.test_acc for r in group]))
            gap = float(np.mean([r.final_gap for r in group]))
            candidates.append((lam, val, test, gap))
        eligible = [c for c in candidates if c[0] >= 0.0] or candidates
        eligible.sort(key=lambda c: (-c[1], abs(c[0]), c[0]))
        lam, val, test, gap = eligible[0]
        out[beta] = Selection(lambda_star=lam, val_acc=val, test_acc=test,
                              target_gap=gap)
    return out


def oracle_targets_from_sweep(
    rows: Iterable[FixedRunSummary],
    expected_betas: Iterable[float] | None = None,
) -> dict[float, float]:
    """Oracle setpoint per beta: the mean final gap at the validation-selected
    best fixed lambda."""
    return {
        beta: sel.target_gap
        for beta, sel in select_lambda_star(rows, expected_betas).items()
    }


def closed_loop_convergence_check(
    gap_response: Callable[[float], float],
    cfg: ControllerConfig,
    max_iters: int = 200,
) -> float:
    """Iterate the controller against a synthetic affine plant and return
    the final lambda.

    The plant must be strictly increasing in lambda (gap rises as attention
    localizes), matching the sign convention of the control law; a
    decreasing plant would make the proportional loop divergent.
    """
    lo, hi = cfg.lambda_bounds
    if not gap_response(hi) > gap_response(lo):
        raise ParameterError("synthetic plant must be strictly increasing in lambda")
    probe = replace(cfg, warmup_epochs=0, update_every=1)
    st = initial_controller_state(probe)
    for epoch in range(max_iters):
        st = controller_step(probe, st, epoch, gap_response(st.lam))
    return st.lam
