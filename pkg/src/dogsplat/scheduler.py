"""Reconstruction-aware pruning scheduler.

A pure state machine advanced once per training iteration. It asks the
trainer for the full-training-set L1 at evaluation boundaries (a two-call
handshake within the same iteration) and decides when to prune and how much:
a prune fires when the loss has improved by the configured factor since the
last prune, or unconditionally once the refinement interval hits its cap.

Round sizes follow the geometric schedule: round t removes
(initial - target) / 2^t primitives. The scheduled count is carried as a
real number between rounds so the integer counts logged after t rounds equal
the rounded closed form initial - (initial - target) * (1 - 2^-t) exactly;
rounding each round separately would let drift accumulate. A uniform
per-round count mode covers the ablation that disables the geometric
schedule. Because the geometric series only reaches the target in the
limit, rounds smaller than `min_prune_count` snap directly to the target.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .errors import ProtocolViolationError


class Phase(enum.Enum):
    WARMUP = "warmup"
    PRUNING = "pruning"
    DOG_REFINE = "dog_refine"
    DONE = "done"


@dataclass(frozen=True)
class Action:
    kind: str
    ratio: float = 0.0
    target_count: int = 0


CONTINUE = Action("continue")
EVALUATE_L1 = Action("evaluate_l1")
ACTIVATE_DOG = Action("activate_dog")
FINISH = Action("finish")


def _prune_action(n_current, n_t):
    return Action("prune", ratio=(n_current - n_t) / n_current, target_count=n_t)


@dataclass
class SchedulerState:
    """Pruning state machine; the trainer owns a single instance."""

    n_target: int
    prune_start_iter: int = 15000
    total_iters: int = 30000
    check_period: int = 500
    iter_max: int = 2000
    beta: float = 0.95
    phase_cap: int = 10000           # hard deadline on the pruning phase
    min_prune_count: int | None = None  # None: max(1, 0.5% of n0) at warmup end
    uniform_rounds: int | None = None   # set to prune equal counts per round

    phase: Phase = Phase.WARMUP
    round_t: int = 1
    n0: int = 0
    n_current: int = 0
    last_l1: float = 0.0
    iters_since_prune: int = 0
    pending_eval: bool = False
    sched_count: float = 0.0
    phase_start_iter: int = 0
    dog_activated: bool = False

    def _schedule(self, n_current: int) -> tuple[int, float, float]:
        """(post-prune count, removal ratio, new real-valued carry)."""
        if n_current <= self.n_target:
            return self.n_target, 0.0, float(self.n_target)
        if self.uniform_rounds is not None:
            per_round = -(-(self.n0 - self.n_target) // self.uniform_rounds)
            n_t = max(self.n_target, n_current - per_round)
            sched = float(n_t)
        else:
            sched = self.sched_count - (self.n0 - self.n_target) / 2.0 ** self.round_t
            n_t = max(self.n_target, round(sched))
        if n_t - self.n_target < (self.min_prune_count or 0):
            n_t, sched = self.n_target, float(self.n_target)
        return n_t, (n_current - n_t) / n_current, sched

    def desired_count(self, n_current: int) -> tuple[int, float]:
        """Post-prune count and removal ratio for the current round."""
        n_t, ratio, _ = self._schedule(n_current)
        return n_t, ratio

    def record_prune(self, new_count: int) -> None:
        """Trainer callback after the scene was actually compacted."""
        self.n_current = new_count

    def _execute_prune(self, n_t: int, sched: float) -> Action:
        action = _prune_action(self.n_current, n_t)
        self.round_t += 1
        self.iters_since_prune = 0
        # Keep the real-valued carry: rounding each round separately would
        # drift away from the closed-form schedule.
        self.sched_count = sched
        return action

    def step(self, iteration: int, l1_full: float | None = None) -> Action:
        """Advance one iteration; `l1_full` answers a pending EVALUATE_L1."""
        if l1_full is not None and not self.pending_eval:
            raise ProtocolViolationError(
                "l1_full supplied without a pending evaluation request")

        if self.phase is Phase.DONE:
            return FINISH
        if l1_full is None and iteration >= self.total_iters:
            self.phase = Phase.DONE
            return FINISH

        if self.phase is Phase.WARMUP:
            if iteration < self.prune_start_iter:
                return CONTINUE
            if l1_full is None:
                self.pending_eval = True
                return EVALUATE_L1
            self.pending_eval = False
            self.n0 = self.n_current
            if self.min_prune_count is None:
                self.min_prune_count = max(1, round(0.005 * self.n0))
            self.last_l1 = l1_full
            self.sched_count = float(self.n0)
            self.iters_since_prune = 0
            self.phase_start_iter = iteration
            self.phase = Phase.PRUNING
            return CONTINUE

        if self.phase is Phase.PRUNING:
            if l1_full is not None:
                self.pending_eval = False
                forced = self.iters_since_prune >= self.iter_max
                if l1_full <= self.beta * self.last_l1 or forced:
                    n_t, _, sched = self._schedule(self.n_current)
                    self.last_l1 = l1_full
                    return self._execute_prune(n_t, sched)
                return CONTINUE
            if self.n_current <= self.n_target:
                self.phase = Phase.DOG_REFINE
                self.dog_activated = True
                return ACTIVATE_DOG
            self.iters_since_prune += 1
            if iteration - self.phase_start_iter >= self.phase_cap:
                # Deadline reached: close out the phase in one cut.
                return self._execute_prune(self.n_target, float(self.n_target))
            if self.iters_since_prune % self.check_period == 0:
                self.pending_eval = True
                return EVALUATE_L1
            return CONTINUE

        # DOG_REFINE
        return CONTINUE
