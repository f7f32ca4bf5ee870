"""Scheduling policies: three-phase batching, standard batching, MaxWeight.

The batching policies keep each queue split into three classes:
``batch_cur`` (packets of the batch currently being served or accumulating
for service), ``batch_next`` (arrivals of the following batch, held back
while the current one is cleared) and ``backlog`` (packets a batch failed
to clear in time).

Time is cut into arrival periods of ``b`` slots. Service period k starts
``d`` slots after arrival period k and is split into round-robin
(``b - d`` slots), normal clearing (``ell = d + s - b``) and backlog
clearing (``r = b - s``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.optimize import linear_sum_assignment

from .clearing import clearing_plan
from .switch import ContractViolation, SwitchState

PRE_SERVICE = "pre-service"
ROUND_ROBIN = "round-robin"
NORMAL_CLEARING = "normal-clearing"
BACKLOG_CLEARING = "backlog-clearing"

BACKLOG = "backlog"
BATCH_CUR = "batch_cur"
BATCH_NEXT = "batch_next"
BATCH_CLASSES = (BACKLOG, BATCH_CUR, BATCH_NEXT)

# Default constants; they satisfy the sufficient conditions checked in derive_params.
DEFAULT_CONSTANTS = (31.0, 141.0, 30.0)


class ParameterInfeasible(ValueError):
    def __init__(self, reasons: list[str]):
        super().__init__("; ".join(reasons))
        self.reasons = reasons


@dataclass(frozen=True)
class BatchTiming:
    """Slot arithmetic shared by the batching policies."""

    n: int
    b: int
    d: int
    s: int

    @property
    def ell(self) -> int:
        return self.d + self.s - self.b

    @property
    def r(self) -> int:
        return self.b - self.s

    @property
    def round_robin_len(self) -> int:
        return self.b - self.d


@dataclass(frozen=True)
class PolicyParams:
    n: int
    f_n: int
    c_b: float
    c_d: float
    c_s: float
    b: int
    d: int
    s: int
    constraints_ok: bool

    @property
    def rho(self) -> float:
        return (self.f_n - 1) / self.f_n

    @property
    def ell(self) -> int:
        return self.d + self.s - self.b

    @property
    def r(self) -> int:
        return self.b - self.s

    @property
    def timing(self) -> BatchTiming:
        return BatchTiming(self.n, self.b, self.d, self.s)

    @property
    def c_r(self) -> float:
        return self.c_b - math.sqrt(self.c_s * self.c_b)

    @property
    def r_closed_form(self) -> float:
        """c_r f_n ln f_n; r differs from it only by rounding."""
        return self.c_r * self.f_n * math.log(self.f_n)

    @property
    def ell_closed_form_lower(self) -> float:
        """(c_d - c_r) sqrt(n) f_n ln f_n, a lower estimate of ell before rounding."""
        return (self.c_d - self.c_r) * math.sqrt(self.n) * self.f_n * math.log(self.f_n)


def constants_ok(c_b: float, c_d: float, c_s: float) -> bool:
    """Sufficient conditions on the constants for the no-backlog guarantees."""
    return c_b > c_s and c_d**2 >= 640 * c_b and c_d > c_b and c_s >= 30


def phase_lengths(n: int, f_n: int, c_b: float, c_d: float, c_s: float) -> tuple[int, int, int]:
    """(b, d, s) before any feasibility check: b, d rounded up, s down, natural logs."""
    lf = math.log(f_n)
    b = math.ceil(c_b * f_n**2 * lf)
    d = math.ceil(c_d * math.sqrt(n) * f_n * lf)
    rho_b = Fraction(b * (f_n - 1), f_n)
    s = math.floor(float(rho_b) + math.sqrt(c_s * b * lf))
    return b, d, s


def derive_params(n: int, f_n: int, c_b: float, c_d: float, c_s: float) -> PolicyParams:
    """Integer phase lengths for ``rho = 1 - 1/f_n``.

    b and d are rounded up, s down; logs are natural. Raises
    :class:`ParameterInfeasible` when the rounded lengths do not give three
    nonempty phases.
    """
    if n < 3 or f_n < n:
        raise ContractViolation(f"need f_n >= n >= 3, got n={n}, f_n={f_n}")
    if min(c_b, c_d, c_s) <= 0:
        raise ContractViolation("constants c_b, c_d, c_s must be positive")
    b, d, s = phase_lengths(n, f_n, c_b, c_d, c_s)
    p = PolicyParams(n, f_n, c_b, c_d, c_s, b, d, s, constants_ok(c_b, c_d, c_s))
    reasons = []
    if b <= d:
        reasons.append(f"b <= d (b={b}, d={d}): round-robin phase would be empty")
    if p.r < 1:
        reasons.append(
            f"backlog-clearing length r = b - s = {p.r} < 1 "
            f"(c_r = c_b - sqrt(c_s c_b) = {p.c_r:.6g})"
        )
    if p.ell < 1:
        reasons.append(f"normal-clearing length ell = d + s - b = {p.ell} < 1")
    if reasons:
        raise ParameterInfeasible(reasons)
    return p


def standard_batching_timing(params: PolicyParams, batch_length: int | None = None) -> BatchTiming:
    """Timing of the standard batching baseline.

    A batch is only served after it has fully arrived (d = b). The drain
    window is s slots with s computed by the same rule as the three-phase
    policy, so the leftover r = b - s slots go to backlog clearing.
    """
    b = batch_length or params.b
    lf = math.log(params.f_n)
    s = math.floor(float(Fraction(b * (params.f_n - 1), params.f_n)) + math.sqrt(params.c_s * b * lf))
    s = min(s, b - 1)
    if s < 1:
        raise ParameterInfeasible([f"batch length {b} too short for a drain window"])
    return BatchTiming(params.n, b, b, s)


def round_robin_schedule(m: int, n: int) -> np.ndarray:
    """Cyclic permutation: input i goes to output i + m - 1 (mod n), 1-based."""
    if not 1 <= m <= n:
        raise ContractViolation(f"round-robin index must lie in 1..{n}, got {m}")
    s = np.zeros((n, n), dtype=np.int64)
    i = np.arange(n)
    s[i, (i + m - 1) % n] = 1
    return s


@dataclass(frozen=True)
class PhaseTag:
    k: int
    phase: str
    slot_in_phase: int


def phase_of(tau: int, timing: BatchTiming | PolicyParams) -> PhaseTag:
    """Service period and phase that slot ``tau`` belongs to.

    Slots 1..d precede the first service period. Later slots always fall in
    exactly one service period; the first d slots of arrival period k >= 1
    are the clearing phases of service period k - 1.
    """
    if tau < 1:
        raise ContractViolation(f"slot index must be >= 1, got {tau}")
    b, d, s = timing.b, timing.d, timing.s
    if tau <= d:
        return PhaseTag(0, PRE_SERVICE, tau)
    k, u = divmod(tau - d - 1, b)
    u += 1
    if u <= b - d:
        return PhaseTag(k, ROUND_ROBIN, u)
    if u <= s:
        return PhaseTag(k, NORMAL_CLEARING, u - (b - d))
    return PhaseTag(k, BACKLOG_CLEARING, u - s)


def backlog_schedule(backlog: np.ndarray) -> np.ndarray:
    """Greedy row-major maximal matching on the positive backlog entries."""
    q = np.asarray(backlog)
    n = q.shape[0]
    s = np.zeros((n, n), dtype=np.int64)
    if not q.any():
        return s
    used = np.zeros(n, dtype=bool)
    rows, cols = np.nonzero(q > 0)
    last_row = -1
    for i, j in zip(rows.tolist(), cols.tolist()):
        if i == last_row or used[j]:
            continue
        s[i, j] = 1
        used[j] = True
        last_row = i
    return s


def _opt_weight(w: np.ndarray) -> int:
    if w.size == 0:
        return 0
    r, c = linear_sum_assignment(w, maximize=True)
    return int(w[r, c].sum())


def maxweight_schedule(q: np.ndarray) -> np.ndarray:
    """Schedule maximising the total queue size it covers.

    Only positive cells are scheduled. Ties go to the schedule whose
    row-major sorted cell list is lexicographically smallest: rows are
    fixed in order to the smallest column that still admits an optimum.
    """
    w = np.asarray(q, dtype=np.int64)
    n = w.shape[0]
    s = np.zeros((n, n), dtype=np.int64)
    if not w.any():
        return s
    free_rows = list(range(n))
    free_cols = list(range(n))
    target = _opt_weight(w)
    for i in range(n):
        free_rows.remove(i)
        for j in free_cols:
            if w[i, j] <= 0:
                continue
            cols = [c for c in free_cols if c != j]
            if w[i, j] + _opt_weight(w[np.ix_(free_rows, cols)]) == target:
                s[i, j] = 1
                target -= int(w[i, j])
                free_cols.remove(j)
                break
        if target == 0:
            break
    return s


@dataclass
class BatchLedger:
    """Per-class queue matrices and per-period accounting of a batching policy.

    The matrices are the switch state's class arrays (shared, mutated in
    place). Lists are indexed by period / batch number.
    """

    backlog: np.ndarray
    batch_cur: np.ndarray
    batch_next: np.ndarray
    k: int = 0
    B: list[int] = field(default_factory=list)
    U: list[int] = field(default_factory=list)
    W: list[int] = field(default_factory=list)
    H: list[int] = field(default_factory=list)
    wasted: list[int] = field(default_factory=list)
    # arrivals of the batch currently arriving, cumulative within its period
    batch_arrivals: np.ndarray | None = None

    @property
    def B_k(self) -> int:
        return self.B[-1] if self.B else 0

    @property
    def U_k(self) -> int:
        return self.U[-1] if self.U else 0


class BatchingPolicy:
    """Batch / round-robin / clear / backlog engine shared by both batching policies."""

    classes = BATCH_CLASSES

    def __init__(self, timing: BatchTiming):
        self.timing = timing
        n = timing.n
        self._rr = np.stack([round_robin_schedule(m, n) for m in range(1, n + 1)])
        self._idle = np.zeros((n, n), dtype=np.int64)
        self.violations: list[str] = []
        self.state: SwitchState | None = None
        self.ledger: BatchLedger | None = None
        self._plan: list[tuple[np.ndarray, int]] = []
        self._plan_pos = 0
        self._plan_left = 0
        self._wasted_mark = 0

    def bind(self, state: SwitchState) -> None:
        self.state = state
        self.ledger = BatchLedger(
            backlog=state.classes[BACKLOG],
            batch_cur=state.classes[BATCH_CUR],
            batch_next=state.classes[BATCH_NEXT],
            batch_arrivals=np.zeros((state.n, state.n), dtype=np.int64),
        )

    def new_state(self) -> SwitchState:
        state = SwitchState.empty(self.timing.n, self.classes)
        self.bind(state)
        return state

    def arrival_class(self, tau: int) -> str:
        phase = phase_of(tau, self.timing).phase
        return BATCH_CUR if phase in (PRE_SERVICE, ROUND_ROBIN) else BATCH_NEXT

    def step(self, tau: int) -> tuple[np.ndarray, str]:
        """Schedule for slot ``tau`` and the class it may serve."""
        led = self.ledger
        tag = phase_of(tau, self.timing)
        if tag.phase == PRE_SERVICE:
            return self._idle, BATCH_CUR
        if tag.phase == ROUND_ROBIN:
            return self._rr[(tag.slot_in_phase - 1) % self.timing.n], BATCH_CUR
        if tag.phase == NORMAL_CLEARING:
            if tag.slot_in_phase == 1:
                self._start_clearing(led.batch_cur)
            return self._next_plan_schedule(), BATCH_CUR
        return backlog_schedule(led.backlog), BACKLOG

    def _start_clearing(self, batch: np.ndarray) -> None:
        plan = clearing_plan(batch)
        self._plan = plan.truncated(self.timing.ell)
        self._plan_pos = 0
        self._plan_left = self._plan[0][1] if self._plan else 0

    def _next_plan_schedule(self) -> np.ndarray:
        if self._plan_pos >= len(self._plan):
            return self._idle
        p = self._plan[self._plan_pos][0]
        self._plan_left -= 1
        if self._plan_left == 0:
            self._plan_pos += 1
            if self._plan_pos < len(self._plan):
                self._plan_left = self._plan[self._plan_pos][1]
        return p

    def end_slot(self, tau: int, arrivals: np.ndarray) -> None:
        """Bookkeeping after slot ``tau``'s arrivals: monitors and class moves."""
        t = self.timing
        led = self.ledger
        batch, t_in = divmod(tau - 1, t.b)
        t_in += 1
        if t_in == 1:
            led.batch_arrivals[:] = 0
            led.W.append(0)
        led.batch_arrivals += arrivals
        if t.d <= t_in <= t.b - 1 and not led.W[batch]:
            led.W[batch] = monitor_W(led.batch_arrivals, t_in, t.d, t.n)
        if t_in == t.b:
            led.H.append(monitor_H(led.batch_arrivals, t.s))

        if tau == t.d:
            led.B.append(int(led.backlog.sum()))
            self._wasted_mark = self.state.wasted_service
            return
        if tau < t.d:
            return
        k, u = divmod(tau - t.d - 1, t.b)
        u += 1
        if u == t.s:
            residual = int(led.batch_cur.sum())
            led.U.append(residual)
            led.backlog += led.batch_cur
            led.batch_cur[:] = 0
        if u == t.b:
            led.batch_cur[:] = led.batch_next
            led.batch_next[:] = 0
            led.B.append(int(led.backlog.sum()))
            led.wasted.append(self.state.wasted_service - self._wasted_mark)
            self._wasted_mark = self.state.wasted_service
            self._check_period(k)
            led.k = k + 1

    def _check_period(self, k: int) -> None:
        led = self.ledger
        t = self.timing
        B0, B1, U = led.B[k], led.B[k + 1], led.U[k]
        if B1 > max(0, B0 + U - t.r):
            self.violations.append(f"period {k}: backlog {B1} exceeds max(0, {B0} + {U} - {t.r})")
        if U > t.n * t.n * t.b:
            self.violations.append(f"period {k}: U_k={U} exceeds n^2 b")
        if led.W[k] == 0 and led.H[k] == 0 and U > 0:
            self.violations.append(f"period {k}: U_k={U} > 0 although neither bad event occurred")


class ThreePhasePolicy(BatchingPolicy):
    """Round-robin from ``d`` slots into the batch, then optimal clearing, then backlog."""

    name = "three-phase"

    def __init__(self, params: PolicyParams):
        super().__init__(params.timing)
        self.params = params


class StandardBatchingPolicy(BatchingPolicy):
    """Serve a batch only once it has fully arrived, by optimal clearing."""

    name = "standard-batching"

    def __init__(self, params: PolicyParams, batch_length: int | None = None):
        super().__init__(standard_batching_timing(params, batch_length))
        self.params = params


class MaxWeightPolicy:
    name = "maxweight"
    classes = ("queue",)

    def __init__(self, n: int):
        self.n = n
        self.violations: list[str] = []
        self.state: SwitchState | None = None
        self.ledger = None

    def new_state(self) -> SwitchState:
        self.state = SwitchState.empty(self.n, self.classes)
        return self.state

    def arrival_class(self, tau: int) -> str:
        return "queue"

    def step(self, tau: int) -> tuple[np.ndarray, str]:
        return maxweight_schedule(self.state.classes["queue"]), "queue"

    def end_slot(self, tau: int, arrivals: np.ndarray) -> None:
        pass


def monitor_W(batch_arrivals: np.ndarray, t: int, d: int, n: int) -> int:
    """1 iff some queue has had at most (t - d)/n + 1 arrivals of the batch by slot t."""
    return int((batch_arrivals * n <= (t - d) + n).any())


def monitor_H(batch_arrivals: np.ndarray, s: int) -> int:
    """1 iff some input or output received more than ``s`` packets of the batch."""
    a = batch_arrivals
    return int(a.sum(axis=1).max() > s or a.sum(axis=0).max() > s)
