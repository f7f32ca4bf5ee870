"""Discrete-time queue dynamics of an n x n input-queued switch.

Queues are integer counters per (input, output) pair. A queue may be split
into named classes (e.g. packets of the current batch vs. backlogged packets);
a schedule only serves the class the caller marks as eligible.

Slot convention: queue sizes are observed at the beginning of slot ``tau``,
the schedule is applied mid-slot, and arrivals land at the end of the slot.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

DEFAULT_CLASS = "queue"
# Slots of arrivals drawn per call to the generator by ArrivalStream.
_BLOCK_SLOTS = 512


class ContractViolation(ValueError):
    """Raised when an operation is called outside its precondition."""


@dataclass(frozen=True)
class ArrivalConfig:
    """Uniform Bernoulli arrivals: every queue receives a packet w.p. rho/n per slot."""

    n: int
    rho: float
    seed: int = 0
    per_queue_rate: float | None = None

    def __post_init__(self):
        if self.n < 1:
            raise ContractViolation(f"port count must be >= 1, got {self.n}")
        if self.per_queue_rate is None:
            if not 0.0 < self.rho < 1.0:
                raise ContractViolation(f"rho must lie in (0, 1), got {self.rho}")
            object.__setattr__(self, "per_queue_rate", self.rho / self.n)
        elif not 0.0 <= self.per_queue_rate <= 1.0:
            raise ContractViolation(f"per-queue rate must lie in [0, 1], got {self.per_queue_rate}")

    @classmethod
    def from_gap(cls, n: int, f_n: int, seed: int = 0) -> "ArrivalConfig":
        """Load ``rho = 1 - 1/f_n``, computed from the integer gap parameter."""
        return cls(n=n, rho=(f_n - 1) / f_n, seed=seed)


def gen_arrivals(cfg: ArrivalConfig, rng: np.random.Generator) -> np.ndarray:
    """One slot of arrivals as an n x n 0/1 matrix.

    Consumes exactly n*n uniforms from ``rng`` in row-major order, so that
    repeated calls reproduce the stream of :class:`ArrivalStream`.
    """
    return (rng.random((cfg.n, cfg.n)) < cfg.per_queue_rate).astype(np.int64)


def replication_rng(seed: int, n: int, f_n: int) -> np.random.Generator:
    """Arrival generator for one replication.

    The stream is keyed on ``(seed, n, f_n)`` only, so different policies
    run against the same seed see identical arrivals, and the result does
    not depend on the order in which replications execute.
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, n, f_n])))


class ArrivalStream:
    """Slot-by-slot arrivals, drawn from the generator in blocks.

    Produces the same matrices as calling :func:`gen_arrivals` once per slot
    on the same generator; blocking only amortises the call overhead.
    """

    def __init__(self, cfg: ArrivalConfig, rng: np.random.Generator, zero: bool = False):
        self.cfg = cfg
        self.rng = rng
        self.zero = zero
        self._buf = np.empty((0, cfg.n, cfg.n), dtype=np.int64)
        self._pos = 0

    def next(self) -> np.ndarray:
        if self.zero:
            return np.zeros((self.cfg.n, self.cfg.n), dtype=np.int64)
        if self._pos >= len(self._buf):
            n = self.cfg.n
            u = self.rng.random((_BLOCK_SLOTS, n, n))
            self._buf = (u < self.cfg.per_queue_rate).astype(np.int64)
            self._pos = 0
        out = self._buf[self._pos]
        self._pos += 1
        return out


def is_valid_schedule(s: np.ndarray) -> bool:
    """True iff ``s`` is a square 0/1 matrix with row and column sums <= 1."""
    s = np.asarray(s)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        return False
    if not np.isin(s, (0, 1)).all():
        return False
    return bool((s.sum(axis=1) <= 1).all() and (s.sum(axis=0) <= 1).all())


def schedule_from_pairs(n: int, pairs: Iterable[tuple[int, int]]) -> np.ndarray:
    s = np.zeros((n, n), dtype=np.int64)
    for i, j in pairs:
        s[i, j] = 1
    return s


@dataclass
class SwitchState:
    """Queue counters, split by class, plus cumulative arrivals and service.

    ``tau`` is the 1-based index of the slot about to be played.
    """

    n: int
    classes: dict[str, np.ndarray]
    tau: int = 1
    cum_arrivals: np.ndarray = field(default=None)  # type: ignore[assignment]
    cum_service: np.ndarray = field(default=None)  # type: ignore[assignment]
    wasted_service: int = 0

    def __post_init__(self):
        if self.cum_arrivals is None:
            self.cum_arrivals = self.queues.copy()
        if self.cum_service is None:
            self.cum_service = np.zeros((self.n, self.n), dtype=np.int64)

    @classmethod
    def empty(cls, n: int, class_names: Sequence[str] = (DEFAULT_CLASS,)) -> "SwitchState":
        if n < 1:
            raise ContractViolation(f"port count must be >= 1, got {n}")
        return cls(n=n, classes={c: np.zeros((n, n), dtype=np.int64) for c in class_names})

    @property
    def queues(self) -> np.ndarray:
        """Total queue matrix (sum over classes)."""
        it = iter(self.classes.values())
        q = next(it).copy()
        for m in it:
            q += m
        return q

    def total(self) -> int:
        return int(sum(int(m.sum()) for m in self.classes.values()))

    def conservation_holds(self) -> bool:
        return bool(np.array_equal(self.queues, self.cum_arrivals - self.cum_service))


def apply_schedule(state: SwitchState, s: np.ndarray, eligible: str = DEFAULT_CLASS) -> int:
    """Serve one packet of class ``eligible`` at every scheduled non-empty cell.

    Scheduled cells whose eligible class is empty are counted as wasted
    service. Returns the number of packets removed.
    """
    if s.shape != (state.n, state.n):
        raise ContractViolation(f"schedule shape {s.shape} does not match n={state.n}")
    elig = state.classes[eligible]
    hit = s * (elig > 0)
    served = int(hit.sum())
    elig -= hit
    state.cum_service += hit
    state.wasted_service += int(s.sum()) - served
    return served


def add_arrivals(state: SwitchState, arrivals: np.ndarray, into: str = DEFAULT_CLASS) -> None:
    state.classes[into] += arrivals
    state.cum_arrivals += arrivals


def advance_slot(
    state: SwitchState,
    s: np.ndarray,
    arrivals: np.ndarray,
    eligible: str = DEFAULT_CLASS,
    arrival_class: str = DEFAULT_CLASS,
) -> int:
    """Play slot ``state.tau``: serve mid-slot, add end-of-slot arrivals, advance tau."""
    served = apply_schedule(state, s, eligible)
    add_arrivals(state, arrivals, arrival_class)
    state.tau += 1
    return served


def format_matrix(q: np.ndarray) -> str:
    """Text form of a queue matrix: one row per line, comma-separated integers."""
    return "\n".join(",".join(str(int(v)) for v in row) for row in np.asarray(q)) + "\n"


class MatrixParseError(ValueError):
    def __init__(self, line: int, msg: str):
        super().__init__(f"line {line}: {msg}")
        self.line = line


def parse_matrix(text: str) -> np.ndarray:
    """Inverse of :func:`format_matrix`. Blank lines are ignored."""
    rows: list[list[int]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        try:
            row = [int(tok) for tok in line.split(",")]
        except ValueError:
            raise MatrixParseError(lineno, f"not a list of integers: {line!r}") from None
        if any(v < 0 for v in row):
            raise MatrixParseError(lineno, "negative packet count")
        if rows and len(row) != len(rows[0]):
            raise MatrixParseError(lineno, f"expected {len(rows[0])} entries, got {len(row)}")
        rows.append(row)
    if not rows:
        raise MatrixParseError(1, "empty matrix")
    if len(rows) != len(rows[0]):
        raise MatrixParseError(len(rows), f"matrix is {len(rows)}x{len(rows[0])}, not square")
    return np.array(rows, dtype=np.int64)
