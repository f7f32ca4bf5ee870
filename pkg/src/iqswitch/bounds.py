"""Closed-form bounds used as oracles against simulated quantities."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .switch import ContractViolation


class UnstableSystem(ValueError):
    pass


def _check_tail_args(ex: float, x: float) -> None:
    if ex <= 0 or x <= 0:
        raise ContractViolation(f"need mean > 0 and deviation > 0, got mean={ex}, x={x}")


def chernoff_lower(ex: float, x: float) -> float:
    """Bound on P(X <= E[X] - x) for a binomial X."""
    _check_tail_args(ex, x)
    return math.exp(-(x * x) / (2.0 * ex))


def chernoff_upper(ex: float, x: float) -> float:
    """Bound on P(X >= E[X] + x) for a binomial X."""
    _check_tail_args(ex, x)
    return math.exp(-(x * x) / (2.0 * (ex + x / 3.0)))


@dataclass(frozen=True)
class GG1Params:
    """Moments of per-slot arrivals (lam, m2x) and service (mu, m2y)."""

    lam: float
    m2x: float
    mu: float
    m2y: float

    def __post_init__(self):
        if self.m2x < self.lam**2 - 1e-12 or self.m2y < self.mu**2 - 1e-12:
            raise ContractViolation("second moments must dominate squared means")


def kingman_bound(p: GG1Params) -> float:
    """Upper bound on the expected queue of the discrete-time G/G/1 recursion from empty."""
    if p.lam >= p.mu:
        raise UnstableSystem(f"arrival rate {p.lam} >= service rate {p.mu}")
    return (p.m2x + p.m2y - 2.0 * p.lam * p.mu) / (2.0 * (p.mu - p.lam))


def backlog_kingman_display(f_n: float) -> float:
    """(1/f_n + 1) / (2 (1 - f_n^-7)): the looser backlog estimate without the -2 lam mu term."""
    return (1.0 / f_n + 1.0) / (2.0 * (1.0 - f_n**-7))


def lindley_step(z: float, x: float, y: float) -> float:
    if z < 0 or x < 0 or y < 0:
        raise ContractViolation("queue, arrivals and service must be nonnegative")
    return max(0, z + x - y)


def lindley_path(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Queue sizes Z(1..T+1) from Z(1) = 0, vectorised.

    Uses Z(t+1) = S(t) - min(0, min_{u<=t} S(u)) with S the partial sums of
    x - y, which is the closed form of repeated :func:`lindley_step`.
    """
    inc = np.asarray(x, dtype=np.float64) - np.asarray(y, dtype=np.float64)
    s = np.concatenate(([0.0], np.cumsum(inc)))
    return s - np.minimum.accumulate(np.minimum(s, 0.0))


def total_queue_bound(n: int, d: int) -> int:
    """3 n d: expected total queue bound of the three-phase policy at any slot."""
    if n < 1 or d < 1:
        raise ContractViolation(f"need n >= 1 and d >= 1, got n={n}, d={d}")
    return 3 * n * d


class Envelope(NamedTuple):
    value: float
    degenerate: bool


def theorem1_envelope(n: int, f_n: int, c: float = 1.0) -> Envelope:
    """c n^1.5 f_n ln f_n. Degenerate (value 0) when f_n = 1."""
    if n < 1 or f_n < n or c <= 0:
        raise ContractViolation(f"need n >= 1, f_n >= n, c > 0; got n={n}, f_n={f_n}, c={c}")
    if f_n == 1:
        return Envelope(0.0, True)
    return Envelope(c * n**1.5 * f_n * math.log(f_n), False)


def bad_event_cap(f_n: int) -> float:
    """1 / (2 f_n^13): probability cap on each of the two bad events per period."""
    return 0.5 / float(f_n) ** 13


def round_robin_starvation_bound(n: int, f_n: int, b: int, d: int) -> float:
    """Union bound on the probability that some queue runs dry during round-robin.

    For each slot t in [d, b-1] the per-queue event {A(t) <= (t-d)/n + 1}
    is a lower-tail deviation of a Binomial(t, rho/n) by
    x(t) = rho t / n - (t - d)/n - 1; the lower-tail bound is summed over
    all n^2 queues and slots. Slots with x(t) <= 0 contribute 1.
    """
    rho = (f_n - 1) / f_n
    t = np.arange(d, b, dtype=np.float64)
    if t.size == 0:
        return 0.0
    mean = rho * t / n
    x = mean - (t - d) / n - 1.0
    per = np.where(x > 0, np.exp(-np.square(np.maximum(x, 0)) / (2.0 * mean)), 1.0)
    return float(min(1.0, n * n * per.sum()))


def oversized_batch_bound(n: int, f_n: int, b: int, s: int) -> float:
    """Union bound over 2n ports on a batch row/column total exceeding s."""
    rho = (f_n - 1) / f_n
    ex = rho * b
    x = s + 1 - ex
    if x <= 0:
        return 1.0
    return float(min(1.0, 2 * n * chernoff_upper(ex, x)))


def bounds_table(params) -> list[tuple[str, float]]:
    """Named bound values for a parameter set (a PolicyParams)."""
    n, f, b, d, s = params.n, params.f_n, params.b, params.d, params.s
    lam, m2x = float(f) ** -7, 1.0 / f
    env = theorem1_envelope(n, f)
    return [
        ("b", b),
        ("d", d),
        ("s", s),
        ("ell", params.ell),
        ("r", params.r),
        ("total_queue_bound_3nd", total_queue_bound(n, d)),
        ("envelope_n^1.5_f_ln_f", env.value),
        ("bad_event_cap_1/(2f^13)", bad_event_cap(f)),
        ("P(starvation)_union_bound", round_robin_starvation_bound(n, f, b, d)),
        ("P(oversized_batch)_union_bound", oversized_batch_bound(n, f, b, s)),
        ("backlog_kingman_exact", kingman_bound(GG1Params(lam, m2x, 1.0, 1.0))),
        ("backlog_kingman_display", backlog_kingman_display(f)),
    ]
