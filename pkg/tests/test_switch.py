import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from iqswitch.switch import (
    ArrivalConfig,
    ArrivalStream,
    ContractViolation,
    MatrixParseError,
    SwitchState,
    add_arrivals,
    advance_slot,
    apply_schedule,
    format_matrix,
    gen_arrivals,
    is_valid_schedule,
    parse_matrix,
    replication_rng,
)


def random_schedule(rng, n):
    """Random partial permutation matrix."""
    perm = rng.permutation(n)
    keep = rng.random(n) < 0.7
    s = np.zeros((n, n), dtype=np.int64)
    s[np.arange(n)[keep], perm[keep]] = 1
    return s


@pytest.mark.parametrize("rate, expected", [(0.0, 0), (1.0, 1)])
def test_degenerate_rates(rate, expected):
    cfg = ArrivalConfig(n=3, rho=0.5, per_queue_rate=rate)
    rng = np.random.default_rng(0)
    for _ in range(50):
        assert (gen_arrivals(cfg, rng) == expected).all()


def test_per_queue_rate_is_rho_over_n():
    cfg = ArrivalConfig.from_gap(4, 4)
    assert cfg.rho == 0.75
    assert cfg.per_queue_rate == 0.75 / 4


def test_rho_outside_unit_interval_rejected():
    with pytest.raises(ContractViolation):
        ArrivalConfig(n=3, rho=1.0)


def test_empirical_arrival_rate():
    cfg = ArrivalConfig(n=4, rho=0.75, seed=7)
    rng = np.random.default_rng(cfg.seed)
    T = 10**5
    total = np.zeros((4, 4))
    for _ in range(T):
        total += gen_arrivals(cfg, rng)
    p = 0.1875
    half = 4 * math.sqrt(p * (1 - p) / T)
    mean = total / T
    assert ((mean >= p - half) & (mean <= p + half)).all()


def test_stream_matches_per_slot_draws():
    cfg = ArrivalConfig(n=5, rho=0.9)
    stream = ArrivalStream(cfg, replication_rng(3, 5, 10))
    rng = replication_rng(3, 5, 10)
    for _ in range(1300):  # crosses block boundaries
        assert np.array_equal(stream.next(), gen_arrivals(cfg, rng))


def test_replication_streams_are_reproducible_and_distinct():
    a = replication_rng(1, 4, 4).random(10)
    assert np.array_equal(a, replication_rng(1, 4, 4).random(10))
    assert not np.array_equal(a, replication_rng(2, 4, 4).random(10))
    assert not np.array_equal(a, replication_rng(1, 4, 5).random(10))


def test_schedule_validity_examples():
    assert is_valid_schedule(np.eye(3, dtype=int))
    assert not is_valid_schedule(np.ones((2, 2), dtype=int))
    assert is_valid_schedule(np.zeros((4, 4), dtype=int))
    assert not is_valid_schedule(np.array([[2, 0], [0, 0]]))


def test_apply_on_empty_queues_only_wastes():
    st_ = SwitchState.empty(3)
    s = np.eye(3, dtype=np.int64)
    assert apply_schedule(st_, s) == 0
    assert st_.wasted_service == 3
    assert st_.total() == 0


def test_apply_single_cell():
    st_ = SwitchState(n=1, classes={"queue": np.array([[1]])})
    assert apply_schedule(st_, np.array([[1]])) == 1
    assert st_.queues.tolist() == [[0]]


def test_apply_identity():
    st_ = SwitchState(n=2, classes={"queue": np.array([[2, 0], [0, 3]])})
    assert apply_schedule(st_, np.eye(2, dtype=np.int64)) == 2
    assert st_.queues.tolist() == [[1, 0], [0, 2]]
    assert st_.conservation_holds()


def test_apply_only_touches_eligible_class():
    st_ = SwitchState.empty(2, ("a", "b"))
    st_.classes["a"][0, 0] = 1
    st_.classes["b"][1, 1] = 1
    st_.cum_arrivals[:] = [[1, 0], [0, 1]]
    served = apply_schedule(st_, np.eye(2, dtype=np.int64), "a")
    assert served == 1
    assert st_.classes["b"][1, 1] == 1
    assert st_.wasted_service == 1


def test_dimension_mismatch():
    with pytest.raises(ContractViolation):
        apply_schedule(SwitchState.empty(3), np.eye(2, dtype=np.int64))


def test_advance_with_nothing_happening():
    st_ = SwitchState(n=2, classes={"queue": np.array([[1, 2], [3, 4]])})
    advance_slot(st_, np.zeros((2, 2), dtype=np.int64), np.zeros((2, 2), dtype=np.int64))
    assert st_.tau == 2
    assert st_.queues.tolist() == [[1, 2], [3, 4]]


def test_zero_schedule_accumulates_arrivals():
    cfg = ArrivalConfig(n=3, rho=0.6)
    rng = np.random.default_rng(5)
    st_ = SwitchState.empty(3)
    zero = np.zeros((3, 3), dtype=np.int64)
    for _ in range(200):
        advance_slot(st_, zero, gen_arrivals(cfg, rng))
    assert np.array_equal(st_.queues, st_.cum_arrivals)
    assert st_.tau == 201


def test_conservation_sweep_random_schedules():
    n = 4
    cfg = ArrivalConfig(n=n, rho=0.8)
    rng = np.random.default_rng(11)
    srng = np.random.default_rng(12)
    st_ = SwitchState.empty(n)
    prev_a = st_.cum_arrivals.copy()
    prev_s = st_.cum_service.copy()
    for _ in range(10**4):
        s = random_schedule(srng, n)
        served = advance_slot(st_, s, gen_arrivals(cfg, rng))
        assert served <= n
        assert st_.conservation_holds()
        assert (st_.cum_service <= st_.cum_arrivals).all()
        assert (st_.cum_arrivals >= prev_a).all() and (st_.cum_service >= prev_s).all()
        # each port serves at most one packet per slot
        ds = st_.cum_service - prev_s
        assert ds.sum(axis=0).max() <= 1 and ds.sum(axis=1).max() <= 1
        prev_a, prev_s = st_.cum_arrivals.copy(), st_.cum_service.copy()


@given(st.lists(st.lists(st.integers(0, 10**6), min_size=3, max_size=3), min_size=3, max_size=3))
def test_matrix_text_roundtrip(rows):
    q = np.array(rows)
    assert np.array_equal(parse_matrix(format_matrix(q)), q)


def test_matrix_parse_errors_carry_line_numbers():
    with pytest.raises(MatrixParseError) as exc:
        parse_matrix("1,2\n3,x\n")
    assert exc.value.line == 2
    with pytest.raises(MatrixParseError):
        parse_matrix("1,2\n3\n")
    with pytest.raises(MatrixParseError):
        parse_matrix("1,-2\n3,4\n")


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**63 - 1))
def test_add_arrivals_keeps_identity(seed):
    rng = np.random.default_rng(seed)
    st_ = SwitchState.empty(3, ("x", "y"))
    for k in range(20):
        add_arrivals(st_, (rng.random((3, 3)) < 0.5).astype(np.int64), "x" if k % 2 else "y")
        apply_schedule(st_, random_schedule(rng, 3), "x")
    assert st_.conservation_holds()
