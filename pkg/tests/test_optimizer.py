import math

import numpy as np
import pytest

from ratiotune.optimizer import (
    BUDGET,
    CANCELLED,
    CUTOFF,
    GAMMA_DEFAULT,
    EvaluationError,
    GlobalMinimizer,
    LossSpec,
    SplitMix64,
    clamped_loss,
    climbing_bisection,
    cutoff_threshold,
    derive_seed,
    find_min_global_with_cutoff,
)


def test_splitmix_reference_value():
    assert SplitMix64(0).next_u64() == 0xE220A8397B1DCDAF


def test_splitmix_uniform_range():
    rng = SplitMix64(42)
    u = [rng.uniform() for _ in range(2000)]
    assert 0.0 <= min(u) and max(u) < 1.0
    assert abs(np.mean(u) - 0.5) < 0.03


def test_derive_seed_is_stable_and_key_sensitive():
    assert derive_seed(7, 1, 2) == derive_seed(7, 1, 2)
    assert len({derive_seed(7, k) for k in range(100)}) == 100


@pytest.mark.parametrize("rho, expected", [(10.0, 0.0), (13.0, 9.0), (math.inf, GAMMA_DEFAULT), (math.nan, GAMMA_DEFAULT)])
def test_clamped_loss(rho, expected):
    assert clamped_loss(rho, LossSpec(10.0)) == expected


def test_clamped_loss_absolute_variant():
    assert clamped_loss(7.0, LossSpec(10.0, absolute=True)) == 3.0


@pytest.mark.parametrize("rho, eps, expected", [(10, 0.1, 1.0), (85, 0.1, 72.25)])
def test_cutoff_threshold(rho, eps, expected):
    assert cutoff_threshold(LossSpec(rho), eps) == pytest.approx(expected, rel=1e-14)


def test_loss_spec_validation():
    with pytest.raises(ValueError):
        LossSpec(0.0)
    with pytest.raises(ValueError):
        LossSpec(10.0, gamma=100.0)
    with pytest.raises(ValueError):
        cutoff_threshold(LossSpec(10.0), 1.0)


def test_quadratic_converges_quickly():
    calls = []

    def f(x):
        calls.append(x)
        return x * x

    x, fx, trace = find_min_global_with_cutoff(f, -1.0, 1.0, cutoff=1e-8, max_iters=100)
    assert trace.terminated_by == CUTOFF
    assert len(calls) < 10
    assert fx <= 1e-8 and abs(x) <= 1e-4


def test_step_plateau_hits_cutoff():
    # integer-valued staircase with its zero step on [0.61, 0.66)
    def f(x):
        return float(abs(math.floor(x * 20) - 12))

    _, fx, trace = find_min_global_with_cutoff(f, 0.0, 1.0, cutoff=0.0, max_iters=60)
    assert fx == 0.0 and trace.terminated_by == CUTOFF


def wavy(x):
    # twenty local minima on [0, 1], the global one near x = 0.725
    return math.sin(40 * math.pi * x) + 2.0 * (x - 0.725) ** 2 * 10


def test_budget_is_exact_and_result_is_competitive():
    grid = np.linspace(0.0, 1.0, 200_001)
    dense_min = float(np.min(np.sin(40 * np.pi * grid) + 20.0 * (grid - 0.725) ** 2))
    calls = []

    def f(x):
        calls.append(x)
        return wavy(x)

    _, fx, trace = find_min_global_with_cutoff(f, 0.0, 1.0, cutoff=-math.inf, max_iters=80)
    assert len(calls) == 80 and trace.terminated_by == BUDGET
    assert fx - dense_min < 0.05
    assert all(0.0 <= x <= 1.0 for x in calls)


def test_same_seed_same_trace():
    runs = [find_min_global_with_cutoff(wavy, 0.0, 1.0, cutoff=-math.inf, max_iters=30, seed=s)[2] for s in (3, 3, 4)]
    xs = [[e.x for e in t.evaluations] for t in runs]
    assert xs[0] == xs[1]
    assert xs[0] != xs[2]


def test_no_duplicate_evaluations_on_flat_function():
    _, _, trace = find_min_global_with_cutoff(lambda x: 1.0, 0.0, 1.0, cutoff=0.0, max_iters=40)
    xs = sorted(e.x for e in trace.evaluations)
    assert len(set(xs)) == len(xs)


def test_objective_failure_reports_point():
    def f(x):
        raise RuntimeError("codec died")

    with pytest.raises(EvaluationError) as info:
        find_min_global_with_cutoff(f, 2.0, 3.0)
    assert 2.0 <= info.value.x <= 3.0


def test_ask_tell_protocol():
    opt = GlobalMinimizer(0.0, 1.0, cutoff=0.5, max_iters=5)
    x = opt.ask()
    assert opt.ask() == x  # repeated ask before tell returns the same point
    opt.tell(x, 3.0)
    opt.stop()
    assert opt.done and opt.trace.terminated_by == CANCELLED and opt.ask() is None
    with pytest.raises(RuntimeError):
        opt.tell(0.3, 1.0)
    with pytest.raises(ValueError):
        GlobalMinimizer(1.0, 1.0)
    with pytest.raises(ValueError):
        GlobalMinimizer(0.0, 1.0).tell(0.5, math.nan)


def test_ratio_crossing_finds_narrow_window():
    # monotone ratio curve; the acceptance window [9.9, 10.1] is about 1e-3 wide in x
    spec = LossSpec(10.0)
    cut = cutoff_threshold(spec, 0.01)

    def ratio(x):
        return 1.0 + 99.0 * x**3

    opt = GlobalMinimizer(0.0, 1.0, cutoff=cut, max_iters=40, seed=1, target=10.0)
    while (x := opt.ask()) is not None:
        r = ratio(x)
        opt.tell(x, clamped_loss(r, spec), r)
    assert opt.trace.terminated_by == CUTOFF
    assert len(opt.xs) < 20


def test_trace_to_dict():
    _, _, trace = find_min_global_with_cutoff(lambda x: 1.0 + x, 0.0, 1.0, max_iters=3)
    d = trace.to_dict()
    assert d["terminated_by"] == BUDGET and len(d["evaluations"]) == 3
    assert d["evaluations"][d["best"]][2] == min(e[2] for e in d["evaluations"])


def test_climbing_bisection_on_monotone_ratio():
    x, n = climbing_bisection(lambda b: 1.0 + math.log2(1.0 + b * 1e6), 9.5, 10.5, upper=1.0)
    assert x is not None and 9.5 <= 1.0 + math.log2(1.0 + x * 1e6) <= 10.5
    assert n <= 64  # one step per bit of the double at most


def test_climbing_bisection_gives_up():
    x, n = climbing_bisection(lambda b: 1.0, 5.0, 6.0, upper=1.0, max_evals=30)
    assert x is None and n <= 64
