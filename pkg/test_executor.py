"""测试进程池执行器"""
import asyncio
import math
from functools import partial

import pytest

from src.core.executor import (
    get_process_pool,
    init_process_pool,
    ordered_map,
    run_ordered,
    shutdown_process_pool,
)
from src.core.statistics import structure_factor


def test_ordered_map_serial_matches_builtin_map():
    items = list(range(12))
    assert ordered_map(math.factorial, items, workers=1) == [math.factorial(i) for i in items]


def test_ordered_map_parallel_keeps_input_order():
    items = [7, 1, 5, 3, 9, 0]
    assert ordered_map(math.factorial, items, workers=3) == [math.factorial(i) for i in items]


def test_ordered_map_is_independent_of_worker_count():
    fn = partial(structure_factor, -0.5)
    ks = [0.0, 0.5, 1.0, 2.0, 3.0, 4.0, 5.0]
    assert ordered_map(fn, ks, workers=1) == ordered_map(fn, ks, workers=4)


def test_ordered_map_empty():
    assert ordered_map(math.factorial, [], workers=4) == []


def test_process_pool_lifecycle():
    init_process_pool(2)
    try:
        with pytest.raises(RuntimeError):
            init_process_pool(2)
        pool = get_process_pool()
        assert pool.submit(math.factorial, 5).result() == 120
        assert ordered_map(math.factorial, [4, 3, 2], workers=2) == [24, 6, 2]
    finally:
        shutdown_process_pool(wait=True)
    with pytest.raises(RuntimeError):
        get_process_pool()


def test_run_ordered_with_pool():
    async def scenario():
        init_process_pool(2)
        try:
            return await run_ordered(math.factorial, [6, 2, 4], workers=2)
        finally:
            shutdown_process_pool(wait=True)

    assert asyncio.run(scenario()) == [720, 2, 24]


def test_run_ordered_serial_without_pool():
    assert asyncio.run(run_ordered(math.factorial, [3, 1], workers=1)) == [6, 1]
