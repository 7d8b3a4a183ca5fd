"""
进程池管理器 - 用于参数扫描与重复采样的并行化

使用 ProcessPoolExecutor 绕过 Python GIL；结果始终按输入顺序返回，
与 worker 数量无关
"""
import asyncio
import logging
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, Optional, TypeVar

from src.core.settings import settings

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

# 全局进程池实例
_executor: ProcessPoolExecutor | None = None


def init_process_pool(max_workers: int | None = None) -> ProcessPoolExecutor:
    """
    初始化进程池

    Args:
        max_workers: 最大工作进程数，默认为 FERMIDET_WORKERS

    Returns:
        ProcessPoolExecutor 实例
    """
    global _executor

    if _executor is not None:
        raise RuntimeError("Process pool already initialized")

    if max_workers is None:
        max_workers = settings.workers

    _executor = ProcessPoolExecutor(max_workers=max_workers)
    logger.info("Process pool initialized with %d workers", max_workers)

    return _executor


def get_process_pool() -> ProcessPoolExecutor:
    """
    获取全局进程池实例

    Raises:
        RuntimeError: 进程池未初始化
    """
    if _executor is None:
        raise RuntimeError("Process pool not initialized. Call init_process_pool() first.")

    return _executor


def shutdown_process_pool(wait: bool = True) -> None:
    """
    关闭进程池

    Args:
        wait: 是否等待所有任务完成
    """
    global _executor

    if _executor is not None:
        _executor.shutdown(wait=wait)
        logger.info("Process pool shutdown (wait=%s)", wait)
        _executor = None


def ordered_map(fn: Callable[[T], R], items: Iterable[T], workers: Optional[int] = None) -> list[R]:
    """
    按输入顺序返回 [fn(item) for item in items]

    workers == 1 时串行；否则使用全局进程池（未初始化时临时创建）。
    fn 与 items 必须可 pickle
    """
    items = list(items)
    workers = settings.workers if workers is None else workers
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]

    if _executor is not None:
        return list(_executor.map(fn, items))

    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))


async def run_ordered(fn: Callable[[T], R], items: Iterable[T], workers: Optional[int] = None) -> list[R]:
    """
    事件循环中的 ordered_map：每个 item 通过 run_in_executor 派发，gather 保序
    """
    items = list(items)
    workers = settings.workers if workers is None else workers
    loop = asyncio.get_running_loop()
    if workers <= 1 or _executor is None:
        return await loop.run_in_executor(None, ordered_map, fn, items, 1)
    return list(await asyncio.gather(*(loop.run_in_executor(_executor, fn, item) for item in items)))
