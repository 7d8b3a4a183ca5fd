"""日志集中配置 - 根 logger、stderr 输出与带文件锁的按日轮转文件"""

import logging
import logging.handlers
import os
import sys
from contextlib import contextmanager
from multiprocessing import current_process
from pathlib import Path
from typing import Optional

from src.core.settings import settings

# 跨平台文件锁
if sys.platform == "win32":
    import msvcrt
else:
    import fcntl

LOG_FORMAT = "%(asctime)s [%(name)s] %(levelname)s %(message)s"
LOG_FILE = "fermidet.log"
_MARKER = "_fermidet_logging_configured"


class LockedTimedRotatingFileHandler(logging.handlers.TimedRotatingFileHandler):
    """
    rollover + write 在独立 lock 文件的排他锁内完成

    并行扫描时主进程与 CLI 多次调用可能同时写同一日志文件
    （Windows: msvcrt.locking，其他平台: fcntl.flock）
    """

    def __init__(self, *args, **kwargs):
        self._lock_stream = None
        super().__init__(*args, **kwargs)
        self._lock_path = f"{self.baseFilename}.lock"

    @contextmanager
    def _file_lock(self):
        locked = False
        try:
            if self._lock_stream is None or self._lock_stream.closed:
                self._lock_stream = open(self._lock_path, "a+b")
            if sys.platform == "win32":
                # 固定锁定 offset 0 的一个字节
                self._lock_stream.seek(0, os.SEEK_END)
                if self._lock_stream.tell() == 0:
                    self._lock_stream.write(b"\0")
                    self._lock_stream.flush()
                self._lock_stream.seek(0)
                msvcrt.locking(self._lock_stream.fileno(), msvcrt.LK_LOCK, 1)
            else:
                fcntl.flock(self._lock_stream.fileno(), fcntl.LOCK_EX)
            locked = True
        except OSError as e:
            print(f"WARNING: Failed to acquire log file lock: {e}", file=sys.stderr)
        try:
            yield
        finally:
            if locked:
                try:
                    if sys.platform == "win32":
                        self._lock_stream.seek(0)
                        msvcrt.locking(self._lock_stream.fileno(), msvcrt.LK_UNLCK, 1)
                    else:
                        fcntl.flock(self._lock_stream.fileno(), fcntl.LOCK_UN)
                except OSError as e:
                    print(f"WARNING: Failed to release log file lock: {e}", file=sys.stderr)

    def emit(self, record):
        try:
            with self._file_lock():
                if self.stream is None and (self.mode != "w" or not self._closed):
                    self.stream = self._open()
                super().emit(record)
                if self.stream:
                    self.flush()
        except Exception as e:
            print(f"ERROR: Failed to emit log record: {e}", file=sys.stderr)
            self.handleError(record)

    def close(self):
        try:
            if self._lock_stream is not None and not self._lock_stream.closed:
                self._lock_stream.close()
        finally:
            self._lock_stream = None
            super().close()


def _file_handler(log_dir: str, formatter: logging.Formatter) -> Optional[logging.Handler]:
    """按日轮转（保留 30 天）；目录为空字符串或创建失败时返回 None"""
    if not log_dir:
        return None
    path = Path(log_dir)
    try:
        path.mkdir(parents=True, exist_ok=True)
        handler = LockedTimedRotatingFileHandler(
            filename=path / LOG_FILE,
            when="midnight",
            backupCount=30,
            encoding="utf-8",
            delay=True,
        )
    except OSError as e:
        print(f"ERROR: Failed to initialize log file in {path.absolute()}: {e}", file=sys.stderr)
        return None
    handler.suffix = "%Y-%m-%d"
    handler.setFormatter(formatter)
    return handler


def setup_logging(level: Optional[str] = None, log_dir: Optional[str] = None) -> None:
    """
    配置根 logger（每个进程一次）

    - StreamHandler 写 stderr（stdout 留给数据与 verify 的 JSON lines）
    - LockedTimedRotatingFileHandler 写 <FERMIDET_LOG_DIR>/fermidet.log
    - 级别默认取 FERMIDET_LOG_LEVEL
    """
    root = logging.getLogger()
    if getattr(root, _MARKER, False):
        return

    level_name = (level or settings.log_level).upper()
    root.setLevel(getattr(logging, level_name, logging.INFO))

    # 进程池子进程只需要丢弃日志
    if current_process().name != "MainProcess":
        root.addHandler(logging.NullHandler())
        setattr(root, _MARKER, True)
        return

    formatter = logging.Formatter(LOG_FORMAT)
    stream_handler = logging.StreamHandler(sys.stderr)
    stream_handler.setFormatter(formatter)
    root.addHandler(stream_handler)

    file_handler = _file_handler(settings.log_dir if log_dir is None else log_dir, formatter)
    if file_handler is not None:
        root.addHandler(file_handler)
    setattr(root, _MARKER, True)
    root.debug("Logging initialized (level=%s, file=%s)", level_name, file_handler is not None)
