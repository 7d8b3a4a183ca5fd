import logging
import os

logger = logging.getLogger(__name__)


class Settings:
    """全局运行配置 - 从环境变量读取（带默认值）"""

    def __init__(self):
        # 并行 worker 数量，默认保留 1 个核心给主进程
        cpu_count = os.cpu_count() or 1
        self.workers = int(os.getenv("FERMIDET_WORKERS", str(max(1, cpu_count - 1))))

        self.log_level = os.getenv("FERMIDET_LOG_LEVEL", "INFO").upper()
        # 为空时禁用文件日志
        self.log_dir = os.getenv("FERMIDET_LOG_DIR", "log").strip()

        # 求积默认容差
        self.quad_rtol = float(os.getenv("FERMIDET_QUAD_RTOL", "1e-10"))
        self.quad_atol = float(os.getenv("FERMIDET_QUAD_ATOL", "1e-12"))

        if self.workers < 1:
            logger.warning("FERMIDET_WORKERS=%d is invalid, using 1", self.workers)
            self.workers = 1

    def snapshot(self) -> dict:
        """当前配置快照（写入输出文件的元数据块）"""
        return {
            "workers": self.workers,
            "log_level": self.log_level,
            "quad_rtol": self.quad_rtol,
            "quad_atol": self.quad_atol,
        }


settings = Settings()
