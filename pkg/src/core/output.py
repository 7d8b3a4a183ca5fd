"""
结果文件输出 - CSV（# 元数据块）、JSON 与 JSON lines

所有文件先写入同目录临时文件，再原子替换目标文件
"""
import csv
import io
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Optional, Sequence

import aiofiles

from src import __version__
from src.models.schemas import PointSample, RunConfig, StatSeries

logger = logging.getLogger(__name__)


def _metadata_lines(config: RunConfig) -> list[str]:
    lines = [
        f"# fermidet {__version__}",
        "# config: " + json.dumps(config.model_dump(mode="json"), sort_keys=True, ensure_ascii=False),
    ]
    if not config.deterministic:
        lines.append(f"# generated: {datetime.now(timezone.utc).isoformat(timespec='seconds')}")
    return lines


def _format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def render_series_csv(series: Sequence[StatSeries], config: RunConfig) -> str:
    """
    多条序列合并为一张表：第一列为所有 x 的并集，其余每条序列一列（缺失处留空）

    y_err 存在时追加 "<label>_err" 列
    """
    xs = sorted({x for s in series for x in s.x})
    columns: list[tuple[str, dict]] = []
    for s in series:
        columns.append((s.label, dict(zip(s.x, s.y))))
        if s.y_err is not None:
            columns.append((f"{s.label}_err", dict(zip(s.x, s.y_err))))
    x_name = series[0].x_unit.replace(" ", "_") if series and series[0].x_unit else "x"

    buffer = io.StringIO()
    for line in _metadata_lines(config):
        buffer.write(line + "\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow([x_name, *(name for name, _ in columns)])
    for x in xs:
        writer.writerow([_format_value(x), *(_format_value(values.get(x)) for _, values in columns)])
    return buffer.getvalue()


def render_samples_csv(samples: Sequence[PointSample], config: RunConfig) -> str:
    """每个重复一行：replicate_index, n, 排序后的位置"""
    buffer = io.StringIO()
    for line in _metadata_lines(config):
        buffer.write(line + "\n")
    writer = csv.writer(buffer, lineterminator="\n")
    width = max((s.n for s in samples), default=0)
    writer.writerow(["replicate_index", "n", *(f"x{i}" for i in range(width))])
    for s in samples:
        writer.writerow([s.replicate_index, s.n, *(_format_value(p) for p in s.positions)])
    return buffer.getvalue()


def render_json(series: Sequence[StatSeries], config: RunConfig, samples: Sequence[PointSample] = ()) -> str:
    document = {
        "version": __version__,
        "config": config.model_dump(mode="json"),
        "series": [s.model_dump(mode="json") for s in series],
    }
    if samples:
        document["samples"] = {
            "replicate_index": [s.replicate_index for s in samples],
            "positions": [list(s.positions) for s in samples],
        }
    if not config.deterministic:
        document["generated"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
    return json.dumps(document, ensure_ascii=False, indent=2) + "\n"


def render_json_lines(records: Iterable[dict]) -> str:
    return "".join(json.dumps(r, ensure_ascii=False, sort_keys=True) + "\n" for r in records)


async def write_atomic(path: str | Path, content: str) -> Path:
    """
    异步写入临时文件后原子替换

    Returns:
        目标路径
    """
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    temp_file = target.with_name(f".{target.name}.tmp")
    async with aiofiles.open(temp_file, "w", encoding="utf-8", newline="") as f:
        await f.write(content)

    # 原子性替换（Windows 需要先删除目标文件）
    if sys.platform == "win32" and target.exists():
        target.unlink()
    temp_file.replace(target)
    logger.info("Wrote %s (%d bytes)", target, len(content.encode("utf-8")))
    return target


async def emit(
    config: RunConfig,
    series: Sequence[StatSeries],
    samples: Sequence[PointSample] = (),
    stream=None,
) -> Optional[Path]:
    """
    按 config.format 渲染；config.output 为空时写到 stream（默认 stdout）
    """
    if config.format == "json":
        content = render_json(series, config, samples)
    elif samples:
        content = render_samples_csv(samples, config)
    else:
        content = render_series_csv(series, config)

    if config.output:
        return await write_atomic(config.output, content)
    (stream or sys.stdout).write(content)
    return None
