from dotenv import load_dotenv

# 加载环境变量（必须先于 settings 的导入）
load_dotenv()

from multiprocessing import current_process

from src.core.log_config import setup_logging

if current_process().name == "MainProcess":
    setup_logging()

import argparse
import asyncio
import logging
import sys
from typing import Optional

from pydantic import ValidationError

from src import __version__
from src.api.commands import COMMANDS
from src.api.verify import cmd_verify
from src.core.executor import init_process_pool, shutdown_process_pool
from src.core.settings import settings
from src.models.schemas import RunConfig

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_USAGE = 2

# 取值可能以 "-" 开头的选项（-1/2、-12:12:400）
SIGNED_VALUE_OPTIONS = frozenset({"--alpha", "--grid", "--L", "--levels"})


class UsageArgumentParser(argparse.ArgumentParser):
    """参数错误时以退出码 2 结束（argparse 默认行为），消息写 stderr"""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--output", "-o", help="output path (default: stdout)")
    parser.add_argument("--format", choices=["csv", "json"], default="csv")
    parser.add_argument("--workers", type=int, help="worker processes (default: FERMIDET_WORKERS)")
    parser.add_argument("--deterministic", action="store_true", help="omit the timestamp line")


def _add_blocks(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--blocks", help="comma-separated a:w pairs, e.g. 1:1 or 0:0.5,2:1")
    parser.add_argument("--M", type=int, dest="M", help="scale parameter M")
    parser.add_argument("--parity", choices=["even", "odd", "custom"], default="custom")


def build_parser() -> argparse.ArgumentParser:
    parser = UsageArgumentParser(prog="fermidet", description="Fermionic block-projection DPPs and their limits")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=UsageArgumentParser)

    density = sub.add_parser("density", help="finite-M one-point density and its large-M limit")
    _add_blocks(density)
    density.add_argument("--grid", help="min:max:count")
    _add_common(density)

    corr = sub.add_parser("corr", help="rescaled two-point function and its limits")
    _add_blocks(corr)
    corr.add_argument("--a", type=float, help="single block [a^2 M, (a+1)^2 M)")
    corr.add_argument("--alpha", help="alpha = -1/m, e.g. -1/2")
    corr.add_argument("--grid", help="separation grid min:max:count (mean spacings)")
    _add_common(corr)

    nv = sub.add_parser("nv", help="number variance")
    _add_blocks(nv)
    nv.add_argument("--alpha")
    nv.add_argument("--L", dest="L_list", help="min:max:count or min:max:logCOUNT")
    _add_common(nv)

    sk = sub.add_parser("sk", help="structure factor")
    sk.add_argument("--alpha", required=True)
    sk.add_argument("--grid", help="k grid min:max:count")
    sk.add_argument("--numeric", action="store_true", help="add the numerical Fourier transform of h(r)")
    _add_common(sk)

    sample = sub.add_parser("sample", help="exact samples of projection DPPs")
    _add_blocks(sample)
    sample.add_argument("--basis", choices=["hermite", "fourier"], default="hermite")
    sample.add_argument("--levels", help="lo:hi or k1,k2,...")
    sample.add_argument("--m", type=int, default=1, help="superpose m independent copies")
    sample.add_argument("--power", type=int, default=1, help="apply theta -> m*theta (circle)")
    sample.add_argument("--haar", action="store_true", help="Haar unitary eigenphases via QR")
    sample.add_argument("--replicates", type=int, default=1)
    sample.add_argument("--seed", type=int, default=0)
    _add_common(sample)

    verify = sub.add_parser("verify", help="run the verification suite")
    verify.add_argument("--quick", action="store_true")
    verify.add_argument("--only", help="comma-separated check ids")
    verify.add_argument("--out", dest="output", help="also write the JSON lines to this file")
    verify.add_argument("--workers", type=int)
    return parser


def attach_signed_values(argv: list[str]) -> list[str]:
    """`--grid -12:12:400` -> `--grid=-12:12:400`，否则 argparse 会把取值当作选项"""
    joined: list[str] = []
    i = 0
    while i < len(argv):
        if argv[i] in SIGNED_VALUE_OPTIONS and i + 1 < len(argv) and argv[i + 1].startswith("-"):
            joined.append(f"{argv[i]}={argv[i + 1]}")
            i += 2
        else:
            joined.append(argv[i])
            i += 1
    return joined


def to_config(args: argparse.Namespace) -> RunConfig:
    fields = {k: v for k, v in vars(args).items() if k in RunConfig.model_fields and v is not None}
    return RunConfig(**fields)


async def run(config: RunConfig) -> int:
    workers = config.workers or settings.workers
    if workers > 1:
        init_process_pool(workers)
    try:
        if config.command == "verify":
            return await cmd_verify(config)
        return await COMMANDS[config.command](config)
    finally:
        shutdown_process_pool(wait=True)


def main(argv: Optional[list[str]] = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    args = build_parser().parse_args(attach_signed_values(argv))
    try:
        config = to_config(args)
        return asyncio.run(run(config))
    except ValidationError as e:
        messages = "; ".join(err["msg"].removeprefix("Value error, ") for err in e.errors())
        print(f"fermidet: error: {messages}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as e:
        print(f"fermidet: error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
