import argparse
import asyncio
import json
import logging
import sys
from pathlib import Path

from app.config import ConfigError, Settings, get_settings, load_config, parse_config, render_config
from app.schemas import RunConfig
from app.services.analysis import AnalysisError
from app.services.bkw import BkwError
from app.services.collision import CollisionError
from app.services.grid import GridError
from app.services.initial import InitialDatumError
from app.services.kernel import KernelError
from app.services.pipeline import (
    RunContext,
    build_context,
    cmd_decompose,
    cmd_kernel_info,
    cmd_oracle,
    cmd_run,
)
from app.services.solver import NumericalFailure, SolverError
from app.services.verify import SUITES, VerifyError, cmd_verify

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_NUMERICAL = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="boltzlab", description="Numerical laboratory for the homogeneous Boltzmann equation"
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="Run configuration (key = value lines)")
    common.add_argument("--out", type=Path, help="Output directory")
    common.add_argument("--threads", type=int, help="Worker threads for the gain quadrature")
    common.add_argument("--seed", type=int, help="Seed of randomized checks")
    common.add_argument("--record", action="store_true", help="Record the command in the run ledger")

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="Integrate the equation and write diagnostics")
    sub.add_parser("decompose", parents=[common], help="Smooth/remainder decomposition report")
    verify = sub.add_parser("verify", parents=[common], help="Run a verification suite")
    verify.add_argument("suite", help=f"One of: {', '.join(SUITES)}")
    sub.add_parser("oracle", parents=[common], help="Emit the BKW similarity-solution table")
    sub.add_parser("kernel-info", parents=[common], help="Print kernel constants and exponents")
    serve = sub.add_parser("serve", help="Serve the run ledger API")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    return parser


def _context(args: argparse.Namespace, settings: Settings) -> RunContext:
    config = load_config(args.config) if args.config else parse_config("")
    if args.threads is not None and args.threads < 1:
        raise ConfigError("--threads must be positive")
    return build_context(config, settings, out=args.out, threads=args.threads, seed=args.seed)


def _write_failure(ctx: RunContext | None, exc: NumericalFailure) -> None:
    if ctx is None:
        return
    ctx.output_dir.mkdir(parents=True, exist_ok=True)
    payload = {"error": str(exc), "diagnostics": exc.diagnostics}
    (ctx.output_dir / "failure.json").write_text(json.dumps(payload, indent=2), encoding="utf-8")


def _record(settings: Settings, command: str, config: RunConfig, status: str, **kwargs) -> None:
    from app import crud
    from app.db import session_scope

    async def store() -> None:
        async with session_scope(settings.database_url) as session:
            await crud.record_run(
                session,
                command=command,
                status=status,
                config_text=render_config(config),
                **kwargs,
            )

    asyncio.run(store())


def _dispatch(args: argparse.Namespace, ctx: RunContext) -> tuple[int, str, dict]:
    """Run one command; returns (exit code, ledger status, extra ledger fields)."""
    if args.command == "run":
        result = cmd_run(ctx)
        for note in result.notes:
            print(note)
        print(f"wrote {len(result.artifacts)} artifact(s) to {result.output_dir}")
        return EXIT_OK, "ok", {"output_dir": str(result.output_dir), "notes": "\n".join(result.notes)}
    if args.command == "decompose":
        result = cmd_decompose(ctx)
        print(result.report.model_dump_json(indent=2))
        return EXIT_OK, "ok", {"output_dir": str(ctx.output_dir), "notes": "\n".join(result.report.warnings)}
    if args.command == "verify":
        report, path = cmd_verify(args.suite, ctx)
        print(report.render_text())
        code = EXIT_OK if report.passed else EXIT_CHECK_FAILED
        return code, "pass" if report.passed else "fail", {
            "suite": args.suite,
            "output_dir": str(path.parent),
            "checks": report.checks,
        }
    if args.command == "oracle":
        result = cmd_oracle(ctx)
        print(result.path.read_text(encoding="utf-8"), end="")
        code = EXIT_OK if result.max_moment_defect <= 1e-8 else EXIT_CHECK_FAILED
        return code, "ok" if code == EXIT_OK else "fail", {"output_dir": str(ctx.output_dir)}
    if args.command == "kernel-info":
        print(json.dumps(cmd_kernel_info(ctx), indent=2))
        return EXIT_OK, "ok", {}
    raise ConfigError(f"unknown command {args.command!r}")


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK

    settings = get_settings()
    logging.basicConfig(
        level=getattr(logging, settings.log_level.upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    if args.command == "serve":
        import uvicorn

        uvicorn.run("app.main:app", host=args.host, port=args.port)
        return EXIT_OK

    ctx = None
    try:
        ctx = _context(args, settings)
        code, status, extra = _dispatch(args, ctx)
    except NumericalFailure as exc:
        logger.error("Numerical failure: %s", exc)
        _write_failure(ctx, exc)
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (
        ConfigError,
        VerifyError,
        GridError,
        KernelError,
        CollisionError,
        AnalysisError,
        BkwError,
        InitialDatumError,
        SolverError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    if args.record or settings.record_runs:
        _record(settings, args.command, ctx.config, status, **extra)
    return code
