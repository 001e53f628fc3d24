import asyncio

from fastapi import APIRouter, Depends, HTTPException, status
from sqlalchemy.ext.asyncio import AsyncSession

from app import crud, schemas
from app.config import ConfigError, get_settings, parse_config, render_config
from app.db import get_session
from app.services.kernel import KernelError
from app.services.pipeline import build_context, cmd_kernel_info
from app.services.verify import SUITES, cmd_verify

router = APIRouter()


@router.get("/runs", response_model=list[schemas.RunRecordRead])
async def read_runs(suite: str | None = None, session: AsyncSession = Depends(get_session)):
    return await crud.list_runs(session, suite)


@router.get("/runs/{run_id}", response_model=schemas.RunRecordRead)
async def read_run(run_id: int, session: AsyncSession = Depends(get_session)):
    run = await crud.get_run(session, run_id)
    if not run:
        raise HTTPException(status_code=status.HTTP_404_NOT_FOUND, detail="Run not found")
    return run


@router.post("/verify/{suite}", response_model=schemas.VerifyReport)
async def run_verify(
    suite: str,
    request: schemas.VerifyRequest,
    session: AsyncSession = Depends(get_session),
):
    if suite not in SUITES:
        raise HTTPException(
            status_code=status.HTTP_422_UNPROCESSABLE_ENTITY, detail=f"Unknown suite {suite!r}"
        )
    try:
        config = parse_config(request.config_text)
    except ConfigError as exc:
        raise HTTPException(status_code=status.HTTP_422_UNPROCESSABLE_ENTITY, detail=str(exc)) from exc

    ctx = build_context(config, get_settings())
    report, path = await asyncio.to_thread(cmd_verify, suite, ctx)
    await crud.record_run(
        session,
        command="verify",
        status="pass" if report.passed else "fail",
        config_text=render_config(config),
        suite=suite,
        output_dir=str(path.parent),
        checks=report.checks,
    )
    return report


@router.get("/kernel-info")
async def kernel_info(config_text: str = ""):
    try:
        config = parse_config(config_text)
        return cmd_kernel_info(build_context(config, get_settings()))
    except (ConfigError, KernelError) as exc:
        raise HTTPException(status_code=status.HTTP_422_UNPROCESSABLE_ENTITY, detail=str(exc)) from exc
