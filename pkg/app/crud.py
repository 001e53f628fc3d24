import json

from sqlalchemy import select
from sqlalchemy.ext.asyncio import AsyncSession
from sqlalchemy.orm import selectinload

from app import models, schemas


async def record_run(
    session: AsyncSession,
    command: str,
    status: str,
    config_text: str,
    suite: str | None = None,
    output_dir: str | None = None,
    notes: str | None = None,
    checks: list[schemas.VerifyCheck] | None = None,
) -> models.RunRecord:
    run = models.RunRecord(
        command=command,
        suite=suite,
        status=status,
        output_dir=output_dir,
        config_text=config_text,
        notes=notes or None,
    )
    for check in checks or []:
        run.checks.append(
            models.CheckRecord(
                name=check.name,
                claim=check.claim,
                passed=check.passed,
                measured_json=json.dumps(check.measured, sort_keys=True),
            )
        )
    session.add(run)
    await session.commit()
    return await get_run(session, run.id)


async def list_runs(session: AsyncSession, suite: str | None = None) -> list[models.RunRecord]:
    query = select(models.RunRecord).options(selectinload(models.RunRecord.checks))
    if suite is not None:
        query = query.where(models.RunRecord.suite == suite)
    result = await session.execute(query.order_by(models.RunRecord.id))
    return result.scalars().unique().all()


async def get_run(session: AsyncSession, run_id: int) -> models.RunRecord | None:
    result = await session.execute(
        select(models.RunRecord)
        .where(models.RunRecord.id == run_id)
        .options(selectinload(models.RunRecord.checks))
    )
    return result.scalar_one_or_none()
