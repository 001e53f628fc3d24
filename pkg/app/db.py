from contextlib import asynccontextmanager
from typing import AsyncGenerator

from sqlalchemy.ext.asyncio import AsyncSession, async_sessionmaker, create_async_engine
from sqlalchemy.orm import DeclarativeBase

from app.config import get_settings


class Base(DeclarativeBase):
    pass


settings = get_settings()
engine = create_async_engine(settings.database_url, echo=False, future=True)
AsyncSessionLocal = async_sessionmaker(engine, expire_on_commit=False)


async def get_session() -> AsyncGenerator[AsyncSession, None]:
    async with AsyncSessionLocal() as session:
        yield session


async def init_db(bind=None) -> None:
    async with (bind or engine).begin() as conn:
        await conn.run_sync(Base.metadata.create_all)


@asynccontextmanager
async def session_scope(database_url: str) -> AsyncGenerator[AsyncSession, None]:
    """Short-lived engine and session for one CLI command."""
    scoped = create_async_engine(database_url, echo=False, future=True)
    try:
        await init_db(scoped)
        async with async_sessionmaker(scoped, expire_on_commit=False)() as session:
            yield session
    finally:
        await scoped.dispose()
