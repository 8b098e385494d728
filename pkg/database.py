from contextlib import contextmanager
from functools import lru_cache
from typing import Iterator

from sqlalchemy import create_engine
from sqlalchemy.engine import Engine
from sqlalchemy.orm import sessionmaker, Session
from sqlalchemy.exc import SQLAlchemyError
from models import Base


@lru_cache(maxsize=None)
def get_engine(database_url: str) -> Engine:
    """One engine per ledger URL"""
    connect_args = {"check_same_thread": False} if database_url.startswith("sqlite") else {}
    return create_engine(database_url, echo=False, connect_args=connect_args)


@lru_cache(maxsize=None)
def get_session_factory(database_url: str) -> sessionmaker:
    return sessionmaker(autocommit=False, autoflush=False, bind=get_engine(database_url))


def init_db(database_url: str, verbose: bool = False) -> None:
    """Initialize the ledger by creating all tables"""
    try:
        Base.metadata.create_all(bind=get_engine(database_url))
        if verbose:
            print("✓ Ledger tables created/verified successfully")
    except SQLAlchemyError as e:
        print(f"⚠ Error creating ledger tables: {e}")
        raise


def get_db(database_url: str) -> Iterator[Session]:
    """Yield a ledger session and close it afterwards"""
    db = get_session_factory(database_url)()
    try:
        yield db
    finally:
        db.close()


session_scope = contextmanager(get_db)
