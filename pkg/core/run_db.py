"""
Training Run Ledger Database
============================
Persistent record of training runs and their per-epoch history.

Key Features:
- One row per training run (config, seed, status, best dev accuracy)
- One row per completed epoch (loss, train/dev accuracy, wall time)
- Detection of runs left RUNNING by a crashed process

The database lives next to the model it describes (<out_dir>/runs.db) unless
FEEDBACK_DATABASE_URL points elsewhere.
"""

import json
import logging
import os
import time
from datetime import datetime
from enum import Enum
from typing import Any, Dict, List, Optional

from sqlalchemy import Column, DateTime, Float, ForeignKey, Index, Integer, String, Text, create_engine, event
from sqlalchemy.exc import OperationalError
from sqlalchemy.orm import declarative_base, relationship, scoped_session, sessionmaker
from sqlalchemy.pool import NullPool
from sqlalchemy.sql import func

logger = logging.getLogger(__name__)

DATABASE_URL_ENV = 'FEEDBACK_DATABASE_URL'

engine = None
db_session = scoped_session(sessionmaker(autocommit=False, autoflush=False))
Base = declarative_base()


# ==================== ENUMS ====================

class RunStatus(str, Enum):
    """Status of a training run"""
    RUNNING = "RUNNING"           # Epochs in progress
    COMPLETED = "COMPLETED"       # Reached max_epochs
    DIVERGED = "DIVERGED"         # Aborted on a non-finite loss
    CRASHED = "CRASHED"           # Left RUNNING by a process that died


# ==================== DATABASE MODELS ====================

class TrainingRun(Base):
    """One invocation of the training loop"""
    __tablename__ = 'training_runs'

    id = Column(Integer, primary_key=True)
    run_id = Column(String(36), unique=True, nullable=False)  # UUID

    architecture = Column(String(16), nullable=False)  # cnn, cnn_gru
    preset = Column(String(16), nullable=False)        # en, es, fr, jp, custom
    language = Column(String(8))
    seed = Column(Integer, nullable=False)
    config_json = Column(Text, nullable=False)

    status = Column(String(20), default=RunStatus.RUNNING.value)
    epochs_completed = Column(Integer, default=0)
    best_epoch = Column(Integer, default=0)
    best_dev_accuracy = Column(Float, default=0.0)

    notes = Column(Text)
    start_time = Column(DateTime(timezone=True))
    end_time = Column(DateTime(timezone=True))
    created_at = Column(DateTime(timezone=True), server_default=func.now())
    updated_at = Column(DateTime(timezone=True), onupdate=func.now())

    epochs = relationship("EpochRecord", back_populates="run", cascade="all, delete-orphan",
                          order_by="EpochRecord.epoch")

    __table_args__ = (
        Index('idx_run_status', 'status'),
        Index('idx_run_preset', 'preset'),
    )


class EpochRecord(Base):
    """Summary of one epoch of a training run"""
    __tablename__ = 'epoch_records'

    id = Column(Integer, primary_key=True)
    run_id = Column(Integer, ForeignKey('training_runs.id'), nullable=False)
    epoch = Column(Integer, nullable=False)
    mean_loss = Column(Float, nullable=False)
    train_accuracy = Column(Float, nullable=False)
    dev_accuracy = Column(Float, nullable=False)
    wall_time = Column(Float, nullable=False)
    created_at = Column(DateTime(timezone=True), server_default=func.now())

    run = relationship("TrainingRun", back_populates="epochs")

    __table_args__ = (
        Index('idx_epoch_run', 'run_id', 'epoch', unique=True),
    )


# ==================== DATABASE OPERATIONS ====================

def _make_engine(database_url: str):
    if 'sqlite' in database_url:
        new_engine = create_engine(
            database_url,
            poolclass=NullPool,
            connect_args={
                'check_same_thread': False,
                'timeout': 30,  # 30 second timeout for locks
            }
        )

        @event.listens_for(new_engine, "connect")
        def set_sqlite_pragma(dbapi_conn, connection_record):
            cursor = dbapi_conn.cursor()
            cursor.execute("PRAGMA journal_mode=WAL")
            cursor.execute("PRAGMA busy_timeout=30000")  # 30 seconds in milliseconds
            cursor.execute("PRAGMA synchronous=NORMAL")
            cursor.execute("PRAGMA foreign_keys=ON")
            cursor.close()

        return new_engine
    return create_engine(database_url, pool_size=5, max_overflow=10, pool_timeout=10)


def init_db(database_url: Optional[str] = None):
    """
    Bind the ledger to a database and create its tables.

    Args:
        database_url: SQLAlchemy URL; FEEDBACK_DATABASE_URL wins when set
    """
    global engine
    database_url = os.getenv(DATABASE_URL_ENV) or database_url
    if not database_url:
        raise ValueError(f"no database URL given and {DATABASE_URL_ENV} is not set")

    db_session.remove()
    if engine is not None:
        engine.dispose()
    engine = _make_engine(database_url)
    db_session.configure(bind=engine)

    Base.metadata.create_all(bind=engine, checkfirst=True)
    logger.debug(f"✅ Run ledger initialized at {database_url}")


def close_db():
    """Release the session and the engine"""
    global engine
    db_session.remove()
    if engine is not None:
        engine.dispose()
        engine = None


def sqlite_url(path) -> str:
    return f"sqlite:///{path}"


# ==================== RUN OPERATIONS ====================

def create_run(run_id: str, architecture: str, preset: str, seed: int, config: Dict[str, Any],
               language: Optional[str] = None, notes: Optional[str] = None) -> Optional[TrainingRun]:
    """Create a RUNNING training run with retry logic for database locks"""
    max_retries = 3
    retry_delay = 1  # seconds

    for attempt in range(max_retries):
        try:
            run = TrainingRun(
                run_id=run_id,
                architecture=architecture,
                preset=preset,
                language=language,
                seed=seed,
                config_json=json.dumps(config, sort_keys=True),
                status=RunStatus.RUNNING.value,
                start_time=datetime.now(),
                notes=notes,
            )
            db_session.add(run)
            db_session.commit()
            logger.debug(f"✅ Created run {run_id} ({architecture}, preset {preset})")
            return run
        except OperationalError as e:
            db_session.rollback()
            if 'database is locked' in str(e).lower() and attempt < max_retries - 1:
                logger.warning(f"⚠️  Database locked, retrying in {retry_delay}s (attempt {attempt + 1}/{max_retries})")
                time.sleep(retry_delay)
                retry_delay *= 2
                continue
            logger.error(f"❌ Error creating run: {e}")
            return None
        except Exception as e:
            db_session.rollback()
            logger.error(f"❌ Error creating run: {e}")
            return None

    return None


def get_run(run_id: str) -> Optional[TrainingRun]:
    """Get run by UUID"""
    try:
        return db_session.query(TrainingRun).filter_by(run_id=run_id).first()
    except Exception as e:
        logger.error(f"❌ Error fetching run: {e}")
        return None


def get_runs_by_status(status: str) -> List[TrainingRun]:
    try:
        return db_session.query(TrainingRun).filter_by(status=status).order_by(TrainingRun.id).all()
    except Exception as e:
        logger.error(f"❌ Error fetching runs: {e}")
        return []


def update_run_status(run_id: str, status: str, notes: Optional[str] = None,
                      best_epoch: Optional[int] = None, best_dev_accuracy: Optional[float] = None) -> bool:
    """Update run status (and best-dev fields when given); terminal states set end_time"""
    try:
        run = get_run(run_id)
        if run is None:
            return False
        run.status = status
        if notes:
            run.notes = f"{run.notes}\n{notes}" if run.notes else notes
        if best_epoch is not None:
            run.best_epoch = best_epoch
        if best_dev_accuracy is not None:
            run.best_dev_accuracy = best_dev_accuracy
        if status != RunStatus.RUNNING.value:
            run.end_time = datetime.now()
        db_session.commit()
        logger.debug(f"✅ Updated run {run_id} status to {status}")
        return True
    except Exception as e:
        logger.error(f"❌ Error updating run: {e}")
        db_session.rollback()
        return False


# ==================== EPOCH OPERATIONS ====================

def record_epoch(run_id: str, epoch: int, mean_loss: float, train_accuracy: float,
                 dev_accuracy: float, wall_time: float) -> Optional[EpochRecord]:
    """Append one epoch summary to a run"""
    try:
        run = get_run(run_id)
        if run is None:
            logger.warning(f"⚠️  Run {run_id} not found; epoch {epoch} not recorded")
            return None
        record = EpochRecord(run_id=run.id, epoch=epoch, mean_loss=mean_loss, train_accuracy=train_accuracy,
                             dev_accuracy=dev_accuracy, wall_time=wall_time)
        db_session.add(record)
        run.epochs_completed = epoch
        db_session.commit()
        return record
    except Exception as e:
        logger.error(f"❌ Error recording epoch {epoch}: {e}")
        db_session.rollback()
        return None


# ==================== REPORTING OPERATIONS ====================

def get_run_summary(run_id: str) -> Optional[Dict]:
    """Get summary of a run with its epoch history"""
    try:
        run = get_run(run_id)
        if not run:
            return None
        return {
            'run_id': run.run_id,
            'architecture': run.architecture,
            'preset': run.preset,
            'seed': run.seed,
            'status': run.status,
            'config': json.loads(run.config_json),
            'epochs_completed': run.epochs_completed,
            'best_epoch': run.best_epoch,
            'best_dev_accuracy': run.best_dev_accuracy,
            'start_time': run.start_time.isoformat() if run.start_time else None,
            'end_time': run.end_time.isoformat() if run.end_time else None,
            'epochs': [
                {
                    'epoch': e.epoch,
                    'mean_loss': e.mean_loss,
                    'train_accuracy': e.train_accuracy,
                    'dev_accuracy': e.dev_accuracy,
                    'wall_time': e.wall_time,
                }
                for e in run.epochs
            ],
        }
    except Exception as e:
        logger.error(f"❌ Error generating run summary: {e}")
        return None
