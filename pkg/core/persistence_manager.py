"""
Run Persistence Manager
=======================
Records training runs in the run ledger (core.run_db).
Includes detection of runs interrupted by a crashed process.

Ledger failures never stop training: they are logged and the run carries on
without persistence.
"""

import logging
import uuid
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Optional, Union

from .run_db import (
    RunStatus, TrainingRun, create_run, db_session, get_run_summary, init_db, record_epoch, sqlite_url,
    update_run_status,
)

logger = logging.getLogger(__name__)

LEDGER_FILE = "runs.db"


class RunPersistence:
    """Manages ledger persistence for one training run"""

    def __init__(self, out_dir: Union[str, Path], config: Dict, database_url: Optional[str] = None):
        """
        Initialize persistence manager

        Args:
            out_dir: Model directory; the ledger defaults to <out_dir>/runs.db
            config: TrainConfig as a dict (stored with the run)
            database_url: Explicit SQLAlchemy URL instead of the model-directory ledger
        """
        self.run_id = str(uuid.uuid4())
        self.enabled = False
        self.interrupted: List[Dict] = []

        try:
            init_db(database_url or sqlite_url(Path(out_dir) / LEDGER_FILE))
        except Exception as e:
            logger.warning(f"⚠️  Run ledger unavailable ({e}); continuing without persistence")
            return

        self.interrupted = self.detect_interrupted_runs()
        if self.interrupted:
            self.mark_runs_as_crashed([r['run_id'] for r in self.interrupted])

        run = create_run(
            run_id=self.run_id,
            architecture=config.get('architecture', 'cnn'),
            preset=config.get('preset', 'custom'),
            seed=int(config.get('seed', 0)),
            config=config,
            language=config.get('language'),
            notes=f"Feedback classifier run - {config.get('architecture', 'cnn')}",
        )
        if run:
            self.enabled = True
            logger.info(f"✓ Persistence initialized - Run ID: {self.run_id}")
        else:
            logger.warning("⚠️  Failed to create run record")

    def record_epoch(self, report) -> None:
        """Store one EpochReport; usable directly as a training epoch callback"""
        if not self.enabled:
            return
        record_epoch(self.run_id, report.epoch, report.mean_loss, report.train_accuracy,
                     report.dev_accuracy, report.wall_time)

    def close_run(self, status: RunStatus, best_epoch: int = 0, best_dev_accuracy: float = 0.0,
                  notes: Optional[str] = None) -> None:
        """Mark the run finished with a terminal status"""
        if not self.enabled:
            return
        update_run_status(self.run_id, status.value, notes=notes, best_epoch=best_epoch,
                          best_dev_accuracy=best_dev_accuracy)
        logger.info(f"✓ Run {self.run_id[:8]} closed - {status.value}, best epoch {best_epoch} "
                    f"(dev {best_dev_accuracy:.4f})")

    def summary(self) -> Optional[Dict]:
        return get_run_summary(self.run_id) if self.enabled else None

    @staticmethod
    def detect_interrupted_runs() -> List[Dict]:
        """
        Detect runs that were RUNNING but never closed (crashed)

        Returns:
            List of interrupted run data
        """
        try:
            interrupted = db_session.query(TrainingRun).filter(
                TrainingRun.status == RunStatus.RUNNING.value
            ).all()

            if not interrupted:
                logger.debug("✓ No interrupted runs detected")
                return []

            logger.warning(f"⚠️  Found {len(interrupted)} interrupted run(s)")
            return [
                {
                    'run_id': run.run_id,
                    'run_db_id': run.id,
                    'architecture': run.architecture,
                    'start_time': run.start_time,
                    'epochs_completed': run.epochs_completed,
                }
                for run in interrupted
            ]

        except Exception as e:
            logger.error(f"Error detecting interrupted runs: {e}")
            return []

    @staticmethod
    def mark_runs_as_crashed(run_ids: List[str], crash_reason: str = "Process terminated unexpectedly"):
        """
        Mark runs as crashed

        Args:
            run_ids: Run UUIDs to mark as crashed
            crash_reason: Reason for crash
        """
        try:
            for run_id in run_ids:
                run = db_session.query(TrainingRun).filter(TrainingRun.run_id == run_id).first()
                if run:
                    run.status = RunStatus.CRASHED.value
                    run.end_time = datetime.now()
                    run.notes = (run.notes or '') + f"\n[CRASHED] {crash_reason}"

            db_session.commit()
            logger.info(f"✓ Marked {len(run_ids)} run(s) as CRASHED")

        except Exception as e:
            logger.error(f"Error marking runs as crashed: {e}")
            db_session.rollback()
