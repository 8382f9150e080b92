import json
import logging
from typing import List, Optional

from sqlalchemy import create_engine
from sqlalchemy.exc import SQLAlchemyError
from sqlalchemy.orm import sessionmaker

from vortexmf.core.config import settings
from vortexmf.db.base import Base

logger = logging.getLogger(__name__)

engine = create_engine(settings.DATABASE_URL, connect_args={"check_same_thread": False} if "sqlite" in settings.DATABASE_URL else {})
SessionLocal = sessionmaker(autocommit=False, autoflush=False, bind=engine)


def init_db():
    """
    Create the run-store tables.
    Models are imported here so that they are registered on Base.metadata.
    """
    try:
        from vortexmf.db.models.run import RunRecord  # noqa: F401

        Base.metadata.create_all(bind=engine)
        logger.info("Database tables created successfully")
    except SQLAlchemyError as e:
        logger.error(f"Database error during initialization: {str(e)}")
        raise
    except Exception as e:
        logger.error(f"Unexpected error during database initialization: {str(e)}", exc_info=True)
        raise


def record_run(command: str, status: str, exit_code: int, config: dict, payload: Optional[str],
               tool_version: str, output_path: Optional[str] = None, provenance: Optional[str] = None,
               wall_time: Optional[float] = None) -> Optional[int]:
    """Store one run; returns its id. Store failures are logged and re-raised."""
    from vortexmf.db.models.run import RunRecord

    init_db()
    db = SessionLocal()
    try:
        record = RunRecord(
            command=command,
            status=status,
            exit_code=exit_code,
            config_json=json.dumps(config, sort_keys=True, default=str),
            payload_json=payload,
            output_path=output_path,
            provenance=provenance,
            tool_version=tool_version,
            wall_time=wall_time,
        )
        db.add(record)
        db.commit()
        db.refresh(record)
        logger.debug(f"Stored run {record.id} ({command}, {status})")
        return record.id
    except SQLAlchemyError as e:
        db.rollback()
        logger.error(f"Failed to store run: {str(e)}", exc_info=True)
        raise
    finally:
        db.close()


def list_runs(limit: int = 20, command: Optional[str] = None) -> List[dict]:
    from vortexmf.db.models.run import RunRecord

    init_db()
    db = SessionLocal()
    try:
        query = db.query(RunRecord)
        if command:
            query = query.filter(RunRecord.command == command)
        rows = query.order_by(RunRecord.id.desc()).limit(limit).all()
        return [
            {
                "id": r.id,
                "command": r.command,
                "status": r.status,
                "exit_code": r.exit_code,
                "output_path": r.output_path,
                "tool_version": r.tool_version,
                "created_at": r.created_at.isoformat() if r.created_at else None,
            }
            for r in rows
        ]
    finally:
        db.close()
