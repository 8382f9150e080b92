from sqlalchemy import Column, Integer, String, DateTime, Text, Float
from sqlalchemy.sql import func
from vortexmf.db.base import Base


class RunRecord(Base):
    """One CLI invocation and the artifact it produced"""
    __tablename__ = "runs"

    id = Column(Integer, primary_key=True, index=True)
    command = Column(String, nullable=False, index=True)  # cvp, mvp, diagnose, bubble, validate, mesh
    status = Column(String, nullable=False)  # converged, diverged, found, pass, fail, ...
    exit_code = Column(Integer, nullable=False, default=0)

    # Artifact (JSON)
    config_json = Column(Text, nullable=False)
    payload_json = Column(Text, nullable=True)
    output_path = Column(String, nullable=True)
    provenance = Column(String, nullable=True)  # sha256 of input files
    tool_version = Column(String, nullable=False)
    wall_time = Column(Float, nullable=True)

    # Audit
    created_at = Column(DateTime(timezone=True), server_default=func.now())
