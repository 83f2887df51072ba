"""
Run manifests for CLI invocations
Every artifact a command writes is hashed and listed together with the
inputs, parameters and a snapshot of the host the run happened on
"""

import hashlib
import json
import logging
import platform
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import psutil
from pydantic import BaseModel, Field

from speedchange import __version__

logger = logging.getLogger(__name__)

MANIFEST_PATTERN = "manifest_{command}.json"
HASH_CHUNK = 1 << 20


class ArtifactRecord(BaseModel):
    path: str
    sha256: str
    size_bytes: int


class HostSnapshot(BaseModel):
    """Host resources at the start of a run"""
    platform: str
    python: str
    cpu_physical: Optional[int] = None
    cpu_logical: Optional[int] = None
    memory_total_mb: Optional[float] = None
    memory_percent: Optional[float] = None


class RunManifest(BaseModel):
    """Provenance record of one CLI run"""
    tool_version: str = Field(__version__, description="speedchange version")
    command: str = Field(..., description="Subcommand name")
    argv: List[str] = Field(default_factory=list)
    parameters: Dict[str, Any] = Field(default_factory=dict)
    model_file: Optional[str] = None
    model_sha256: Optional[str] = Field(None, description="Hash of the model file, absent for builtin models")
    started_at: str
    finished_at: Optional[str] = None
    exit_code: Optional[int] = None
    outputs: List[ArtifactRecord] = Field(default_factory=list)
    host: HostSnapshot


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


def sha256_file(path: Union[str, Path]) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(HASH_CHUNK), b""):
            digest.update(chunk)
    return digest.hexdigest()


def host_snapshot() -> HostSnapshot:
    snapshot = HostSnapshot(platform=platform.platform(), python=platform.python_version())
    try:
        memory = psutil.virtual_memory()
        snapshot.cpu_physical = psutil.cpu_count(logical=False)
        snapshot.cpu_logical = psutil.cpu_count()
        snapshot.memory_total_mb = round(memory.total / (1024 * 1024), 1)
        snapshot.memory_percent = memory.percent
    except Exception as e:
        logger.warning(f"Host snapshot incomplete: {e}")
    return snapshot


def start_manifest(command: str, argv: List[str], parameters: Dict[str, Any], model_reference: Optional[str] = None) -> RunManifest:
    model_file, model_hash = None, None
    if model_reference is not None and Path(model_reference).is_file():
        model_file = str(model_reference)
        model_hash = sha256_file(model_reference)
    return RunManifest(
        command=command,
        argv=list(argv),
        parameters=parameters,
        model_file=model_file,
        model_sha256=model_hash,
        started_at=utc_now(),
        host=host_snapshot(),
    )


def record_outputs(manifest: RunManifest, paths: List[Path]) -> None:
    for path in paths:
        manifest.outputs.append(ArtifactRecord(path=str(path), sha256=sha256_file(path), size_bytes=path.stat().st_size))


def finish_manifest(manifest: RunManifest, output_dir: Path, exit_code: int) -> Path:
    """Stamp the end time and write manifest_<command>.json next to the artifacts"""
    manifest.finished_at = utc_now()
    manifest.exit_code = exit_code
    output_dir.mkdir(parents=True, exist_ok=True)
    target = output_dir / MANIFEST_PATTERN.format(command=manifest.command)
    with open(target, "w") as f:
        json.dump(manifest.model_dump(mode="json"), f, indent=2, default=str)
    logger.info(f"Manifest written to {target} ({len(manifest.outputs)} artifacts)")
    return target
