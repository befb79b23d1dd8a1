"""Atomic report-bundle storage with a content manifest."""

from __future__ import annotations

import hashlib
import json
import logging
import shutil
import tempfile
from pathlib import Path
from typing import Any, Callable, Dict, Optional

import pandas as pd

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
CSV_FLOAT_FORMAT = "%.6f"


def file_digest(path: Path) -> str:
    """SHA-256 hex digest of a file's bytes."""
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


class BundleWriter:
    """Stage artifacts in a temporary sibling directory and publish them in one rename.

    Use as a context manager: on a clean exit the manifest is written and the bundle committed; on an
    exception the staging directory is deleted and any existing bundle at ``target`` is left untouched.
    """

    def __init__(self, target: str | Path) -> None:
        self.target = Path(target)
        self._staging: Optional[Path] = None
        self._files: Dict[str, str] = {}
        self.manifest: Dict[str, Any] = {}

    def __enter__(self) -> "BundleWriter":
        self.target.parent.mkdir(parents=True, exist_ok=True)
        self._staging = Path(tempfile.mkdtemp(prefix=f".{self.target.name}-", dir=self.target.parent))
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        if exc_type is None:
            self.commit()
        else:
            self.discard()

    @property
    def staging(self) -> Path:
        if self._staging is None:
            raise RuntimeError("BundleWriter used outside its context")
        return self._staging

    def _record(self, name: str) -> Path:
        path = self.staging / name
        self._files[name] = file_digest(path)
        return path

    def write_csv(self, name: str, frame: pd.DataFrame, float_format: str = CSV_FLOAT_FORMAT) -> Path:
        frame.to_csv(self.staging / name, index=False, float_format=float_format, lineterminator="\n")
        return self._record(name)

    def write_json(self, name: str, payload: Any) -> Path:
        with open(self.staging / name, "w", encoding="utf-8", newline="\n") as f:
            json.dump(payload, f, indent=2, sort_keys=True)
            f.write("\n")
        return self._record(name)

    def write_with(self, name: str, writer: Callable[[Path], None]) -> Path:
        """Let ``writer`` produce ``name`` inside the staging directory."""
        writer(self.staging / name)
        return self._record(name)

    def commit(self) -> Path:
        manifest = dict(self.manifest)
        manifest["files"] = dict(sorted(self._files.items()))
        with open(self.staging / MANIFEST_NAME, "w", encoding="utf-8", newline="\n") as f:
            json.dump(manifest, f, indent=2, sort_keys=True)
            f.write("\n")

        backup: Optional[Path] = None
        if self.target.exists():
            backup = self.target.with_name(f".{self.target.name}-old")
            if backup.exists():
                shutil.rmtree(backup)
            self.target.rename(backup)
        self.staging.rename(self.target)
        if backup is not None:
            shutil.rmtree(backup, ignore_errors=True)
        logger.info(f"Committed bundle with {len(self._files)} files to {self.target}", extra={"stage": "bundle"})
        self._staging = None
        return self.target

    def discard(self) -> None:
        if self._staging is not None and self._staging.exists():
            shutil.rmtree(self._staging, ignore_errors=True)
            logger.warning(f"Discarded partial bundle for {self.target}", extra={"stage": "bundle"})
        self._staging = None


def read_manifest(bundle: str | Path) -> Dict[str, Any]:
    with open(Path(bundle) / MANIFEST_NAME, "r", encoding="utf-8") as f:
        return json.load(f)
