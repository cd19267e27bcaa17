"""
Run manifest: what produced a set of outputs.
"""

import hashlib
import logging
from dataclasses import asdict, dataclass, field
from importlib import metadata
from typing import Any, Dict, Iterable, List

from . import __version__
from .csv_exporter import write_json

logger = logging.getLogger(__name__)

TRACKED_PACKAGES = ("numpy", "pandas", "scipy", "networkx", "joblib")


def file_digest(path: str) -> str:
    sha = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            sha.update(chunk)
    return sha.hexdigest()


def package_versions() -> Dict[str, str]:
    versions = {"hftnet": __version__}
    for name in TRACKED_PACKAGES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = "unknown"
    return versions


@dataclass
class RunManifest:
    """Config hash, seed, versions and input digests of one run, plus per-window diagnostics."""
    manifest_id: str
    config_hash: str
    seed: int
    versions: Dict[str, str]
    inputs: Dict[str, str]
    windows: List[Dict[str, Any]] = field(default_factory=list)

    @classmethod
    def create(cls, config_hash: str, seed: int, input_paths: Iterable[str]) -> "RunManifest":
        inputs = {path: file_digest(path) for path in sorted(set(input_paths))}
        sha = hashlib.sha256(config_hash.encode("utf-8"))
        for path, digest in inputs.items():
            sha.update(digest.encode("utf-8"))
        manifest = cls(
            manifest_id=sha.hexdigest()[:16],
            config_hash=config_hash,
            seed=seed,
            versions=package_versions(),
            inputs=inputs,
        )
        logger.info(f"Run manifest {manifest.manifest_id} (config {config_hash[:12]}, {len(inputs)} input files)")
        return manifest

    def record_window(self, **entry: Any):
        self.windows.append(entry)

    def write(self, path: str):
        write_json(asdict(self), path)
