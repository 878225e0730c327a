"""On-disk layout for CLI artifacts.

Each artifact lands in a kind-specific folder and is listed in
``manifest.json`` with the config that produced it, so any entry can be
re-run and its content hash compared.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from pathlib import Path

KINDS = ("instances", "readouts", "scores", "ranks", "reports")
DEFAULT_OUT = "anneal_out"
ENV_OUT = "ANNEAL_TUNER_OUT"


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(config: dict) -> str:
    return hashlib.sha256(canonical_json(config).encode()).hexdigest()


def file_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def resolve_out_dir(flag=None) -> Path:
    """The ``--out`` flag wins, then the environment variable, then the default."""
    return Path(flag or os.environ.get(ENV_OUT) or DEFAULT_OUT)


class ResultStore:
    def __init__(self, root):
        self.root = Path(root)
        self.manifest_path = self.root / "manifest.json"
        self._stamp = time.strftime("%Y%m%dT%H%M%SZ", time.gmtime())

    def _manifest(self):
        if self.manifest_path.exists():
            return json.loads(self.manifest_path.read_text())
        return {"artifacts": []}

    def path_for(self, kind, command, seed, suffix):
        if kind not in KINDS:
            raise ValueError(f"unknown artifact kind {kind!r}")
        folder = self.root / kind
        folder.mkdir(parents=True, exist_ok=True)
        base = f"{command}-{seed}-{self._stamp}"
        path = folder / f"{base}{suffix}"
        n = 1
        while path.exists():
            path = folder / f"{base}.{n}{suffix}"
            n += 1
        return path

    def write(self, kind, command, seed, suffix, content: str, config: dict, path=None) -> Path:
        """Write one artifact and record it with the config that produced it."""
        path = Path(path) if path is not None else self.path_for(kind, command, seed, suffix)
        path.write_text(content)
        manifest = self._manifest()
        manifest["artifacts"].append(
            {
                "path": str(path.relative_to(self.root)),
                "kind": kind,
                "suffix": suffix,
                "command": command,
                "seed": seed,
                "config": config,
                "config_hash": config_hash(config),
                "sha256": file_hash(path),
            }
        )
        self.manifest_path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
        return path

    def entries(self):
        return self._manifest()["artifacts"]
