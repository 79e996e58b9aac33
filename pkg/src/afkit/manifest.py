"""Run manifest: config hash, seed, and per-stage input/output hashes.

The manifest guards against mixing artifacts from different configurations:
every stage checks the stored config hash before writing, and refuses to
proceed on a mismatch unless forced (which resets the stage history).
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

MANIFEST_NAME = "manifest.json"


class StaleManifest(Exception):
    pass


def config_hash(cfg: dict) -> str:
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class Manifest:
    def __init__(self, workdir):
        self.workdir = Path(workdir)
        self.path = self.workdir / MANIFEST_NAME
        self.data: dict = {"config_hash": None, "seed": None, "stages": {}}

    @classmethod
    def load(cls, workdir) -> "Manifest":
        m = cls(workdir)
        if m.path.exists():
            with open(m.path, encoding="utf-8") as f:
                m.data = json.load(f)
        return m

    def check(self, cfg_hash: str, seed, force: bool = False) -> None:
        """Bind the manifest to one config hash; mismatch refuses unless forced."""
        stored = self.data.get("config_hash")
        if stored is not None and stored != cfg_hash:
            if not force:
                raise StaleManifest(
                    "workdir manifest was written with a different config "
                    f"(hash {stored[:12]}.. vs {cfg_hash[:12]}..); "
                    "rerun with --force to overwrite"
                )
            self.data = {"config_hash": None, "seed": None, "stages": {}}
        self.data["config_hash"] = cfg_hash
        self.data["seed"] = seed

    def _rel(self, path) -> str:
        p = Path(path)
        try:
            return p.relative_to(self.workdir).as_posix()
        except ValueError:
            return str(p)

    def record(self, stage: str, inputs=(), outputs=(), extra: dict | None = None) -> None:
        entry = {
            "seed": self.data.get("seed"),
            "inputs": {self._rel(p): file_sha256(p) for p in inputs},
            "outputs": {self._rel(p): file_sha256(p) for p in outputs},
        }
        if extra:
            entry["extra"] = extra
        self.data["stages"][stage] = entry
        self.save()

    def stage(self, name: str) -> dict | None:
        return self.data["stages"].get(name)

    def save(self) -> None:
        self.workdir.mkdir(parents=True, exist_ok=True)
        with open(self.path, "w", encoding="utf-8") as f:
            json.dump(self.data, f, indent=2, sort_keys=True)
            f.write("\n")
