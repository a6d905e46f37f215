"""Skaffold project loading, manifest indexing, and versioned reconfiguration."""

from __future__ import annotations

import shutil
import zipfile
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional

import yaml

from .domain import DomainError

SKAFFOLD_NAME = "skaffold.yaml"
VERSION_DIR_PREFIX = "inputs_v"


class ProjectError(DomainError):
    """Problem loading or editing a project; the message names the file."""


@dataclass(frozen=True)
class ManifestDoc:
    """One parsed K8s document. Namespace defaulting happens here, once."""

    kind: str
    name: str
    namespace: str
    labels: Mapping[str, str]
    body: Mapping[str, Any]

    @classmethod
    def from_body(cls, body: Mapping[str, Any], source: str) -> "ManifestDoc":
        if not isinstance(body, Mapping):
            raise ProjectError(f"{source}: manifest document is not a mapping")
        for key in ("apiVersion", "kind"):
            if key not in body:
                raise ProjectError(f"{source}: manifest missing {key}")
        metadata = body.get("metadata") or {}
        name = metadata.get("name")
        if not name:
            raise ProjectError(f"{source}: manifest missing metadata.name")
        return cls(
            kind=body["kind"],
            name=name,
            namespace=metadata.get("namespace") or "default",
            labels=dict(metadata.get("labels") or {}),
            body=body,
        )


@dataclass(frozen=True)
class SystemSnapshot:
    """A loaded project version: skaffold config plus indexed manifests."""

    root: Path
    skaffold: Mapping[str, Any]
    manifests: Mapping[str, ManifestDoc]
    version: int = 0
    warnings: tuple[str, ...] = ()

    @property
    def manifest_paths(self) -> list[str]:
        return list((self.skaffold.get("manifests") or {}).get("rawYaml") or [])

    def docs_for(self, path: str) -> list[ManifestDoc]:
        return [doc for key, doc in self.manifests.items() if key == path or key.startswith(path + "#")]

    def read_file(self, path: str) -> str:
        return (self.root / path).read_text(encoding="utf-8")


class ReconfigMode(str, Enum):
    CREATE = "create"
    DELETE = "delete"
    REPLACE = "replace"


@dataclass(frozen=True)
class ReconfigAction:
    """One file edit in the improvement phase."""

    mode: ReconfigMode
    fname: str
    explanation: str = ""
    code: Optional[str] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", ReconfigMode(self.mode))
        if self.mode in (ReconfigMode.CREATE, ReconfigMode.REPLACE) and not self.code:
            raise ProjectError(f"{self.mode.value} {self.fname}: manifest code required")
        if self.mode is ReconfigMode.DELETE and self.code:
            raise ProjectError(f"delete {self.fname}: code must be absent")

    def to_json(self) -> dict[str, Any]:
        return {
            "mode": self.mode.value,
            "fname": self.fname,
            "explanation": self.explanation,
            "code": self.code,
        }


def _load_yaml_docs(text: str, source: str) -> list[Mapping[str, Any]]:
    try:
        docs = [d for d in yaml.safe_load_all(text) if d is not None]
    except yaml.YAMLError as exc:
        raise ProjectError(f"{source}: unparseable manifest ({exc})") from exc
    if not docs:
        raise ProjectError(f"{source}: no documents found")
    return docs


def _index_manifests(root: Path, paths: Iterable[str]) -> dict[str, ManifestDoc]:
    manifests: dict[str, ManifestDoc] = {}
    for rel in paths:
        file_path = root / rel
        if not file_path.is_file():
            raise ProjectError(f"{rel}: listed in {SKAFFOLD_NAME} but not found")
        docs = _load_yaml_docs(file_path.read_text(encoding="utf-8"), rel)
        if len(docs) == 1:
            manifests[rel] = ManifestDoc.from_body(docs[0], rel)
        else:
            for i, doc in enumerate(docs):
                manifests[f"{rel}#{i}"] = ManifestDoc.from_body(doc, f"{rel}#{i}")
    return manifests


def load_project(path: str | Path, version: int = 0) -> SystemSnapshot:
    """Load a project folder (or zip archive) with skaffold.yaml at its root."""
    src = Path(path)
    if src.is_file() and src.suffix == ".zip":
        extracted = src.parent / (src.stem + "_unzipped")
        if not extracted.exists():
            with zipfile.ZipFile(src) as zf:
                zf.extractall(extracted)
        src = _find_skaffold_root(extracted)
    if not src.is_dir():
        raise ProjectError(f"{path}: not a directory or zip archive")
    skaffold_path = src / SKAFFOLD_NAME
    if not skaffold_path.is_file():
        raise ProjectError(f"{path}: skaffold config not found (expected {SKAFFOLD_NAME} at root)")
    skaffold = yaml.safe_load(skaffold_path.read_text(encoding="utf-8")) or {}
    warnings = []
    extra = set(skaffold) - {"apiVersion", "kind", "metadata", "manifests"}
    if extra:
        warnings.append(f"ignoring unsupported skaffold sections: {sorted(extra)}")
    listing = (skaffold.get("manifests") or {}).get("rawYaml")
    if not listing:
        raise ProjectError(f"{SKAFFOLD_NAME}: no manifests.rawYaml listing")
    manifests = _index_manifests(src, listing)
    return SystemSnapshot(root=src, skaffold=skaffold, manifests=manifests, version=version, warnings=tuple(warnings))


def _find_skaffold_root(extracted: Path) -> Path:
    if (extracted / SKAFFOLD_NAME).is_file():
        return extracted
    subdirs = [p for p in extracted.iterdir() if p.is_dir()]
    for sub in subdirs:
        if (sub / SKAFFOLD_NAME).is_file():
            return sub
    return extracted


def import_project(path: str | Path, workspace: str | Path) -> SystemSnapshot:
    """Copy a project into <workspace>/inputs_v0 and load it as version 0."""
    source = load_project(path)
    dest = Path(workspace) / f"{VERSION_DIR_PREFIX}0"
    if dest.exists():
        raise ProjectError(f"{dest}: already exists")
    shutil.copytree(source.root, dest)
    return load_project(dest, version=0)


def apply_reconfig(
    snapshot: SystemSnapshot,
    actions: list[ReconfigAction],
    dest: str | Path | None = None,
) -> SystemSnapshot:
    """Apply file edits, producing the next workspace version on disk.

    The source version stays untouched; the new version is written to ``dest``
    (default: sibling inputs_v<N+1> directory).
    """
    targets = [a.fname for a in actions]
    if len(set(targets)) != len(targets):
        raise ProjectError(f"actions target the same path more than once: {targets}")

    new_version = snapshot.version + 1
    dest_path = Path(dest) if dest is not None else snapshot.root.parent / f"{VERSION_DIR_PREFIX}{new_version}"
    if dest_path.exists():
        raise ProjectError(f"{dest_path}: destination already exists")

    listing = snapshot.manifest_paths
    existing = set(listing)
    for action in actions:
        if action.mode is ReconfigMode.CREATE and action.fname in existing:
            raise ProjectError(f"create {action.fname}: file already exists")
        if action.mode in (ReconfigMode.DELETE, ReconfigMode.REPLACE) and action.fname not in existing:
            raise ProjectError(f"{action.mode.value} {action.fname}: no such file")

    shutil.copytree(snapshot.root, dest_path)
    new_listing = list(listing)
    for action in actions:
        target = dest_path / action.fname
        if action.mode is ReconfigMode.DELETE:
            target.unlink()
            new_listing.remove(action.fname)
        else:
            _load_yaml_docs(action.code or "", action.fname)  # parse before writing
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_text(action.code or "", encoding="utf-8")
            if action.mode is ReconfigMode.CREATE:
                new_listing.append(action.fname)

    skaffold = dict(snapshot.skaffold)
    skaffold["manifests"] = {**(skaffold.get("manifests") or {}), "rawYaml": new_listing}
    (dest_path / SKAFFOLD_NAME).write_text(
        yaml.safe_dump(skaffold, sort_keys=False), encoding="utf-8"
    )
    return load_project(dest_path, version=new_version)


class FileChange(str, Enum):
    CREATED = "created"
    DELETED = "deleted"
    REPLACED = "replaced"


@dataclass(frozen=True)
class ManifestDelta:
    """Structured delta for one file between two snapshot versions."""

    path: str
    change: FileChange
    kind_change: Optional[tuple[str, str]] = None
    name_change: Optional[tuple[str, str]] = None
    labels_changed: bool = False
    replica_change: Optional[tuple[Any, Any]] = None

    def describe(self) -> str:
        bits = [f"{self.path}: {self.change.value}"]
        if self.kind_change:
            bits.append(f"kind {self.kind_change[0]}->{self.kind_change[1]}")
        if self.name_change:
            bits.append(f"name {self.name_change[0]}->{self.name_change[1]}")
        if self.labels_changed:
            bits.append("labels changed")
        if self.replica_change:
            bits.append(f"replicas {self.replica_change[0]}->{self.replica_change[1]}")
        return ", ".join(bits)


@dataclass(frozen=True)
class ChangeSummary:
    changes: tuple[ManifestDelta, ...]

    def __bool__(self) -> bool:
        return bool(self.changes)

    def describe(self) -> str:
        return "\n".join(delta.describe() for delta in self.changes) or "no changes"

    def for_path(self, path: str) -> Optional[ManifestDelta]:
        for delta in self.changes:
            if delta.path == path:
                return delta
        return None


def _replicas(doc: ManifestDoc) -> Any:
    return (doc.body.get("spec") or {}).get("replicas")


def diff_snapshots(old: SystemSnapshot, new: SystemSnapshot) -> ChangeSummary:
    """Per-file created/deleted/replaced summary with kind/name/label/replica deltas."""
    old_paths = set(old.manifest_paths)
    new_paths = set(new.manifest_paths)
    changes: list[ManifestDelta] = []

    for path in sorted(new_paths - old_paths):
        changes.append(ManifestDelta(path=path, change=FileChange.CREATED))
    for path in sorted(old_paths - new_paths):
        changes.append(ManifestDelta(path=path, change=FileChange.DELETED))
    for path in sorted(old_paths & new_paths):
        if old.read_file(path) == new.read_file(path):
            continue
        old_docs = old.docs_for(path)
        new_docs = new.docs_for(path)
        kind_change = name_change = replica_change = None
        labels_changed = False
        if len(old_docs) == 1 and len(new_docs) == 1:
            before, after = old_docs[0], new_docs[0]
            if before.kind != after.kind:
                kind_change = (before.kind, after.kind)
            if before.name != after.name:
                name_change = (before.name, after.name)
            labels_changed = dict(before.labels) != dict(after.labels)
            if _replicas(before) != _replicas(after):
                replica_change = (_replicas(before), _replicas(after))
        changes.append(
            ManifestDelta(
                path=path,
                change=FileChange.REPLACED,
                kind_change=kind_change,
                name_change=name_change,
                labels_changed=labels_changed,
                replica_change=replica_change,
            )
        )
    return ChangeSummary(tuple(changes))
