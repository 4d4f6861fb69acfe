"""Text formats for datasets, dendrograms, models and result tables.

Dataset files are tab-separated; blank lines and lines starting with ``#``
are ignored.

* points: one row per point, ``id  label  f_0 ... f_{d-1}``
* pairs: a directory with ``entities.tsv`` (``id  block  label``) and
  ``pairs.tsv`` (``id_a  id_b  f_0 ... f_{d-1}``)

Dendrograms are line oriented: ``L <node-id> <point-id>`` per leaf,
``I <node-id> <left> <right> <height>`` per internal node, root last.  A file
may hold several trees (one per block), each introduced by ``T <index>``.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Sequence, TextIO

import numpy as np

from ..core import DissimilarityModel, Euclidean, LinearPair, Mahalanobis, PairDataset, PointDataset
from ..errors import DatasetIntegrityError, LoadError
from ..hac import Dendrogram
from ..linkage import Alpha

__all__ = [
    "load_dataset",
    "save_dataset",
    "load_points",
    "save_points",
    "load_pairs",
    "save_pairs",
    "write_dendrograms",
    "read_dendrograms",
    "save_model",
    "load_model",
    "format_float",
]

ENTITIES_FILE = "entities.tsv"
PAIRS_FILE = "pairs.tsv"


def format_float(x: float) -> str:
    return repr(float(x))


def _rows(path: Path) -> Iterable[tuple[int, list[str]]]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise LoadError(f"cannot read {path}: {exc}") from None
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        yield lineno, line.split("\t") if "\t" in line else line.split()


def _floats(fields: Sequence[str], where: str) -> list[float]:
    try:
        return [float(v) for v in fields]
    except ValueError:
        raise LoadError(f"{where}: non-numeric feature value in {list(fields)}") from None


def _int(text: str, where: str, what: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise LoadError(f"{where}: {what} must be an integer, got {text!r}") from None


def load_points(path) -> PointDataset:
    ids, labels, rows = [], [], []
    dim = None
    for lineno, fields in _rows(path):
        where = f"{path}:{lineno}"
        if len(fields) < 3:
            raise LoadError(f"{where}: expected id, label and at least one feature")
        feats = _floats(fields[2:], where)
        if dim is None:
            dim = len(feats)
        elif len(feats) != dim:
            raise LoadError(f"{where}: row has {len(feats)} features, expected {dim}")
        ids.append(fields[0])
        labels.append(_int(fields[1], where, "label"))
        rows.append(feats)
    if not rows:
        raise LoadError(f"{path}: no points")
    _, labels = np.unique(labels, return_inverse=True)
    try:
        return PointDataset(np.asarray(rows), labels, tuple(ids))
    except DatasetIntegrityError as exc:
        raise LoadError(f"{path}: {exc}") from None


def save_points(dataset: PointDataset, path) -> None:
    lines = []
    for pid, lab, row in zip(dataset.ids, dataset.labels, dataset.points):
        lines.append("\t".join([pid, str(int(lab)), *map(format_float, row)]))
    Path(path).write_text("\n".join(lines) + "\n")


def load_pairs(path) -> PairDataset:
    root = Path(path)
    ids, blocks, labels = [], [], []
    for lineno, fields in _rows(root / ENTITIES_FILE):
        where = f"{root / ENTITIES_FILE}:{lineno}"
        if len(fields) != 3:
            raise LoadError(f"{where}: expected id, block and label")
        ids.append(fields[0])
        blocks.append(_int(fields[1], where, "block"))
        labels.append(_int(fields[2], where, "label"))
    position = {pid: k for k, pid in enumerate(ids)}
    if len(position) != len(ids):
        raise LoadError(f"{root / ENTITIES_FILE}: duplicate entity ids")
    features = {}
    dim = None
    for lineno, fields in _rows(root / PAIRS_FILE):
        where = f"{root / PAIRS_FILE}:{lineno}"
        if len(fields) < 3:
            raise LoadError(f"{where}: expected two ids and at least one feature")
        feats = _floats(fields[2:], where)
        if dim is None:
            dim = len(feats)
        elif len(feats) != dim:
            raise LoadError(f"{where}: row has {len(feats)} features, expected {dim}")
        for pid in fields[:2]:
            if pid not in position:
                raise LoadError(f"{where}: unknown id {pid!r}")
        key = (position[fields[0]], position[fields[1]])
        if (key[1], key[0]) in features or key in features:
            raise LoadError(f"{where}: duplicate pair ({fields[0]}, {fields[1]})")
        features[key] = feats
    _, labels = np.unique(labels, return_inverse=True)
    try:
        return PairDataset(tuple(ids), labels, np.asarray(blocks), features)
    except DatasetIntegrityError as exc:
        raise LoadError(f"{root}: {exc}") from None


def save_pairs(dataset: PairDataset, path) -> None:
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    ent = [f"{pid}\t{int(b)}\t{int(lab)}" for pid, b, lab in zip(dataset.ids, dataset.blocks, dataset.labels)]
    (root / ENTITIES_FILE).write_text("\n".join(ent) + "\n")
    rows = []
    for (i, j), vec in sorted(dataset.features.items()):
        rows.append("\t".join([dataset.ids[i], dataset.ids[j], *map(format_float, vec)]))
    (root / PAIRS_FILE).write_text("\n".join(rows) + "\n")


def load_dataset(path, fmt: str = "points"):
    if fmt == "points":
        return load_points(path)
    if fmt == "pairs":
        return load_pairs(path)
    raise LoadError(f"unknown dataset format {fmt!r}; expected points or pairs")


def save_dataset(dataset, path) -> None:
    if isinstance(dataset, PointDataset):
        save_points(dataset, path)
    else:
        save_pairs(dataset, path)


def write_dendrograms(trees: Sequence[Dendrogram], out: TextIO, ids: Sequence[str] | None = None) -> None:
    """Write trees; leaves are named by ``ids[position]`` when ids are given."""
    for k, tree in enumerate(trees):
        out.write(f"T {k}\n")
        n = tree.n_leaves
        for leaf, pos in enumerate(tree.points):
            name = ids[pos] if ids is not None else str(int(pos))
            out.write(f"L {leaf} {name}\n")
        for t in range(n - 1):
            out.write(f"I {n + t} {int(tree.left[t])} {int(tree.right[t])} {format_float(tree.height[t])}\n")


def read_dendrograms(source: TextIO, ids: Sequence[str] | None = None) -> list[Dendrogram]:
    """Parse trees written by :func:`write_dendrograms`; ``ids`` maps names back to positions."""
    position = {pid: k for k, pid in enumerate(ids)} if ids is not None else None
    trees, current = [], None

    def flush():
        if current is None:
            return
        leaves, internal = current
        leaves.sort()
        internal.sort()
        n = len(leaves)
        if [l for l, _ in leaves] != list(range(n)) or [v for v, *_ in internal] != list(range(n, 2 * n - 1)):
            raise LoadError("tree nodes must be numbered 0..n-1 (leaves) then n..2n-2 (internal)")
        trees.append(Dendrogram(
            np.asarray([l for _, l, _, _ in internal], dtype=np.int64),
            np.asarray([r for _, _, r, _ in internal], dtype=np.int64),
            np.asarray([h for *_, h in internal], dtype=np.float64),
            np.asarray([p for _, p in leaves], dtype=np.int64),
        ))

    for lineno, line in enumerate(source, start=1):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        try:
            if parts[0] == "T":
                flush()
                current = ([], [])
                continue
            if current is None:
                current = ([], [])
            if parts[0] == "L":
                name = parts[2]
                pos = position[name] if position is not None else int(name)
                current[0].append((int(parts[1]), pos))
            elif parts[0] == "I":
                current[1].append((int(parts[1]), int(parts[2]), int(parts[3]), float(parts[4])))
            else:
                raise ValueError(parts[0])
        except (ValueError, IndexError, KeyError):
            raise LoadError(f"line {lineno}: cannot parse tree record {line.strip()!r}") from None
    flush()
    return trees


def save_model(path, model: DissimilarityModel, alpha: Alpha | None = None, **extra) -> None:
    kind = {LinearPair: "linear", Mahalanobis: "mahalanobis", Euclidean: "euclidean"}[type(model)]
    doc = {"kind": kind, "dim": model.dim, "params": model.params.tolist()}
    if alpha is not None:
        doc["alpha"] = str(alpha)
    doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_model(path) -> tuple[DissimilarityModel, Alpha | None]:
    try:
        doc = json.loads(Path(path).read_text())
        kind = doc["kind"]
        params = np.asarray(doc["params"], dtype=np.float64)
        if kind == "linear":
            model = LinearPair(params[:-1], params[-1])
        elif kind == "mahalanobis":
            model = Mahalanobis(params)
        elif kind == "euclidean":
            model = Euclidean(int(doc["dim"]))
        else:
            raise KeyError(kind)
    except (OSError, ValueError, KeyError) as exc:
        raise LoadError(f"cannot load model from {path}: {exc}") from None
    alpha = Alpha.parse(doc["alpha"]) if "alpha" in doc else None
    return model, alpha
