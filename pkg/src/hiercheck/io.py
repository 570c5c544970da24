"""Dataset ingestion and CSV/JSON serialisation.

Every CSV written here starts with one ``#``-prefixed JSON line naming the
producing operation, the seed and a hash of the configuration. Floats are
written with 17 significant digits so files round-trip exactly and are
byte-identical across reruns.
"""

from __future__ import annotations

import csv
import hashlib
import io as _io
import json
from pathlib import Path
from typing import Sequence

import numpy as np

from .models import BetaBinomialData, GroupedNormalData, ModelError, PriorSpec
from .samplers import ChainConfig, PosteriorDraws


class DatasetError(ValueError):
    """A dataset file failed to parse or validate."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()[:16]


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def format_header(operation: str, config: dict, seed: int | None = None, **extra) -> str:
    head = {"operation": operation, "seed": seed, "config_hash": config_hash(config), "config": config}
    head.update(extra)
    return "# " + json.dumps(head, sort_keys=True)


def write_table(path, header: str, columns: Sequence[str], rows: np.ndarray) -> None:
    rows = np.asarray(rows, dtype=float)
    if rows.ndim == 1:
        rows = rows[:, None]
    buf = [header, ",".join(columns)]
    buf.extend(",".join(fmt(v) for v in row) for row in rows)
    Path(path).write_text("\n".join(buf) + "\n", encoding="utf-8")


def read_table(path) -> tuple[dict, list[str], np.ndarray]:
    """Inverse of :func:`write_table`: ``(header, column names, values)``."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith("#"):
        raise DatasetError("missing '#' JSON header line", 1)
    header = json.loads(lines[0][1:])
    cols = lines[1].split(",")
    vals = np.array([[float(v) for v in ln.split(",")] for ln in lines[2:] if ln], dtype=float)
    return header, cols, vals.reshape(-1, len(cols))


def write_draws(path, draws: PosteriorDraws) -> None:
    head = draws.header()
    header = format_header("fit", head, draws.config.seed, model=draws.model)
    write_table(path, header, draws.column_names(), draws.matrix())


def read_draws(path) -> PosteriorDraws:
    header, cols, vals = read_table(path)
    cfg = header["config"]
    prior_d = cfg["prior"]
    prior = PriorSpec(
        prior_d["kind"], prior_d["a"], prior_d.get("hyperparams", {}), prior_d.get("fixed", {})
    )
    chain = ChainConfig(**cfg["config"])
    model = cfg["model"]
    names = ("theta", "mu", "tau2", "sigma2") if model == "normal-hier" else ("p", "alpha", "beta")
    columns = {}
    for name in names:
        if name in cols:
            columns[name] = vals[:, cols.index(name)].copy()
        else:
            idx = [i for i, c in enumerate(cols) if c.rsplit("_", 1)[0] == name]
            columns[name] = vals[:, idx].copy()
    return PosteriorDraws(
        model=model,
        columns=columns,
        acceptance=cfg.get("acceptance", {}),
        prior=prior,
        config=chain,
        data_fingerprint=cfg["data"],
    )


def ingest_dataset(path, model: str):
    """Read a dataset CSV.

    ``normal-hier``: header ``group,value``; groups are numbered in order
    of first appearance. ``beta-binom``: header ``unit,successes,trials``.
    Parse and validation problems raise :class:`DatasetError` carrying the
    offending line number; an unreadable file raises ``OSError``.
    """
    return parse_dataset(Path(path).read_text(encoding="utf-8"), model)


def parse_dataset(text: str, model: str):
    rows = list(csv.reader(_io.StringIO(text)))
    if not rows:
        raise DatasetError("empty dataset", 1)
    head = [h.strip() for h in rows[0]]
    if model == "normal-hier":
        if head != ["group", "value"]:
            raise DatasetError("expected header 'group,value'", 1)
        order: dict[str, int] = {}
        groups: list[list[float]] = []
        for lineno, row in enumerate(rows[1:], start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise DatasetError(f"expected 2 fields, got {len(row)}", lineno)
            label = row[0].strip()
            if not label:
                raise DatasetError("empty group label", lineno)
            try:
                value = float(row[1])
            except ValueError:
                raise DatasetError(f"value {row[1]!r} is not a number", lineno) from None
            if not np.isfinite(value):
                raise DatasetError("value must be finite", lineno)
            if label not in order:
                order[label] = len(groups)
                groups.append([])
            groups[order[label]].append(value)
        if not groups:
            raise DatasetError("dataset has no observations")
        try:
            return GroupedNormalData(groups)
        except ModelError as exc:
            raise DatasetError(str(exc)) from exc
    if model == "beta-binom":
        if head != ["unit", "successes", "trials"]:
            raise DatasetError("expected header 'unit,successes,trials'", 1)
        xs, ns = [], []
        for lineno, row in enumerate(rows[1:], start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise DatasetError(f"expected 3 fields, got {len(row)}", lineno)
            try:
                x = int(row[1])
                n = int(row[2])
            except ValueError:
                raise DatasetError("successes and trials must be integers", lineno) from None
            if n <= 0:
                raise DatasetError("trials must be positive", lineno)
            if x < 0:
                raise DatasetError("successes must be non-negative", lineno)
            if x > n:
                raise DatasetError(f"successes ({x}) exceed trials ({n})", lineno)
            xs.append(x)
            ns.append(n)
        try:
            return BetaBinomialData(xs, ns)
        except ModelError as exc:
            raise DatasetError(str(exc)) from exc
    raise DatasetError(f"unknown model {model!r}")


def dataset_to_csv(data) -> str:
    if isinstance(data, GroupedNormalData):
        lines = ["group,value"]
        for i, g in enumerate(data.groups):
            lines.extend(f"g{i + 1},{fmt(v)}" for v in g)
    else:
        lines = ["unit,successes,trials"]
        lines.extend(
            f"u{i + 1},{int(x)},{int(n)}"
            for i, (x, n) in enumerate(zip(data.successes, data.trials))
        )
    return "\n".join(lines) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=1) + "\n", encoding="utf-8")
