"""Population datasets: per-tool (sliding distance, roughness) series with
visibility flags, plus CSV import/export."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

CSV_HEADER = ("tool_id", "sliding_distance_km", "roughness_um", "revealed")


class DatasetError(ValueError):
    """Raised for malformed datasets or unparseable CSV rows."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class Observation:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and self.x >= 0):
            raise DatasetError(f"sliding distance must be finite and >= 0, got {self.x}")
        if not math.isfinite(self.y):
            raise DatasetError(f"roughness must be finite, got {self.y}")


@dataclass(frozen=True)
class ToolSeries:
    tool_id: int
    observations: tuple[Observation, ...]
    revealed: tuple[bool, ...]

    def __post_init__(self):
        if len(self.revealed) != len(self.observations):
            raise DatasetError(
                f"tool {self.tool_id}: revealed mask has {len(self.revealed)} entries "
                f"for {len(self.observations)} observations")
        xs = [o.x for o in self.observations]
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise DatasetError(f"tool {self.tool_id}: sliding distances must be strictly increasing")

    @property
    def x(self) -> np.ndarray:
        return np.array([o.x for o in self.observations], dtype=float)

    @property
    def y(self) -> np.ndarray:
        return np.array([o.y for o in self.observations], dtype=float)

    @property
    def mask(self) -> np.ndarray:
        return np.array(self.revealed, dtype=bool)

    def __len__(self) -> int:
        return len(self.observations)


@dataclass(frozen=True)
class PopulationDataset:
    """K tool series sharing a nominal measurement grid.

    ``truth`` optionally carries generator ground truth as
    ``{tool_id: {"m": ..., "c": ...}}``; it never enters inference.
    """

    tools: tuple[ToolSeries, ...]
    step_km: float = 6.02
    truth: Mapping[int, Mapping[str, float]] | None = field(default=None, compare=False)

    def __post_init__(self):
        if len(self.tools) < 1:
            raise DatasetError("dataset must contain at least one tool")
        if not self.step_km > 0:
            raise DatasetError(f"step_km must be > 0, got {self.step_km}")
        ids = [t.tool_id for t in self.tools]
        if len(set(ids)) != len(ids):
            raise DatasetError("duplicate tool ids")

    @property
    def tool_ids(self) -> tuple[int, ...]:
        return tuple(t.tool_id for t in self.tools)

    @property
    def n_observations(self) -> int:
        return sum(len(t) for t in self.tools)

    @property
    def n_revealed(self) -> int:
        return sum(sum(t.revealed) for t in self.tools)

    def tool(self, tool_id: int) -> ToolSeries:
        for t in self.tools:
            if t.tool_id == tool_id:
                return t
        raise KeyError(f"unknown tool id {tool_id}")

    def arrays(self, revealed_only: bool = True):
        """Stacked ``(x, y, group_index)`` arrays; group index follows ``tool_ids`` order."""
        xs, ys, gs = [], [], []
        for g, t in enumerate(self.tools):
            keep = t.mask if revealed_only else np.ones(len(t), dtype=bool)
            xs.append(t.x[keep])
            ys.append(t.y[keep])
            gs.append(np.full(int(keep.sum()), g, dtype=np.int64))
        return np.concatenate(xs), np.concatenate(ys), np.concatenate(gs)

    def with_masks(self, masks: Mapping[int, Sequence[bool]]) -> "PopulationDataset":
        """Copy with the revealed mask replaced for the tools named in ``masks``."""
        tools = tuple(
            replace(t, revealed=tuple(bool(v) for v in masks[t.tool_id])) if t.tool_id in masks else t
            for t in self.tools)
        return replace(self, tools=tools)

    def reveal_all(self) -> "PopulationDataset":
        return self.with_masks({t.tool_id: [True] * len(t) for t in self.tools})

    def masks(self) -> dict[int, tuple[bool, ...]]:
        return {t.tool_id: t.revealed for t in self.tools}


def from_arrays(tool_id: Iterable[int], x: Iterable[float], y: Iterable[float],
                revealed: Iterable[bool] | None = None, step_km: float = 6.02) -> PopulationDataset:
    tool_id = np.asarray(list(tool_id), dtype=int)
    x = np.asarray(list(x), dtype=float)
    y = np.asarray(list(y), dtype=float)
    rev = np.ones(len(x), dtype=bool) if revealed is None else np.asarray(list(revealed), dtype=bool)
    if not (len(tool_id) == len(x) == len(y) == len(rev)):
        raise DatasetError("tool_id, x, y and revealed must have equal length")
    tools = []
    for k in dict.fromkeys(tool_id.tolist()):
        sel = tool_id == k
        order = np.argsort(x[sel], kind="stable")
        obs = tuple(Observation(float(a), float(b)) for a, b in zip(x[sel][order], y[sel][order]))
        tools.append(ToolSeries(int(k), obs, tuple(bool(v) for v in rev[sel][order])))
    return PopulationDataset(tuple(tools), step_km=step_km)


def to_csv_string(dataset: PopulationDataset) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for t in dataset.tools:
        for o, r in zip(t.observations, t.revealed):
            w.writerow([t.tool_id, repr(float(o.x)), repr(float(o.y)), int(r)])
    return buf.getvalue()


def write_csv(dataset: PopulationDataset, path: str | Path) -> None:
    Path(path).write_text(to_csv_string(dataset), encoding="utf-8")


def parse_csv(text: str, step_km: float | None = None) -> PopulationDataset:
    """Parse the dataset CSV format. Errors name the offending line.

    When ``step_km`` is not given it is inferred as the smallest positive
    spacing between successive measurements.
    """
    reader = csv.reader(io.StringIO(text))
    rows = list(reader)
    if not rows or tuple(h.strip() for h in rows[0]) != CSV_HEADER:
        raise DatasetError(f"header must be {','.join(CSV_HEADER)}", line=1)
    ids, xs, ys, rev = [], [], [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 4:
            raise DatasetError(f"expected 4 fields, got {len(row)}", line=lineno)
        try:
            k = int(row[0])
            xv = float(row[1])
            yv = float(row[2])
            r = int(row[3])
        except ValueError as exc:
            raise DatasetError(f"unparseable row {row!r} ({exc})", line=lineno) from None
        if r not in (0, 1):
            raise DatasetError(f"revealed must be 0 or 1, got {r}", line=lineno)
        if not (math.isfinite(xv) and xv >= 0 and math.isfinite(yv)):
            raise DatasetError(f"non-finite or negative value in row {row!r}", line=lineno)
        ids.append(k)
        xs.append(xv)
        ys.append(yv)
        rev.append(bool(r))
    if not ids:
        raise DatasetError("no observations")
    if step_km is None:
        gaps = []
        for k in set(ids):
            xk = np.sort([x for i, x in zip(ids, xs) if i == k])
            gaps.extend(np.diff(xk)[np.diff(xk) > 0])
        step_km = float(min(gaps)) if gaps else 6.02
    try:
        return from_arrays(ids, xs, ys, rev, step_km=step_km)
    except DatasetError as exc:
        raise DatasetError(str(exc)) from None


def read_csv(path: str | Path, step_km: float | None = None) -> PopulationDataset:
    return parse_csv(Path(path).read_text(encoding="utf-8"), step_km=step_km)
