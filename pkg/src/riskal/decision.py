"""Expected-cost arithmetic for the do-nothing / inspect / replace decision.

All quantities are nonnegative costs and decisions minimize expected cost,
which is the same as maximizing expected utility with negated utilities.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import asdict, dataclass, fields
from enum import Enum
from typing import Iterable, Mapping, NamedTuple

# relative slack under which two expected costs count as tied
_TIE_RTOL = 1e-12


class ActionKind(str, Enum):
    DO_NOTHING = "do_nothing"
    INSPECT = "inspect"
    REPLACE = "replace"


@dataclass(frozen=True)
class DecisionParams:
    s_crit: float = 0.9
    c_inspection: float = 0.05
    c_tool: float = 0.25
    c_workpiece: float = 1.0
    wasted_life_formula: str = "discrepancy"  # or "ratio"

    def __post_init__(self):
        for name in ("c_inspection", "c_tool", "c_workpiece"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"DecisionParams.{name} must be finite and >= 0, got {v}")
        if not self.c_workpiece > 0:
            raise ValueError("DecisionParams.c_workpiece must be > 0")
        if not math.isfinite(self.s_crit):
            raise ValueError("DecisionParams.s_crit must be finite")
        if self.wasted_life_formula not in ("discrepancy", "ratio"):
            raise ValueError("DecisionParams.wasted_life_formula must be 'discrepancy' or 'ratio'")

    @property
    def alpha(self) -> float:
        return self.c_tool / self.c_workpiece

    def scaled(self, factor: float) -> "DecisionParams":
        return DecisionParams(self.s_crit, self.c_inspection * factor, self.c_tool * factor,
                              self.c_workpiece * factor, self.wasted_life_formula)

    @classmethod
    def from_dict(cls, doc: Mapping) -> "DecisionParams":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown decision field(s): {sorted(unknown)}")
        return cls(**doc)

    def to_dict(self) -> dict:
        return asdict(self)


def _check_p(p: float) -> None:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability must lie in [0, 1], got {p}")


def eu_do_nothing(p_exceed_next: float, params: DecisionParams) -> float:
    _check_p(p_exceed_next)
    return p_exceed_next * params.c_workpiece


def eu_inspect(p_exceed_next: float, params: DecisionParams) -> float:
    _check_p(p_exceed_next)
    return params.c_tool * p_exceed_next + params.c_inspection


def action_crossover(params: DecisionParams) -> float:
    """Probability above which inspecting is cheaper than doing nothing."""
    slope = params.c_workpiece - params.c_tool
    return params.c_inspection / slope if slope > 0 else math.inf


def choose_action(p_exceed_next: float, params: DecisionParams) -> ActionKind:
    """Cheaper of doing nothing and inspecting; ties go to doing nothing."""
    idle = eu_do_nothing(p_exceed_next, params)
    look = eu_inspect(p_exceed_next, params)
    if idle - look > _TIE_RTOL * max(idle, look, 1e-300):
        return ActionKind.INSPECT
    return ActionKind.DO_NOTHING


def replacement_triggered(p_fail_before: float, params: DecisionParams) -> bool:
    _check_p(p_fail_before)
    return p_fail_before >= params.alpha


def wasted_life_cost(t_replacement: float, t_optimal: float, params: DecisionParams) -> float:
    if not t_optimal > 0:
        raise ValueError("t_optimal must be > 0")
    if not 0 < t_replacement <= t_optimal:
        raise ValueError("wasted life needs 0 < t_replacement <= t_optimal")
    if params.wasted_life_formula == "ratio":
        return t_replacement / t_optimal * params.c_tool
    return params.c_tool * (t_optimal - t_replacement) / t_optimal


def late_replacement_cost(t_replacement: float, t_optimal: float, params: DecisionParams) -> float:
    if not (t_replacement > 0 and t_optimal > 0):
        raise ValueError("replacement times must be positive")
    return params.c_workpiece if t_replacement > t_optimal else 0.0


class Event(NamedTuple):
    tool_id: int
    step: int
    action: ActionKind


@dataclass(frozen=True)
class CostLedger:
    inspections: int = 0
    inspection_cost: float = 0.0
    wasted_life_cost: float = 0.0
    damage_cost: float = 0.0

    @property
    def total(self) -> float:
        return self.inspection_cost + self.wasted_life_cost + self.damage_cost

    def __add__(self, other: "CostLedger") -> "CostLedger":
        return CostLedger(self.inspections + other.inspections,
                          self.inspection_cost + other.inspection_cost,
                          self.wasted_life_cost + other.wasted_life_cost,
                          self.damage_cost + other.damage_cost)

    def to_dict(self) -> dict:
        return {**asdict(self), "total": self.total}


def settle_ledger(events: Iterable[Event], t_optimal: Mapping[int, float],
                  params: DecisionParams) -> CostLedger:
    """Bill inspections and sub-optimal replacements for a set of tool episodes."""
    by_tool: dict[int, list[Event]] = defaultdict(list)
    for ev in events:
        by_tool[ev.tool_id].append(Event(ev.tool_id, ev.step, ActionKind(ev.action)))
    missing = set(t_optimal) - set(by_tool)
    if missing:
        raise ValueError(f"no events for tool(s) {sorted(missing)}")
    n_insp = 0
    wasted = 0.0
    damage = 0.0
    for tool_id, evs in by_tool.items():
        repl = [e for e in evs if e.action is ActionKind.REPLACE]
        if len(repl) != 1:
            raise ValueError(f"tool {tool_id}: expected exactly one replacement event, got {len(repl)}")
        if tool_id not in t_optimal:
            raise ValueError(f"tool {tool_id}: no optimal replacement time")
        n_insp += sum(e.action is ActionKind.INSPECT for e in evs)
        t_r, t_o = repl[0].step, t_optimal[tool_id]
        if t_r < t_o:
            wasted += wasted_life_cost(t_r, t_o, params)
        elif params.wasted_life_formula == "ratio" and t_r == t_o:
            wasted += wasted_life_cost(t_r, t_o, params)
        damage += late_replacement_cost(t_r, t_o, params)
    return CostLedger(n_insp, n_insp * params.c_inspection, wasted, damage)


def cost_reduction(baseline_total: float, other_total: float) -> float:
    """Fractional saving of ``other`` relative to ``baseline``."""
    if baseline_total == 0:
        return 0.0 if other_total == 0 else -math.inf
    return (baseline_total - other_total) / baseline_total
