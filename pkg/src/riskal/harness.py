"""End-to-end experiments: synthetic populations, the online inspection
policies, the full-information oracle and cost comparison."""

from __future__ import annotations

import csv
import io
import logging
import math
import time
import zlib
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from . import decision as dec
from .data import Observation, PopulationDataset, ToolSeries
from .decision import ActionKind, CostLedger, DecisionParams, Event
from .model import (Likelihood, Pooling, build_model, default_priors, priors_from_dict,
                    priors_to_dict)
from .predict import (ExceedanceMode, exceedance_probability, failure_time, forecast,
                      prob_failure_before, total_mse)
from .sampler import PosteriorSamples, SamplerConfig, SamplerError, sample

log = logging.getLogger(__name__)

RESULT_SCHEMA_VERSION = 1


class ScenarioError(ValueError):
    pass


class SimulationError(RuntimeError):
    """Failure inside a policy run, tagged with where it happened."""

    def __init__(self, message: str, policy: str, tool_id: int | None = None, step: int | None = None):
        super().__init__(f"{policy} policy, tool {tool_id}, step {step}: {message}")
        self.policy = policy
        self.tool_id = tool_id
        self.step = step


def substream_seed(seed: int, name: str) -> int:
    """Independent 63-bit seed for a named component, derived from one root seed."""
    ss = np.random.SeedSequence([int(seed), zlib.crc32(name.encode())])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def _from_dict(cls, doc: Mapping, where: str):
    known = {f.name for f in fields(cls)}
    unknown = set(doc) - known
    if unknown:
        raise ScenarioError(f"{where}: unknown field(s) {sorted(unknown)}")
    return cls(**doc)


# ---------------------------------------------------------------------------
# synthetic data


@dataclass(frozen=True)
class SyntheticConfig:
    n_tools: int = 7
    n_steps: int = 12
    step_km: float = 6.02
    true_mu_m: float = 0.009
    true_sigma_m: float = 0.001
    true_mu_c: float = 0.45
    true_sigma_c: float = 0.1
    noise_gamma: float = 0.01
    noise_bound: float = 5.0
    seed: int = 0

    def __post_init__(self):
        for name in ("n_tools", "n_steps"):
            if not int(getattr(self, name)) >= 1:
                raise ScenarioError(f"synthetic.{name} must be >= 1")
        for name in ("step_km", "noise_bound"):
            if not getattr(self, name) > 0:
                raise ScenarioError(f"synthetic.{name} must be > 0")
        for name in ("true_sigma_m", "true_sigma_c", "noise_gamma"):
            if not getattr(self, name) >= 0:
                raise ScenarioError(f"synthetic.{name} must be >= 0")

    @classmethod
    def from_dict(cls, doc: Mapping) -> "SyntheticConfig":
        return _from_dict(cls, doc, "synthetic")

    def to_dict(self) -> dict:
        return asdict(self)


def _truncated_cauchy(rng: np.random.Generator, scale: float, bound: float, size: int) -> np.ndarray:
    if scale == 0:
        return np.zeros(size)
    lo = 0.5 + math.atan(-bound / scale) / math.pi
    hi = 0.5 + math.atan(bound / scale) / math.pi
    u = rng.uniform(lo, hi, size)
    return scale * np.tan(math.pi * (u - 0.5))


def generate_synthetic(config: SyntheticConfig) -> PopulationDataset:
    """Straight-line degradation with truncated Cauchy measurement noise.

    Tool ``k`` (ids 1..K) is measured at ``t * step_km`` for t = 1..n_steps.
    """
    rng = np.random.default_rng([int(config.seed), 0x5EED])
    x = config.step_km * np.arange(1, config.n_steps + 1)
    tools, truth = [], {}
    for k in range(1, config.n_tools + 1):
        for _ in range(100):
            m = rng.normal(config.true_mu_m, config.true_sigma_m)
            if m > 0:
                break
        else:
            raise ScenarioError(f"tool {k}: no positive slope after 100 draws")
        c = rng.normal(config.true_mu_c, config.true_sigma_c)
        noise = _truncated_cauchy(rng, config.noise_gamma, config.noise_bound, config.n_steps)
        y = m * x + c + noise
        obs = tuple(Observation(float(a), float(b)) for a, b in zip(x, y))
        tools.append(ToolSeries(k, obs, (True,) * config.n_steps))
        truth[k] = {"m": float(m), "c": float(c)}
    return PopulationDataset(tuple(tools), step_km=config.step_km, truth=truth)


# ---------------------------------------------------------------------------
# scenario


@dataclass(frozen=True)
class ScenarioConfig:
    historic_tools: tuple[int, ...] | None = None  # default: first four tools
    active_tools: tuple[int, ...] | None = None  # default: all remaining tools
    initial_revealed: int = 2
    periodic_period: int = 1
    exceedance_mode: ExceedanceMode = ExceedanceMode.LATENT
    pooling: Pooling = Pooling.PARTIAL
    likelihood: Likelihood = Likelihood.CAUCHY
    priors: object = None
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    decision: DecisionParams = field(default_factory=DecisionParams)
    all_labels_visible: bool = False  # diagnostic: online policies see every label

    def __post_init__(self):
        for name in ("historic_tools", "active_tools"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, tuple(int(t) for t in v))
        object.__setattr__(self, "exceedance_mode", ExceedanceMode(self.exceedance_mode))
        object.__setattr__(self, "pooling", Pooling(self.pooling))
        object.__setattr__(self, "likelihood", Likelihood(self.likelihood))
        if self.priors is None:
            object.__setattr__(self, "priors", default_priors(self.likelihood))
        elif isinstance(self.priors, Mapping):
            object.__setattr__(self, "priors", priors_from_dict(self.likelihood, self.priors))
        if isinstance(self.sampler, Mapping):
            object.__setattr__(self, "sampler", SamplerConfig.from_dict(self.sampler))
        if isinstance(self.decision, Mapping):
            object.__setattr__(self, "decision", DecisionParams.from_dict(self.decision))
        if self.initial_revealed < 0:
            raise ScenarioError("scenario.initial_revealed must be >= 0")
        if self.periodic_period < 1:
            raise ScenarioError("scenario.periodic_period must be >= 1")
        if self.historic_tools and self.active_tools and set(self.historic_tools) & set(self.active_tools):
            raise ScenarioError("scenario: historic and active tools overlap")

    def resolve(self, dataset: PopulationDataset) -> tuple[tuple[int, ...], tuple[int, ...]]:
        ids = dataset.tool_ids
        historic = self.historic_tools if self.historic_tools is not None else ids[:4]
        active = (self.active_tools if self.active_tools is not None
                  else tuple(k for k in ids if k not in historic))
        for k in (*historic, *active):
            if k not in ids:
                raise ScenarioError(f"scenario names unknown tool {k}")
        if set(historic) & set(active):
            raise ScenarioError("scenario: historic and active tools overlap")
        if len(historic) < 4:
            log.warning("only %d historic tools; population estimates may be unreliable", len(historic))
        return tuple(historic), tuple(active)

    def initial_masks(self, dataset: PopulationDataset) -> dict[int, list[bool]]:
        historic, active = self.resolve(dataset)
        masks = {}
        for t in dataset.tools:
            n = len(t)
            if self.all_labels_visible or t.tool_id in historic:
                masks[t.tool_id] = [True] * n
            elif t.tool_id in active:
                masks[t.tool_id] = [i < self.initial_revealed for i in range(n)]
            else:
                masks[t.tool_id] = [False] * n
        return masks

    @classmethod
    def from_dict(cls, doc: Mapping) -> "ScenarioConfig":
        return _from_dict(cls, doc, "scenario")

    def to_dict(self) -> dict:
        return {
            "historic_tools": None if self.historic_tools is None else list(self.historic_tools),
            "active_tools": None if self.active_tools is None else list(self.active_tools),
            "initial_revealed": self.initial_revealed,
            "periodic_period": self.periodic_period,
            "exceedance_mode": self.exceedance_mode.value,
            "pooling": self.pooling.value,
            "likelihood": self.likelihood.value,
            "priors": priors_to_dict(self.priors),
            "sampler": self.sampler.to_dict(),
            "decision": self.decision.to_dict(),
            "all_labels_visible": self.all_labels_visible,
        }


# ---------------------------------------------------------------------------
# posterior fitting with memoization on the revealed-label pattern


def _mask_key(masks: Mapping[int, Sequence[bool]]):
    return tuple((k, tuple(bool(v) for v in masks[k])) for k in sorted(masks))


class Fitter:
    """Fits the scenario's model to a dataset under a given label mask.

    Inference is a deterministic function of (data, mask, sampler seed), so
    results are cached by mask.
    """

    def __init__(self, dataset: PopulationDataset, scenario: ScenarioConfig,
                 pooling: Pooling | None = None):
        self.dataset = dataset
        self.scenario = scenario
        self.pooling = Pooling(pooling or scenario.pooling)
        self._cache: dict = {}
        self.n_fits = 0
        self.last_diagnostics = None

    def __call__(self, masks: Mapping[int, Sequence[bool]]) -> PosteriorSamples:
        key = _mask_key(masks)
        if key not in self._cache:
            spec = build_model(self.pooling, self.scenario.likelihood, self.scenario.priors,
                               self.dataset.with_masks(masks))
            samples, self.last_diagnostics = sample(spec, self.scenario.sampler)
            self.n_fits += 1
            self._cache[key] = samples
        return self._cache[key]


# ---------------------------------------------------------------------------
# results


@dataclass(frozen=True)
class TimelineEntry:
    tool_id: int
    step: int
    action: ActionKind
    p_exceed: float | None = None
    eu_do_nothing: float | None = None
    eu_inspect: float | None = None
    p_fail: float | None = None
    note: str = ""

    def to_dict(self) -> dict:
        d = asdict(self)
        d["action"] = self.action.value
        return d

    @classmethod
    def from_dict(cls, doc: Mapping) -> "TimelineEntry":
        return cls(**{**doc, "action": ActionKind(doc["action"])})


@dataclass(frozen=True)
class SimulationResult:
    policy: str
    timeline: tuple[TimelineEntry, ...]
    replacement_step: Mapping[int, int]
    end_of_life: Mapping[int, bool]
    ledger: CostLedger | None = None
    refits: tuple[dict, ...] = ()
    exceedance_mode: str = "latent"
    optimal_step: Mapping[int, int] | None = None
    decision: DecisionParams | None = None

    @property
    def inspections(self) -> int:
        return sum(e.action is ActionKind.INSPECT for e in self.timeline)

    def events(self) -> list[Event]:
        return [Event(e.tool_id, e.step, e.action) for e in self.timeline
                if e.action is not ActionKind.DO_NOTHING]

    def settle(self, oracle: Mapping[int, int], params: DecisionParams) -> "SimulationResult":
        opt = {k: oracle[k] for k in self.replacement_step}
        return replace(self, ledger=dec.settle_ledger(self.events(), opt, params),
                       optimal_step=opt, decision=params)

    def recount(self) -> CostLedger:
        """Ledger rebuilt from the timeline alone."""
        if self.optimal_step is None or self.decision is None:
            raise ScenarioError(f"{self.policy} result has not been settled against an oracle")
        return dec.settle_ledger(self.events(), self.optimal_step, self.decision)

    def to_dict(self) -> dict:
        return {
            "schema_version": RESULT_SCHEMA_VERSION,
            "policy": self.policy,
            "exceedance_mode": self.exceedance_mode,
            "replacement_step": {str(k): v for k, v in self.replacement_step.items()},
            "end_of_life": {str(k): v for k, v in self.end_of_life.items()},
            "inspections": self.inspections,
            "ledger": None if self.ledger is None else self.ledger.to_dict(),
            "optimal_step": (None if self.optimal_step is None
                             else {str(k): v for k, v in self.optimal_step.items()}),
            "decision": None if self.decision is None else self.decision.to_dict(),
            "timeline": [e.to_dict() for e in self.timeline],
            "refits": list(self.refits),
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "SimulationResult":
        if doc.get("schema_version") != RESULT_SCHEMA_VERSION:
            raise ScenarioError(f"result schema version {doc.get('schema_version')!r} is not "
                                f"supported (expected {RESULT_SCHEMA_VERSION})")
        ledger = None
        if doc.get("ledger") is not None:
            ld = doc["ledger"]
            ledger = CostLedger(ld["inspections"], ld["inspection_cost"], ld["wasted_life_cost"],
                                ld["damage_cost"])
        return cls(doc["policy"], tuple(TimelineEntry.from_dict(e) for e in doc["timeline"]),
                   {int(k): v for k, v in doc["replacement_step"].items()},
                   {int(k): v for k, v in doc["end_of_life"].items()},
                   ledger, tuple(doc.get("refits", ())), doc.get("exceedance_mode", "latent"),
                   None if doc.get("optimal_step") is None
                   else {int(k): v for k, v in doc["optimal_step"].items()},
                   None if doc.get("decision") is None else DecisionParams.from_dict(doc["decision"]))


# ---------------------------------------------------------------------------
# oracle and online policies


def _p_fail_next(post: PosteriorSamples, tool_id: int, x_next: float, params: DecisionParams) -> float:
    return prob_failure_before(failure_time(post, tool_id, params.s_crit), x_next)


def gold_standard_replacements(dataset: PopulationDataset, scenario: ScenarioConfig,
                               fitter: Fitter | None = None) -> dict[int, int]:
    """Earliest step whose failure probability before the next opportunity
    reaches the replacement threshold, using every label.

    Tools whose trigger never fires get their last step (end of life).
    """
    _, active = scenario.resolve(dataset)
    fitter = fitter or Fitter(dataset, scenario)
    post = fitter({t.tool_id: [True] * len(t) for t in dataset.tools})
    params = scenario.decision
    out = {}
    for k in active:
        series = dataset.tool(k)
        out[k] = len(series)
        for step, x in enumerate(series.x, start=1):
            if dec.replacement_triggered(_p_fail_next(post, k, x + dataset.step_km, params), params):
                out[k] = step
                break
    return out


def gold_standard_result(dataset: PopulationDataset, scenario: ScenarioConfig,
                         fitter: Fitter | None = None) -> SimulationResult:
    fitter = fitter or Fitter(dataset, scenario)
    post = fitter({t.tool_id: [True] * len(t) for t in dataset.tools})
    params = scenario.decision
    steps = gold_standard_replacements(dataset, scenario, fitter)
    timeline, eol = [], {}
    for k, s in steps.items():
        x_next = dataset.tool(k).x[s - 1] + dataset.step_km
        p_fail = _p_fail_next(post, k, x_next, params)
        eol[k] = not dec.replacement_triggered(p_fail, params)
        timeline.append(TimelineEntry(k, s, ActionKind.REPLACE, p_fail=p_fail,
                                      note="end_of_life" if eol[k] else "trigger"))
    return SimulationResult("gold_standard", tuple(timeline), steps, eol,
                            exceedance_mode=scenario.exceedance_mode.value)


PolicyRule = Callable[[int, int, float], ActionKind]
# stub predictor: (tool_id, step) -> probability used for both exceedance and failure
ProbabilityOverride = Callable[[int, int], float]


def _run_policy(name: str, rule: PolicyRule, dataset: PopulationDataset, scenario: ScenarioConfig,
                fitter: Fitter | None, stop_step: int | None,
                p_override: ProbabilityOverride | None = None) -> SimulationResult:
    _, active = scenario.resolve(dataset)
    fitter = fitter or Fitter(dataset, scenario)
    params = scenario.decision
    timeline: list[TimelineEntry] = []
    repl, eol, refits = {}, {}, []
    base_masks = scenario.initial_masks(dataset)
    first = 1 if scenario.all_labels_visible else scenario.initial_revealed + 1

    for k in active:
        # each active tool is its own episode; others keep their initial labels
        masks = {t: list(v) for t, v in base_masks.items()}
        series = dataset.tool(k)
        n = len(series)
        replaced = False

        def posterior(step):
            try:
                return fitter(masks)
            except SamplerError as exc:
                raise SimulationError(str(exc), name, k, step) from exc

        def probs(post, step, x_next):
            if p_override is not None:
                p = float(p_override(k, step))
                return p, p
            p_fail = _p_fail_next(post, k, x_next, params)
            p = exceedance_probability(post, k, x_next, params.s_crit, scenario.exceedance_mode,
                                       seed=scenario.sampler.seed).probability
            return p, p_fail

        for step in range(first, n + 1):
            if stop_step is not None and step > stop_step:
                break
            x_next = series.x[step - 1] + dataset.step_km
            post = None if p_override is not None else posterior(step)
            p, p_fail = probs(post, step, x_next)
            action = rule(k, step, p)
            timeline.append(TimelineEntry(k, step, action, p, dec.eu_do_nothing(p, params),
                                          dec.eu_inspect(p, params), p_fail))
            note = "trigger"
            if action is ActionKind.INSPECT:
                masks[k][step - 1] = True
                refit = {"tool_id": k, "step": step, "n_revealed": int(sum(map(sum, masks.values())))}
                if p_override is None:
                    post = posterior(step)
                    m, c, _ = post.tool_draws(k)
                    refit.update(m_mean=float(m.mean()), m_sd=float(m.std()),
                                 c_mean=float(c.mean()), c_sd=float(c.std()))
                refits.append(refit)
                _, p_fail = probs(post, step, x_next)
                note = "after_inspection"
            if dec.replacement_triggered(p_fail, params):
                timeline.append(TimelineEntry(k, step, ActionKind.REPLACE, p_fail=p_fail, note=note))
                repl[k], eol[k], replaced = step, False, True
                break
        if not replaced and (stop_step is None or stop_step >= n):
            timeline.append(TimelineEntry(k, n, ActionKind.REPLACE, note="end_of_life"))
            repl[k], eol[k] = n, True
    return SimulationResult(name, tuple(timeline), repl, eol, refits=tuple(refits),
                            exceedance_mode=scenario.exceedance_mode.value)


def run_risk_based(dataset: PopulationDataset, scenario: ScenarioConfig, fitter: Fitter | None = None,
                   stop_step: int | None = None,
                   p_override: ProbabilityOverride | None = None) -> SimulationResult:
    """Inspect only when inspecting has lower expected cost than waiting.

    ``stop_step`` truncates every episode after that step (replays a decision
    prefix); ``p_override`` replaces the model's probabilities.
    """
    params = scenario.decision
    return _run_policy("risk_based", lambda k, step, p: dec.choose_action(p, params),
                       dataset, scenario, fitter, stop_step, p_override)


def run_periodic(dataset: PopulationDataset, scenario: ScenarioConfig, fitter: Fitter | None = None,
                 stop_step: int | None = None,
                 p_override: ProbabilityOverride | None = None) -> SimulationResult:
    """Inspect every ``periodic_period`` steps regardless of risk."""
    first = 1 if scenario.all_labels_visible else scenario.initial_revealed + 1
    period = scenario.periodic_period

    def rule(k, step, p):
        return ActionKind.INSPECT if (step - first + 1) % period == 0 else ActionKind.DO_NOTHING

    return _run_policy("periodic", rule, dataset, scenario, fitter, stop_step, p_override)


# ---------------------------------------------------------------------------
# comparison


@dataclass(frozen=True)
class PolicyRow:
    policy: str
    inspections: int
    optimal: Mapping[int, int]
    actual: Mapping[int, int]
    ledger: CostLedger
    reduction: float | None

    @property
    def discrepancy(self) -> dict[int, int]:
        return {k: self.actual[k] - self.optimal[k] for k in self.actual}


@dataclass(frozen=True)
class ComparisonReport:
    rows: tuple[PolicyRow, ...]

    def to_csv_string(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["policy", "tool_id", "optimal_step", "actual_step", "discrepancy", "inspections",
                    "inspection_cost", "wasted_life_cost", "damage_cost", "total",
                    "reduction_vs_first_pct"])
        for r in self.rows:
            red = "" if r.reduction is None else repr(100.0 * r.reduction)
            for k in sorted(r.actual):
                w.writerow([r.policy, k, r.optimal[k], r.actual[k], r.discrepancy[k], "", "", "", "", "", ""])
            w.writerow([r.policy, "all", "", "", sum(r.discrepancy.values()), r.inspections,
                        repr(r.ledger.inspection_cost), repr(r.ledger.wasted_life_cost),
                        repr(r.ledger.damage_cost), repr(r.ledger.total), red])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {"rows": [{"policy": r.policy, "inspections": r.inspections,
                          "optimal": {str(k): v for k, v in r.optimal.items()},
                          "actual": {str(k): v for k, v in r.actual.items()},
                          "discrepancy": {str(k): v for k, v in r.discrepancy.items()},
                          "ledger": r.ledger.to_dict(), "reduction": r.reduction} for r in self.rows]}


def compare(results: Sequence[SimulationResult], oracle: Mapping[int, int],
            params: DecisionParams) -> ComparisonReport:
    """Settle every policy against the oracle; reductions are relative to the first."""
    if len(results) < 1:
        raise ScenarioError("nothing to compare")
    tools = set(results[0].replacement_step)
    for r in results[1:]:
        if set(r.replacement_step) != tools:
            raise ScenarioError("results cover different tools; were they run on the same dataset?")
    if not tools <= set(oracle):
        raise ScenarioError("oracle does not cover every simulated tool")
    settled = [r.settle(oracle, params) for r in results]
    base = settled[0].ledger.total
    rows = []
    for i, r in enumerate(settled):
        red = None if len(settled) < 2 else dec.cost_reduction(base, r.ledger.total)
        rows.append(PolicyRow(r.policy, r.inspections, {k: oracle[k] for k in r.replacement_step},
                              dict(r.replacement_step), r.ledger, red))
    return ComparisonReport(tuple(rows))


# ---------------------------------------------------------------------------
# replication study


@dataclass
class ReplicationOutcome:
    seed: int
    shrinkage_sd: dict[int, tuple[float, float]]  # tool -> (partial sd, none sd)
    mse: dict[str, float]  # pooling -> total held-out MSE
    oracle: dict[int, int]
    results: dict[str, SimulationResult]
    n_fits: int = 0
    seconds: dict[str, float] = field(default_factory=dict)


def heldout_masks(dataset: PopulationDataset, scenario: ScenarioConfig) -> dict[int, np.ndarray]:
    masks = scenario.initial_masks(dataset)
    _, active = scenario.resolve(dataset)
    return {k: ~np.asarray(masks[k], dtype=bool) for k in active}


def replication_inputs(seed: int, synthetic: SyntheticConfig,
                       scenario: ScenarioConfig) -> tuple[PopulationDataset, ScenarioConfig]:
    """Dataset and scenario for replication ``seed``, both derived from sub-streams of it."""
    data = generate_synthetic(replace(synthetic, seed=substream_seed(seed, "generator")))
    scenario = replace(scenario, sampler=replace(scenario.sampler, seed=substream_seed(seed, "sampler")))
    return data, scenario


def run_replication(seed: int, synthetic: SyntheticConfig, scenario: ScenarioConfig,
                    policies: Sequence[str] = ("periodic", "risk_based")) -> ReplicationOutcome:
    """One seeded synthetic population: shrinkage, held-out MSE per pooling, and policy costs."""
    data, scenario = replication_inputs(seed, synthetic, scenario)
    masks = scenario.initial_masks(data)
    held = heldout_masks(data, scenario)
    fitters = {p: Fitter(data, scenario, pooling=p) for p in Pooling}
    fitters[scenario.pooling] = Fitter(data, scenario)
    seconds = {}

    t0 = time.perf_counter()
    posts = {p: fitters[p](masks) for p in (Pooling.PARTIAL, Pooling.NONE)}
    shrink = {}
    for k, h in held.items():
        x_hidden = data.tool(k).x[h]
        sds = [float(np.mean(forecast(posts[p], k, x_hidden).latent_draws.std(axis=0)))
               for p in (Pooling.PARTIAL, Pooling.NONE)]
        shrink[k] = (sds[0], sds[1])
    seconds["shrinkage"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    posts[Pooling.COMPLETE] = fitters[Pooling.COMPLETE](masks)
    mse = {p.value: total_mse(posts[p], data, held).total for p in Pooling}
    seconds["mse"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    main = fitters[scenario.pooling]
    oracle = gold_standard_replacements(data, scenario, main)
    runners = {"risk_based": run_risk_based, "periodic": run_periodic}
    results = {name: runners[name](data, scenario, main).settle(oracle, scenario.decision)
               for name in policies}
    seconds["policies"] = time.perf_counter() - t0
    return ReplicationOutcome(seed, shrink, mse, oracle, results,
                              sum(f.n_fits for f in fitters.values()), seconds)


# ---------------------------------------------------------------------------
# experiment document

POLICY_NAMES = {"risk": "risk_based", "risk_based": "risk_based", "periodic": "periodic"}


def _scenario_section(doc: Mapping) -> dict:
    out = dict(doc)
    for name in ("sampler", "decision"):
        if name in out:
            raise ScenarioError(f"scenario.{name}: put '{name}' at the top level of the config")
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    """One JSON document describing a complete run.

    The root ``seed`` fans out to the generator and the sampler through named
    sub-streams, so the sections themselves carry no seeds.
    """

    seed: int = 0
    dataset: str | None = None
    synthetic: SyntheticConfig = field(default_factory=SyntheticConfig)
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    policies: tuple[str, ...] = ("risk_based", "periodic")

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise ScenarioError("seed must be an unsigned 64-bit integer")
        pols = tuple(POLICY_NAMES.get(p, p) for p in self.policies)
        bad = [p for p in pols if p not in ("risk_based", "periodic")]
        if bad:
            raise ScenarioError(f"policies: unknown policy {bad[0]!r} (use risk, periodic)")
        if len(set(pols)) != len(pols):
            raise ScenarioError("policies: duplicate entries")
        object.__setattr__(self, "policies", pols)

    @classmethod
    def from_dict(cls, doc: Mapping) -> "ExperimentConfig":
        if not isinstance(doc, Mapping):
            raise ScenarioError("config must be a JSON object")
        known = {"seed", "dataset", "synthetic", "scenario", "sampler", "decision", "policies"}
        unknown = set(doc) - known
        if unknown:
            raise ScenarioError(f"config: unknown field(s) {sorted(unknown)}")
        syn = dict(doc.get("synthetic") or {})
        if "seed" in syn:
            raise ScenarioError("synthetic.seed: set the top-level seed instead")
        samp = dict(doc.get("sampler") or {})
        if "seed" in samp:
            raise ScenarioError("sampler.seed: set the top-level seed instead")
        try:
            synthetic = SyntheticConfig.from_dict(syn)
            scen = _scenario_section(doc.get("scenario") or {})
            scenario = ScenarioConfig.from_dict({**scen, "sampler": SamplerConfig.from_dict(samp),
                                                 "decision": dict(doc.get("decision") or {})})
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ScenarioError):
                raise
            raise ScenarioError(str(exc)) from exc
        policies = doc.get("policies", cls.policies)
        if isinstance(policies, str):
            policies = tuple(p.strip() for p in policies.split(",") if p.strip())
        return cls(int(doc.get("seed", 0)), doc.get("dataset"), synthetic, scenario, tuple(policies))

    def to_dict(self) -> dict:
        scen = self.scenario.to_dict()
        sampler = scen.pop("sampler")
        sampler.pop("seed", None)
        decision = scen.pop("decision")
        syn = self.synthetic.to_dict()
        syn.pop("seed")
        return {"seed": int(self.seed), "dataset": self.dataset, "synthetic": syn, "scenario": scen,
                "sampler": sampler, "decision": decision, "policies": list(self.policies)}

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return replace(self, seed=int(seed))

    def seeded_synthetic(self) -> SyntheticConfig:
        return replace(self.synthetic, seed=substream_seed(self.seed, "generator"))

    def seeded_scenario(self) -> ScenarioConfig:
        s = self.scenario
        return replace(s, sampler=replace(s.sampler, seed=substream_seed(self.seed, "sampler")))
