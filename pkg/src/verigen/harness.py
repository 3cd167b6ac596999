"""Experiment configs, metric rows and their CSV / JSON-lines serialization."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from . import montecarlo as mc
from .models import (
    ContinuousRewardModel,
    ContinuousVerifier,
    DiscreteGenerator,
    DiscreteVerifier,
    DomainError,
)
from .policies import PolicySpec, evaluate_policy

log = logging.getLogger(__name__)

EXPERIMENTS = ("analytic", "simulate", "bandit", "sweep")
FORMATS = ("csv", "jsonl")
HEADER = ("experiment", "params", "metric", "value", "std_error", "trials")
MEASURE_METRIC = {"expected_reward": "expected_reward", "improvement_over_first_sample": "improvement"}


class ConfigError(ValueError):
    """Invalid experiment configuration; ``field`` names the offending key."""

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        super().__init__(f"field {field!r}: {message}" if field else message)


class SchemaError(ValueError):
    """Output files that cannot be compared row by row."""


# --------------------------------------------------------------------------
# rows
# --------------------------------------------------------------------------


def _format_param(v) -> str:
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return repr(v)
    return str(v)


def format_float(x: float) -> str:
    return "nan" if math.isnan(x) else format(x, ".17g")


@dataclass(frozen=True)
class MetricsRow:
    experiment: str
    params: dict = field(hash=False)
    metric: str
    value: float
    std_error: float
    trials: int

    @property
    def params_str(self) -> str:
        return ";".join(f"{k}={_format_param(self.params[k])}" for k in sorted(self.params))

    def sort_key(self):
        def key(v):
            return (0, float(v), "") if isinstance(v, (int, float)) and not isinstance(v, bool) else (1, 0.0, str(v))
        return (self.experiment, tuple((k, key(self.params[k])) for k in sorted(self.params)), self.metric)


def sort_rows(rows: list[MetricsRow]) -> list[MetricsRow]:
    return sorted(rows, key=MetricsRow.sort_key)


def render_rows(rows: list[MetricsRow], fmt: str) -> str:
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(HEADER)
        for r in rows:
            writer.writerow([r.experiment, r.params_str, r.metric, format_float(r.value),
                             format_float(r.std_error), r.trials])
        return buf.getvalue()
    lines = []
    for r in rows:
        num = lambda x: "null" if math.isnan(x) else format_float(x)  # noqa: E731
        lines.append("{" + ", ".join([
            f'"experiment": {json.dumps(r.experiment)}',
            f'"params": {json.dumps(r.params_str)}',
            f'"metric": {json.dumps(r.metric)}',
            f'"value": {num(r.value)}',
            f'"std_error": {num(r.std_error)}',
            f'"trials": {r.trials}',
        ]) + "}\n")
    return "".join(lines)


def _parse_params(s: str) -> dict:
    out = {}
    for part in filter(None, s.split(";")):
        k, _, v = part.partition("=")
        out[k] = v
    return out


def read_rows(path: str | Path) -> list[MetricsRow]:
    """Load rows written by :func:`render_rows` (CSV or JSON lines)."""
    text = Path(path).read_text(encoding="utf-8")
    rows = []
    if text.lstrip().startswith("{"):
        for n, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                rows.append(MetricsRow(obj["experiment"], _parse_params(obj["params"]), obj["metric"],
                                       float("nan") if obj["value"] is None else float(obj["value"]),
                                       float("nan") if obj["std_error"] is None else float(obj["std_error"]),
                                       int(obj["trials"])))
            except (ValueError, KeyError, TypeError) as exc:
                raise SchemaError(f"{path}:{n}: not a metrics row ({exc})") from None
        return rows
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if tuple(header or ()) != HEADER:
        raise SchemaError(f"{path}: header must be {','.join(HEADER)}")
    for n, rec in enumerate(reader, 2):
        if len(rec) != len(HEADER):
            raise SchemaError(f"{path}:{n}: expected {len(HEADER)} columns, got {len(rec)}")
        try:
            rows.append(MetricsRow(rec[0], _parse_params(rec[1]), rec[2], float(rec[3]), float(rec[4]), int(rec[5])))
        except ValueError as exc:
            raise SchemaError(f"{path}:{n}: {exc}") from None
    return rows


# --------------------------------------------------------------------------
# config
# --------------------------------------------------------------------------


@dataclass
class ExperimentConfig:
    experiment: str
    seed: int
    trials: int = 10000
    output_path: str | None = None
    format: str = "csv"
    generator: dict | None = None
    verifier: dict | None = None
    N: Any = 1
    measure: str | None = None
    axis: str | None = None
    values: list | None = None
    env: dict | None = None
    policies: list | None = None
    failure_steps: int | None = None
    quality_range: tuple[float, float] = (0.5, 1.0)

    @classmethod
    def from_dict(cls, data: dict, experiment: str | None = None) -> ExperimentConfig:
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        data = dict(data)
        exp = data.pop("experiment", experiment)
        if experiment is not None and exp != experiment:
            raise ConfigError(f"config is for {exp!r} but command is {experiment!r}", "experiment")
        if exp not in EXPERIMENTS:
            raise ConfigError(f"must be one of {EXPERIMENTS}", "experiment")
        if "episodes" in data:
            if "trials" in data:
                raise ConfigError("give either trials or episodes, not both", "episodes")
            data["trials"] = data.pop("episodes")
        if "policy" in data:
            if "policies" in data:
                raise ConfigError("give either policy or policies, not both", "policy")
            data["policies"] = [data.pop("policy")]
        known = {f for f in cls.__dataclass_fields__} - {"experiment"}
        for key in data:
            if key not in known:
                raise ConfigError("unknown field", key)
        if "seed" not in data:
            raise ConfigError("seed is required", "seed")
        cfg = cls(experiment=exp, **data)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise ConfigError("must be an integer in [0, 2**64)", "seed")
        if isinstance(self.trials, bool) or not isinstance(self.trials, int) or self.trials < 1:
            raise ConfigError("must be an integer >= 1", "trials")
        if self.format not in FORMATS:
            raise ConfigError(f"must be one of {FORMATS}", "format")
        if self.experiment == "bandit":
            self.env_kind()
            self.policy_specs()
            if self.failure_steps is not None and (not isinstance(self.failure_steps, int) or self.failure_steps < 1):
                raise ConfigError("must be an integer >= 1", "failure_steps")
        else:
            self.plans()

    # -- model configs ------------------------------------------------------

    def _generator(self):
        g = self.generator
        if not isinstance(g, dict) or "kind" not in g:
            raise ConfigError("must be an object with a 'kind'", "generator")
        g = dict(g)
        kind = g.pop("kind")
        try:
            if kind == "discrete":
                return DiscreteGenerator(**g)
            if kind == "normal":
                return ContinuousRewardModel.normal(**g)
            if kind == "gmm":
                return ContinuousRewardModel.gmm(**g)
            if kind == "uniform":
                return ContinuousRewardModel.uniform(**g)
        except (DomainError, TypeError) as exc:
            raise ConfigError(str(exc), "generator") from None
        raise ConfigError(f"unknown kind {kind!r}", "generator.kind")

    def _verifier(self):
        v = self.verifier
        if not isinstance(v, dict) or "kind" not in v:
            raise ConfigError("must be an object with a 'kind'", "verifier")
        v = dict(v)
        kind = v.pop("kind")
        builders = {
            "independent": DiscreteVerifier.independent,
            "dependent": DiscreteVerifier.dependent,
            "additive_noise": ContinuousVerifier.additive_noise,
            "pairwise": ContinuousVerifier.pairwise,
        }
        if kind not in builders:
            raise ConfigError(f"unknown kind {kind!r}", "verifier.kind")
        try:
            return builders[kind](**v)
        except (DomainError, TypeError) as exc:
            raise ConfigError(str(exc), "verifier") from None

    def axis_values(self) -> tuple[str | None, list]:
        if isinstance(self.N, list):
            if self.axis not in (None, "N"):
                raise ConfigError("N may only be a list when sweeping N", "N")
            return "N", list(self.N)
        if self.axis is None:
            if self.values is not None:
                raise ConfigError("values given without axis", "values")
            return None, []
        if self.axis not in mc.SWEEP_AXES:
            raise ConfigError(f"must be one of {mc.SWEEP_AXES}", "axis")
        if not isinstance(self.values, list) or not self.values:
            raise ConfigError("must be a non-empty list", "values")
        return self.axis, list(self.values)

    def base_plan(self) -> mc.TrialPlan:
        gen, ver = self._generator(), self._verifier()
        measure = self.measure
        if measure is None:
            measure = "expected_reward" if isinstance(gen, DiscreteGenerator) else "improvement_over_first_sample"
        if measure == "improvement":
            measure = "improvement_over_first_sample"
        N = 1 if isinstance(self.N, list) else self.N
        try:
            return mc.TrialPlan(N, gen, ver, trials=self.trials, seed=self.seed, measure=measure)
        except DomainError as exc:
            raise ConfigError(str(exc), "measure" if "measure" in str(exc) else "N") from None

    def plans(self) -> list[tuple[dict, mc.TrialPlan | None, str | None]]:
        """(axis params, plan or None, error) per point; a single point when not sweeping."""
        base = self.base_plan()
        axis, values = self.axis_values()
        if axis is None:
            return [({}, base, None)]
        out = []
        for v in values:
            try:
                out.append(({axis: v}, mc.with_axis(base, axis, v), None))
            except (DomainError, TypeError) as exc:
                if self.experiment != "sweep":
                    raise ConfigError(f"{axis}={v!r}: {exc}", "values") from None
                out.append(({axis: v}, None, str(exc)))
        return out

    # -- bandit configs -----------------------------------------------------

    def env_kind(self) -> str:
        if not isinstance(self.env, dict) or self.env.get("kind") not in ("door", "rod"):
            raise ConfigError("must be an object with kind 'door' or 'rod'", "env")
        params = {k: v for k, v in self.env.items() if k != "kind"}
        allowed = {"door": {"open_threshold", "max_steps"}, "rod": {"tolerance", "max_steps"}}[self.env["kind"]]
        for key in params:
            if key not in allowed:
                raise ConfigError("unknown environment parameter", f"env.{key}")
        return self.env["kind"]

    def env_params(self) -> dict:
        return {k: v for k, v in self.env.items() if k != "kind"}

    def policy_specs(self) -> list[PolicySpec]:
        if not isinstance(self.policies, list) or not self.policies:
            raise ConfigError("must be a non-empty list of policy objects", "policies")
        specs = []
        for i, p in enumerate(self.policies):
            if not isinstance(p, dict):
                raise ConfigError("must be an object", f"policies[{i}]")
            p = dict(p)
            if "lambda" in p:
                p["fidelity"] = p.pop("lambda")
            p.setdefault("quality_range", tuple(self.quality_range))
            p["quality_range"] = tuple(p["quality_range"])
            try:
                specs.append(PolicySpec(**p))
            except (DomainError, TypeError, ValueError) as exc:
                raise ConfigError(str(exc), f"policies[{i}]") from None
        return specs


def load_config(text: str, source: str = "<config>", experiment: str | None = None,
                overrides: dict | None = None) -> ExperimentConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if isinstance(data, dict):
        for key, value in (overrides or {}).items():
            if value is not None:
                if key == "trials":
                    data.pop("episodes", None)
                data[key] = value
    return ExperimentConfig.from_dict(data, experiment)


# --------------------------------------------------------------------------
# running
# --------------------------------------------------------------------------


def _model_params(plan: mc.TrialPlan) -> dict:
    gen, ver = plan.generator, plan.verifier
    params: dict = {"N": plan.N, "measure": MEASURE_METRIC[plan.measure]}
    if isinstance(gen, DiscreteGenerator):
        params.update(generator="discrete", p_G=gen.p_G)
    else:
        params["generator"] = gen.kind
        if gen.kind == "normal":
            params.update(mu_G=gen.mu_G, sigma_G=gen.sigma_G)
        elif gen.kind == "gmm":
            params["sigma_G"] = gen.sigma_G
        else:
            params.update(lo=gen.lo, hi=gen.hi)
    if isinstance(ver, DiscreteVerifier):
        if ver.kind == "independent":
            params.update(verifier="independent", p_V=ver.p_V1)
        else:
            params.update(verifier="dependent", p_V1=ver.p_V1, p_V0=ver.p_V0)
    elif ver.kind == "additive_noise":
        params.update(verifier="additive_noise", sigma_V=ver.sigma_V)
    else:
        params.update(verifier="pairwise", p_V=ver.p_V)
    return params


def _analytic_rows(cfg: ExperimentConfig, experiment: str, *, required: bool) -> list[MetricsRow]:
    rows = []
    for axis_params, plan, _ in cfg.plans():
        if plan is None:
            continue
        value = mc.analytic_value(plan)
        if value is None:
            if required:
                raise ConfigError("no closed form for this generator/verifier pair", "verifier")
            continue
        rows.append(MetricsRow(experiment, _model_params(plan), MEASURE_METRIC[plan.measure], value, 0.0, 0))
    return rows


def _simulate_rows(cfg: ExperimentConfig, experiment: str, workers) -> list[MetricsRow]:
    rows = []
    base = cfg.base_plan()
    for axis_params, plan, error in cfg.plans():
        if plan is None:
            log.warning("%s: %s skipped: %s", experiment, axis_params, error)
            params = {**_model_params(base), **axis_params}
            rows.append(MetricsRow(experiment, params, MEASURE_METRIC[base.measure], math.nan, math.nan, 0))
            continue
        log.info("%s: running %s", experiment, _model_params(plan))
        est = mc.run(plan, workers)
        rows.append(MetricsRow(experiment, _model_params(plan), MEASURE_METRIC[plan.measure],
                               est.mean, est.std_error, est.trials))
    return rows


def _policy_params(spec: PolicySpec, env_kind: str) -> dict:
    params: dict = {"policy": spec.kind}
    if env_kind == "door":
        params.update(quality_lo=spec.quality_range[0], quality_hi=spec.quality_range[1])
    if spec.kind not in ("naive_generator", "history_conditioned_generator"):
        params["N"] = spec.N
    if spec.kind == "history_conditioned_generator":
        params["fidelity"] = spec.fidelity
    if spec.verifier_accuracy is not None:
        params["verifier_accuracy"] = spec.verifier_accuracy
    return params


def _bandit_rows(cfg: ExperimentConfig, workers, trace_sink=None) -> list[MetricsRow]:
    kind = cfg.env_kind()
    env_params = cfg.env_params()
    rows = []
    for spec in cfg.policy_specs():
        log.info("bandit: %s on %s, %d episodes", spec.label, kind, cfg.trials)
        try:
            ev = evaluate_policy(kind, spec, cfg.trials, cfg.seed, env_params=env_params,
                                 workers=workers, trace=trace_sink is not None)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc), "env") from None
        budget = cfg.failure_steps or ev.max_steps
        params = {"env": kind, **env_params, "max_steps": ev.max_steps, "failure_steps": budget,
                  **_policy_params(spec, kind)}
        fr = ev.failure_rate(budget)
        rows.append(MetricsRow("bandit", params, "failure_rate", fr.mean, fr.std_error, fr.trials))
        if kind == "door":
            ms = ev.mean_steps()
            rows.append(MetricsRow("bandit", params, "mean_steps_to_open", ms.mean, ms.std_error, ms.trials))
        if trace_sink is not None:
            for i, res in enumerate(ev.results):
                for rec in res.trace:
                    trace_sink.write(json.dumps({"policy": spec.label, "episode": i, **rec}) + "\n")
    return rows


def run_experiment(cfg: ExperimentConfig, workers: int | None = None, trace_sink=None) -> list[MetricsRow]:
    """All metric rows for ``cfg``, in canonical order."""
    if cfg.experiment == "analytic":
        rows = _analytic_rows(cfg, "analytic", required=True)
    elif cfg.experiment == "simulate":
        rows = _simulate_rows(cfg, "simulate", workers)
    elif cfg.experiment == "sweep":
        if cfg.axis_values()[0] is None:
            raise ConfigError("sweep needs an axis and values (or a list for N)", "axis")
        rows = _simulate_rows(cfg, "sweep", workers) + _analytic_rows(cfg, "sweep:analytic", required=False)
    else:
        rows = _bandit_rows(cfg, workers, trace_sink)
    return sort_rows(rows)


# --------------------------------------------------------------------------
# comparing
# --------------------------------------------------------------------------

COMPARE_HEADER = ("file", "index", "metric", "params_base", "params_other", "value_base", "value_other",
                  "delta", "se_delta", "significant")


@dataclass(frozen=True)
class ComparedRow:
    file: str
    index: int
    metric: str
    base: MetricsRow
    other: MetricsRow

    @property
    def delta(self) -> float:
        return self.other.value - self.base.value

    @property
    def se_delta(self) -> float:
        return math.hypot(self.base.std_error, self.other.std_error)

    @property
    def significant(self) -> bool:
        """|delta| exceeds three standard errors (any nonzero delta when both are exact)."""
        if self.se_delta == 0.0:
            return self.delta != 0.0
        return abs(self.delta) > 3.0 * self.se_delta


def compare(paths: list[str | Path]) -> list[ComparedRow]:
    """Align every file row by row against the first one."""
    if len(paths) < 2:
        raise SchemaError("compare needs at least two files")
    base = read_rows(paths[0])
    out = []
    for path in paths[1:]:
        other = read_rows(path)
        if len(other) != len(base):
            raise SchemaError(f"{path}: {len(other)} rows, baseline has {len(base)}")
        for i, (a, b) in enumerate(zip(base, other)):
            if a.metric != b.metric:
                raise SchemaError(f"{path}: row {i} metric {b.metric!r} does not match {a.metric!r}")
            out.append(ComparedRow(str(path), i, a.metric, a, b))
    return out


def render_comparison(rows: list[ComparedRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COMPARE_HEADER)
    for r in rows:
        writer.writerow([r.file, r.index, r.metric, r.base.params_str, r.other.params_str,
                         format_float(r.base.value), format_float(r.other.value),
                         format_float(r.delta), format_float(r.se_delta), str(r.significant).lower()])
    return buf.getvalue()


__all__ = [
    "ConfigError", "SchemaError", "ExperimentConfig", "MetricsRow", "load_config", "run_experiment",
    "render_rows", "read_rows", "compare", "render_comparison", "ComparedRow",
]
