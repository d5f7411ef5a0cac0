"""Experiment specifications: strict JSON configs and the runner behind ``qbandit run``.

Grammar (schema ``qbandit.experiment/1``; every other key is an error)::

    {
      "schema": "qbandit.experiment/1",
      "name": "fig1",
      "instance": {"U": 1, "K": 5, "lambda": [0.55], "mu": [[0.65, 0.48, ...]]},
      "sweep": {"eps": [0.05, 0.1], "mu": [...] | "mu_by_K": {"5": [...], "7": [...]}},
      "policies": [{"policy": "qths", "explore_const": 3.0}, {"policy": "thompson"}],
      "horizon": 200000,
      "episodes": 2000,
      "seed": 1,
      "coupling": "common_uniform",        optional
      "same_slot_service": true,           optional
      "per_decade": 200,                   optional, checkpoints per decade
      "alpha": 0.5, "gamma": null,         optional, bound overlay parameters
      "output": "out/fig1"                 optional, default out/<name>
    }

Exactly one of ``instance`` and ``sweep`` is given.  A sweep builds one
single-queue instance per (mu row, eps) with ``lambda = mu* - eps``.
Relative ``output`` paths resolve against the working directory.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .bounds import bound_curves, write_bounds_csv
from .core import InstanceError, ProblemInstance, instance_from_dict, validate_instance
from .plotting import plot_regret, write_plot_script
from .policies import PolicyKind
from .sim import CouplingMode, RegretSeries, SimConfig, estimate_regret, write_series_csv, write_sidecar

SCHEMA = "qbandit.experiment/1"

_TOP = {"schema", "name", "instance", "sweep", "policies", "horizon", "episodes", "seed",
        "coupling", "same_slot_service", "per_decade", "alpha", "gamma", "output"}
_REQUIRED = {"schema", "name", "policies", "horizon", "episodes", "seed"}
_SWEEP = {"eps", "mu", "mu_by_K"}
_POLICY = {"policy", "explore_const"}


class ConfigError(ValueError):
    """Malformed experiment spec; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None, source: str = "<spec>"):
        self.line = line
        self.source = source
        where = f"{source}:{line}" if line is not None else source
        super().__init__(f"{where}: {message}")


class InstanceInvalid(ValueError):
    """A well-formed spec that names an invalid problem instance."""

    def __init__(self, message: str, line: int | None = None, source: str = "<spec>"):
        self.line = line
        where = f"{source}:{line}" if line is not None else source
        super().__init__(f"{where}: {message}")


def value_lines(text: str) -> dict[tuple, int]:
    """Map each JSON path (tuple of keys and indices) to the line its key or value starts on.

    A lightweight scan over already-valid JSON; used only for error messages.
    """
    lines: dict[tuple, int] = {(): 1}
    stack: list[list] = []   # [kind, path, current key or index, expecting_key]
    line = 1
    i, n = 0, len(text)

    def here() -> tuple:
        top = stack[-1]
        return top[1] + (top[2],)

    while i < n:
        ch = text[i]
        if ch == "\n":
            line += 1
        elif ch == '"':
            j = i + 1
            while text[j] != '"':
                j += 2 if text[j] == "\\" else 1
            if stack and stack[-1][0] == "obj" and stack[-1][3]:
                stack[-1][2] = json.loads(text[i:j + 1])
                stack[-1][3] = False
                lines.setdefault(here(), line)
            elif stack:
                lines.setdefault(here(), line)
            i = j
        elif ch in "{[":
            path = here() if stack else ()
            if stack:
                lines.setdefault(path, line)
            stack.append(["obj", path, None, True] if ch == "{" else ["arr", path, 0, False])
        elif ch in "}]":
            stack.pop()
        elif ch == ",":
            if stack[-1][0] == "obj":
                stack[-1][3] = True
            else:
                stack[-1][2] += 1
        elif not ch.isspace() and ch != ":" and stack:
            lines.setdefault(here(), line)
        i += 1
    return lines


@dataclass(frozen=True)
class InstanceCase:
    tag: str
    instance: ProblemInstance


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    cases: tuple[InstanceCase, ...]
    policies: tuple[PolicyKind, ...]
    horizon: int
    episodes: int
    seed: int
    coupling: CouplingMode = CouplingMode.COMMON_UNIFORM
    same_slot_service: bool = True
    per_decade: int = 200
    alpha: float = 0.5
    gamma: float | None = None
    output: Path = field(default=Path("out"))

    def configs(self):
        for case in self.cases:
            for pol in self.policies:
                yield case, pol, SimConfig(
                    instance=case.instance, policy=pol, horizon=self.horizon,
                    episodes=self.episodes, coupling=self.coupling, master_seed=self.seed,
                    per_decade=self.per_decade, same_slot_service=self.same_slot_service)


def _fmt_num(x: float) -> str:
    return f"{x:g}"


def parse_spec(text: str, source: str = "<spec>") -> ExperimentSpec:
    """Parse and validate a spec; raises ConfigError or InstanceInvalid."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg} (column {exc.colno})", exc.lineno, source) from None
    lines = value_lines(text)

    def err(msg: str, path: tuple = ()) -> ConfigError:
        while path not in lines and path:
            path = path[:-1]
        return ConfigError(msg, lines.get(path), source)

    def need(cond: bool, msg: str, path: tuple):
        if not cond:
            raise err(msg, path)

    def integer(path: tuple, lo: int = 1) -> int:
        v = _get(data, path)
        need(isinstance(v, int) and not isinstance(v, bool) and v >= lo,
             f"'{'.'.join(map(str, path))}' must be an integer >= {lo}, got {v!r}", path)
        return v

    def number(v, path: tuple) -> float:
        need(isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v),
             f"'{'.'.join(map(str, path))}' must be a finite number, got {v!r}", path)
        return float(v)

    need(isinstance(data, dict), "top level must be a JSON object", ())
    for key in data:
        need(key in _TOP, f"unknown key '{key}'", (key,))
    for key in sorted(_REQUIRED - set(data)):
        raise err(f"missing required key '{key}'")
    need(data["schema"] == SCHEMA, f"unsupported schema {data['schema']!r}; expected {SCHEMA!r}", ("schema",))
    name = data["name"]
    need(isinstance(name, str) and name and "/" not in name, "'name' must be a non-empty string without '/'",
         ("name",))
    need(("instance" in data) != ("sweep" in data), "give exactly one of 'instance' and 'sweep'", ())

    horizon = integer(("horizon",))
    episodes = integer(("episodes",), 2)
    seed = integer(("seed",), 0)
    need(seed < 2 ** 64, "'seed' must fit in 64 bits", ("seed",))
    per_decade = integer(("per_decade",)) if "per_decade" in data else 200

    coupling = CouplingMode.COMMON_UNIFORM
    if "coupling" in data:
        values = [m.value for m in CouplingMode]
        need(data["coupling"] in values, f"'coupling' must be one of {values}", ("coupling",))
        coupling = CouplingMode(data["coupling"])
    same_slot = data.get("same_slot_service", True)
    need(isinstance(same_slot, bool), "'same_slot_service' must be true or false", ("same_slot_service",))

    alpha = number(data["alpha"], ("alpha",)) if "alpha" in data else 0.5
    need(0.0 < alpha < 1.0, "'alpha' must lie in (0, 1)", ("alpha",))
    gamma = data.get("gamma")
    if gamma is not None:
        gamma = number(gamma, ("gamma",))
        need(gamma > 1.0 / (1.0 - alpha), f"'gamma' must exceed 1/(1-alpha) = {1 / (1 - alpha):g}", ("gamma",))

    pols = data["policies"]
    need(isinstance(pols, list) and pols, "'policies' must be a non-empty list", ("policies",))
    policies = []
    for i, p in enumerate(pols):
        path = ("policies", i)
        need(isinstance(p, dict), "policy entries must be objects", path)
        for key in p:
            need(key in _POLICY, f"unknown policy key '{key}'", path + (key,))
        need("policy" in p, "policy entry needs 'policy'", path)
        c = number(p["explore_const"], path + ("explore_const",)) if "explore_const" in p else 3.0
        try:
            policies.append(PolicyKind(p["policy"], c))
        except (ValueError, TypeError) as exc:
            raise err(str(exc), path + ("policy",)) from None
    labels = [p.label for p in policies]
    need(len(set(labels)) == len(labels), f"duplicate policies {labels}", ("policies",))

    if "instance" in data:
        path = ("instance",)
        need(isinstance(data["instance"], dict), "'instance' must be an object", path)
        for key in data["instance"]:
            need(key in {"U", "K", "lambda", "mu"}, f"unknown instance key '{key}'", path + (key,))
        try:
            cases = (InstanceCase("inst", instance_from_dict(data["instance"])),)
        except InstanceError as exc:
            raise InstanceInvalid(str(exc), lines.get(path), source) from None
    else:
        cases = tuple(_sweep_cases(data["sweep"], lines, source, err, need, number))

    output = data.get("output", f"out/{name}")
    need(isinstance(output, str) and output, "'output' must be a non-empty path string", ("output",))
    return ExperimentSpec(name=name, cases=cases, policies=tuple(policies), horizon=horizon,
                          episodes=episodes, seed=seed, coupling=coupling, same_slot_service=same_slot,
                          per_decade=per_decade, alpha=alpha, gamma=gamma, output=Path(output))


def _get(data: Any, path: tuple) -> Any:
    for key in path:
        data = data[key]
    return data


def _sweep_cases(sweep, lines, source, err, need, number):
    root = ("sweep",)
    need(isinstance(sweep, dict), "'sweep' must be an object", root)
    for key in sweep:
        need(key in _SWEEP, f"unknown sweep key '{key}'", root + (key,))
    need("eps" in sweep, "sweep needs 'eps'", root)
    need(("mu" in sweep) != ("mu_by_K" in sweep), "sweep needs exactly one of 'mu' and 'mu_by_K'", root)
    eps_list = sweep["eps"]
    need(isinstance(eps_list, list) and eps_list, "'sweep.eps' must be a non-empty list", root + ("eps",))
    eps_vals = [number(e, root + ("eps", i)) for i, e in enumerate(eps_list)]

    rows: list[tuple[tuple, list]] = []
    if "mu" in sweep:
        rows.append((root + ("mu",), sweep["mu"]))
    else:
        by_k = sweep["mu_by_K"]
        need(isinstance(by_k, dict) and by_k, "'sweep.mu_by_K' must be a non-empty object", root + ("mu_by_K",))
        for k, row in by_k.items():
            path = root + ("mu_by_K", k)
            need(k.isdigit() and isinstance(row, list) and len(row) == int(k),
                 f"'mu_by_K' entry '{k}' must be a list of {k} rates", path)
            rows.append((path, row))

    for path, row in rows:
        need(isinstance(row, list) and row, "mu row must be a non-empty list", path)
        mu = [number(x, path + (i,)) for i, x in enumerate(row)]
        mu_star = max(mu)
        for j, e in enumerate(eps_vals):
            lam = round(mu_star - e, 12)
            try:
                inst = validate_instance(1, len(mu), [lam], [mu])
            except InstanceError as exc:
                line = lines.get(root + ("eps", j))
                raise InstanceInvalid(f"K={len(mu)}, eps={e:g}: {exc}", line, source) from None
            yield InstanceCase(f"K{len(mu)}_eps{_fmt_num(e)}", inst)


def load_spec(path: str | Path) -> ExperimentSpec:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read spec: {exc.strerror}", None, str(path)) from None
    return parse_spec(text, str(path))


@dataclass
class RunResult:
    tag: str
    policy: PolicyKind
    series: RegretSeries
    files: dict[str, Path]


def run_experiment(spec: ExperimentSpec, workers: int | None = None, log=print) -> list[RunResult]:
    """Run every (instance, policy) pair and write its files into ``spec.output``.

    Per pair: ``<tag>_<policy>.csv`` (regret series), ``.json`` (config
    sidecar), ``_bounds.csv`` (overlays), ``_plot.py`` (standalone plot
    script) and ``.png`` (rendered figure).  A combined ``<name>.png`` and
    ``<name>_plot.py`` cover all pairs.
    """
    out = spec.output
    out.mkdir(parents=True, exist_ok=True)
    results = []
    for case, pol, cfg in spec.configs():
        stem = f"{case.tag}_{pol.label}"
        log(f"[{spec.name}] {stem}: {cfg.episodes} episodes x {cfg.horizon} slots")
        series = estimate_regret(cfg, workers)
        files = {"csv": write_series_csv(series, out / f"{stem}.csv"),
                 "sidecar": write_sidecar(series, out / f"{stem}.json",
                                          {"experiment": spec.name, "instance_tag": case.tag})}
        curves = bound_curves(case.instance, series.times, spec.alpha, spec.gamma)
        bname = f"{stem}_bounds.csv"
        files["bounds"] = out / bname
        write_bounds_csv(curves, files["bounds"])
        files["script"] = write_plot_script(out / f"{stem}_plot.py", [(pol.label, f"{stem}.csv")],
                                            f"{stem}.png", [bname])
        files["png"] = plot_regret([(pol.label, series)], out / f"{stem}.png", bounds=curves,
                                   title=f"{spec.name}: {case.tag}")
        results.append(RunResult(case.tag, pol, series, files))

    labels = [(f"{r.tag} {r.policy.label}" if len(spec.cases) > 1 else r.policy.label,
               f"{r.tag}_{r.policy.label}.csv") for r in results]
    write_plot_script(out / f"{spec.name}_plot.py", labels, f"{spec.name}.png")
    plot_regret([(lab, r.series) for (lab, _), r in zip(labels, results)], out / f"{spec.name}.png",
                title=spec.name)
    return results
