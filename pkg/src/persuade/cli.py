"""Command line: run seed sweeps, report optimal schemes, plot regret curves."""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import Instance, TieRule, compute_margins
from .errors import AssumptionViolation, IncompatibleLearner, PersuasionError
from .learners import LEARNER_NAMES, learn_and_robustify_bound, make_learner, strength_search_bound
from .optimal import optimal_scheme_binary, optimal_scheme_general, optimal_value
from .sim import GENERATORS, run_episode, substream

SCHEMA_VERSION = 1
RESULTS_HEADER = "learner,seed,t,instant_regret,cumulative_regret"
SUMMARY_HEADER = "learner,T,mean_cum_regret,std_cum_regret,theorem_bound"
SEED_ENV = "PERSUADE_SEED"

EXIT_CONFIG = 2
EXIT_ASSUMPTION = 3


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the field."""


def fmt(x: float) -> str:
    return "%.17g" % x


# ----------------------------------------------------------------------------
# configuration


@dataclass
class LearnerSpec:
    name: str
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"name": self.name, "params": dict(self.params)}


@dataclass
class ExperimentConfig:
    instance: dict
    learners: list[LearnerSpec]
    T: int
    seeds: list[int] | dict
    tie_rule: str | None = None
    flags: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=lambda: {"results": "results.csv", "summary": "summary.csv"})
    schema_version: int = SCHEMA_VERSION

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError("top level: expected a JSON object")
        known = {"schema_version", "instance", "learners", "T", "seeds", "tie_rule", "flags", "outputs"}
        extra = set(raw) - known
        if extra:
            raise ConfigError(f"unknown field(s): {', '.join(sorted(extra))}")
        if raw.get("schema_version") != SCHEMA_VERSION:
            raise ConfigError(f"schema_version: expected {SCHEMA_VERSION}, got {raw.get('schema_version')!r}")
        for key in ("instance", "learners", "T", "seeds"):
            if key not in raw:
                raise ConfigError(f"{key}: missing")
        instance = raw["instance"]
        if not isinstance(instance, dict) or ("inline" in instance) == ("generator" in instance):
            raise ConfigError("instance: give exactly one of 'inline' or 'generator'")
        if "generator" in instance and instance["generator"] not in GENERATORS:
            raise ConfigError(f"instance.generator: unknown generator {instance['generator']!r}")
        learners = raw["learners"]
        if not isinstance(learners, list) or not learners:
            raise ConfigError("learners: expected a non-empty list")
        specs = []
        for i, item in enumerate(learners):
            if isinstance(item, str):
                item = {"name": item}
            if not isinstance(item, dict) or "name" not in item:
                raise ConfigError(f"learners[{i}]: expected {{name, params}}")
            if item["name"] not in LEARNER_NAMES:
                raise ConfigError(f"learners[{i}].name: unknown learner {item['name']!r}")
            specs.append(LearnerSpec(item["name"], dict(item.get("params", {}))))
        T = raw["T"]
        if not isinstance(T, int) or isinstance(T, bool) or T < 1:
            raise ConfigError("T: expected an integer >= 1")
        seeds = raw["seeds"]
        if isinstance(seeds, list):
            if not seeds or not all(isinstance(s, int) and s >= 0 for s in seeds):
                raise ConfigError("seeds: expected a non-empty list of non-negative integers")
        elif isinstance(seeds, dict):
            if set(seeds) != {"count", "base"} or not all(isinstance(seeds[k], int) for k in seeds) \
                    or seeds["count"] < 1 or seeds["base"] < 0:
                raise ConfigError("seeds: expected {count >= 1, base >= 0}")
        else:
            raise ConfigError("seeds: expected a list or {count, base}")
        tie = raw.get("tie_rule")
        if tie is not None and tie not in [r.value for r in TieRule]:
            raise ConfigError(f"tie_rule: unknown rule {tie!r}")
        flags = dict(raw.get("flags", {}))
        bad = set(flags) - {"reveal_states", "exact_ball_check", "eps_exponent"}
        if bad:
            raise ConfigError(f"flags: unknown flag(s) {', '.join(sorted(bad))}")
        outputs = dict(raw.get("outputs", {"results": "results.csv", "summary": "summary.csv"}))
        if set(outputs) != {"results", "summary"}:
            raise ConfigError("outputs: expected {results, summary}")
        return cls(instance=instance, learners=specs, T=T, seeds=seeds, tie_rule=tie,
                   flags=flags, outputs=outputs, schema_version=SCHEMA_VERSION)

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "instance": self.instance,
            "learners": [s.to_dict() for s in self.learners],
            "T": self.T,
            "seeds": self.seeds,
            "tie_rule": self.tie_rule,
            "flags": dict(self.flags),
            "outputs": dict(self.outputs),
        }

    def resolved_seeds(self, env: dict | None = None) -> list[int]:
        """Seed list, with the base replaced by $PERSUADE_SEED when set."""
        env = os.environ if env is None else env
        override = env.get(SEED_ENV)
        if isinstance(self.seeds, dict):
            base, count = self.seeds["base"], self.seeds["count"]
        else:
            base, count = self.seeds[0], len(self.seeds)
            if override is None:
                return list(self.seeds)
        if override is not None:
            try:
                base = int(override)
            except ValueError:
                raise ConfigError(f"{SEED_ENV}: not an integer: {override!r}") from None
        return [base + i for i in range(count)]


def load_config(path: str | Path) -> ExperimentConfig:
    text = Path(path).read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return ExperimentConfig.from_dict(raw)


def build_instance(source: dict) -> Instance:
    """Instance from ``{"inline": {...}}`` or ``{"generator": name, "params": {...}}``."""
    if "generator" in source:
        try:
            return GENERATORS[source["generator"]](**source.get("params", {}))
        except TypeError as exc:
            raise ConfigError(f"instance.params: {exc}") from None
    body = source["inline"] if "inline" in source else source
    for key in ("u", "v", "prior", "p0"):
        if key not in body:
            raise ConfigError(f"instance.inline.{key}: missing")
    try:
        return Instance(u=body["u"], v=body["v"], prior=body["prior"], p0=body["p0"],
                        states=tuple(body.get("states", ())), actions=tuple(body.get("actions", ())))
    except AssumptionViolation:
        raise
    except ValueError as exc:
        raise ConfigError(f"instance.inline: {exc}") from None


def theorem_bound(name: str, instance: Instance, T: int) -> float | None:
    """Closed-form regret guarantee for ``name`` on ``instance``, if one applies."""
    n = instance.state_count
    if name == "alg5":
        return strength_search_bound(n, T, instance.p0)
    if name == "alg3":
        if len(set(np.argmax(instance.v, axis=0).tolist())) == 1:
            return None
        m = compute_margins(instance.u, instance.v, instance.p0)
        return learn_and_robustify_bound(n, T, instance.p0, m.G, m.D)
    return None


# ----------------------------------------------------------------------------
# run


def _episode(task):
    source, name, params, T, seed, tie, reveal = task
    instance = build_instance(source)
    learner = make_learner(name, instance, T, params, rng=substream(seed, "learner"))
    try:
        trace = run_episode(instance, learner, T, seed, tie=tie, reveal_states=reveal)
    except IncompatibleLearner as exc:
        raise ConfigError(f"flags.reveal_states: {exc}") from None
    robust = getattr(learner, "robust", None)
    ball = None if robust is None else (robust.scheme, robust.mu_hat, learner.radius)
    return trace.instant_regret, trace.cumulative, ball


def _learner_params(spec: LearnerSpec, flags: dict) -> dict:
    params = dict(spec.params)
    if spec.name == "alg3" and flags.get("eps_exponent") is not None:
        params.setdefault("eps_exponent", flags["eps_exponent"])
    return params


def run_experiment(cfg: ExperimentConfig, out_dir: str | Path, threads: int = 1) -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    instance = build_instance(cfg.instance)
    seeds = cfg.resolved_seeds()
    reveal = cfg.flags.get("reveal_states", True)
    tasks = [(cfg.instance, spec.name, _learner_params(spec, cfg.flags), cfg.T, seed, cfg.tie_rule, reveal)
             for spec in cfg.learners for seed in seeds]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_episode, tasks))
    else:
        results = [_episode(task) for task in tasks]

    results_path = out_dir / cfg.outputs["results"]
    summary_path = out_dir / cfg.outputs["summary"]
    t = np.arange(1, cfg.T + 1)
    with open(results_path, "w", newline="") as fh:
        fh.write(RESULTS_HEADER + "\n")
        for (_, name, _, _, seed, _, _), (inst, cum, _) in zip(tasks, results):
            fh.write("".join(f"{name},{seed},{k},{fmt(a)},{fmt(c)}\n" for k, a, c in zip(t, inst, cum)))

    with open(summary_path, "w", newline="") as fh:
        fh.write(SUMMARY_HEADER + "\n")
        for i, spec in enumerate(cfg.learners):
            finals = np.array([cum[-1] for _, cum, _ in results[i * len(seeds):(i + 1) * len(seeds)]])
            bound = theorem_bound(spec.name, instance, cfg.T)
            fh.write(f"{spec.name},{cfg.T},{fmt(finals.mean())},{fmt(finals.std())},"
                     f"{'' if bound is None else fmt(bound)}\n")

    if cfg.flags.get("exact_ball_check"):
        from .robustify import exact_ball_slack

        for (_, name, _, _, seed, _, _), (_, _, ball) in zip(tasks, results):
            if ball is not None:
                scheme, center, radius = ball
                slack = exact_ball_slack(scheme, center, radius, instance.v)
                status = "ok" if slack >= -1e-9 else "VIOLATED"
                print(f"ball check {name} seed {seed}: min slack {slack:.3e} {status}")
    return results_path, summary_path


# ----------------------------------------------------------------------------
# optimal


def optimal_report(instance: Instance) -> str:
    margins = compute_margins(instance.u, instance.v, instance.p0)
    out = io.StringIO()
    w = out.write
    w(f"U* = {fmt(optimal_value(instance))}\n")
    w(f"G = {fmt(margins.G)}\nD = {fmt(margins.D)}\n")
    scheme, value = optimal_scheme_general(instance.prior, instance.u, instance.v)
    w(f"LP value = {fmt(value)}\n")
    w("LP scheme [state: P(recommend action)]\n")
    for k, row in enumerate(scheme.cond):
        w(f"  {instance.states[k]}: " + " ".join(f"{instance.actions[a]}={fmt(p)}" for a, p in enumerate(row)) + "\n")
    binary = instance.action_count == 2 and np.all(instance.u[1] > instance.u[0])
    if binary and instance.prior @ (instance.v[0] - instance.v[1]) > 0:
        opt = optimal_scheme_binary(instance.prior, instance.u, instance.v)
        w(f"knapsack value = {fmt(opt.value)}\n")
        w(f"threshold state = {instance.states[opt.threshold_state]}\n")
        w(f"M* = {fmt(opt.m_star)}\n")
        w("knapsack scheme [state: P(recommend action 1)]\n")
        for k, p in enumerate(opt.scheme.cond[:, 1]):
            w(f"  {instance.states[k]}: {fmt(p)}\n")
    return out.getvalue()


# ----------------------------------------------------------------------------
# plot


def read_results(path: str | Path) -> dict[str, dict[int, np.ndarray]]:
    """{learner: {seed: cumulative regret array}} from a results CSV."""
    with open(path, newline="") as fh:
        header = fh.readline().rstrip("\n")
        if header != RESULTS_HEADER:
            raise ConfigError(f"line 1: expected header {RESULTS_HEADER!r}, got {header!r}")
        data: dict[str, dict[int, list[float]]] = {}
        for lineno, row in enumerate(csv.reader(fh), start=2):
            if len(row) != 5:
                raise ConfigError(f"line {lineno}: expected 5 fields")
            try:
                data.setdefault(row[0], {}).setdefault(int(row[1]), []).append(float(row[4]))
            except ValueError as exc:
                raise ConfigError(f"line {lineno}: {exc}") from None
    return {name: {s: np.array(v) for s, v in runs.items()} for name, runs in data.items()}


def regret_curves(path: str | Path) -> dict[str, tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """{learner: (t, mean, population std)} over seeds."""
    curves = {}
    for name, runs in read_results(path).items():
        stack = np.vstack(list(runs.values()))
        curves[name] = (np.arange(1, stack.shape[1] + 1), stack.mean(axis=0), stack.std(axis=0))
    return curves


def log_slope(t: np.ndarray, y: np.ndarray) -> float:
    """Least-squares slope of ``y`` against ln t."""
    return float(np.polyfit(np.log(t), y, 1)[0])


def plot_results(path: str | Path, out: str | Path, axes: str = "logx", config: ExperimentConfig | None = None) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "persuade"
    curves = regret_curves(path)
    fig, ax = plt.subplots(figsize=(7, 4.5))

    def xmap(t):
        if axes == "loglogx":
            return np.log2(np.log2(t))
        return t

    for name, (t, mean, std) in curves.items():
        keep = t > 2 if axes == "loglogx" else slice(None)
        x = xmap(t[keep])
        ax.plot(x, mean[keep], label=name)
        ax.fill_between(x, (mean - std)[keep], (mean + std)[keep], alpha=0.2)
    if config is not None:
        instance = build_instance(config.instance)
        for spec in config.learners:
            if spec.name in curves and theorem_bound(spec.name, instance, 2) is not None:
                t = curves[spec.name][0]
                t = t[t > 2]
                bound = [theorem_bound(spec.name, instance, int(k)) for k in t]
                ax.plot(xmap(t), bound, linestyle="--", linewidth=0.8, label=f"{spec.name} bound")
    if axes == "logx":
        ax.set_xscale("log")
    ax.set_xlabel("log2 log2 t" if axes == "loglogx" else "t")
    ax.set_ylabel("cumulative regret")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out, format="svg", metadata={"Date": None})
    plt.close(fig)


# ----------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="persuade", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run every (learner, seed) episode of a config")
    run.add_argument("--config", required=True)
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--threads", type=int, default=1, help="worker processes")
    opt = sub.add_parser("optimal", help="report U*, optimal schemes and margins")
    opt.add_argument("--instance", required=True)
    plot = sub.add_parser("plot", help="plot mean cumulative regret per learner")
    plot.add_argument("--in", dest="inp", required=True)
    plot.add_argument("--out", required=True)
    plot.add_argument("--axes", choices=("linear", "logx", "loglogx"), default="logx")
    plot.add_argument("--config", help="overlay the theorem bound for this config's instance")
    return parser


def _assumption_message(exc: AssumptionViolation) -> str:
    return f"assumption violated: {exc}"


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            if args.threads < 1:
                raise ConfigError("--threads: must be >= 1")
            cfg = load_config(args.config)
            results, summary = run_experiment(cfg, args.out, args.threads)
            print(f"wrote {results} and {summary}")
        elif args.command == "optimal":
            try:
                raw = json.loads(Path(args.instance).read_text())
            except json.JSONDecodeError as exc:
                raise ConfigError(f"line {exc.lineno} column {exc.colno}: {exc.msg}") from None
            source = raw.get("instance", raw) if isinstance(raw, dict) else raw
            if not isinstance(source, dict):
                raise ConfigError("instance: expected a JSON object")
            sys.stdout.write(optimal_report(build_instance(source)))
        else:
            cfg = load_config(args.config) if args.config else None
            plot_results(args.inp, args.out, args.axes, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AssumptionViolation as exc:
        print(_assumption_message(exc), file=sys.stderr)
        return EXIT_ASSUMPTION
    except (PersuasionError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG if isinstance(exc, OSError) else 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
