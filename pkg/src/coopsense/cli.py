"""Experiment runner: config in, CSV and summary out.

    coopsense --config exp.json --epsilon 10000,20000 --out results/

Flags override values from the JSON config file.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import bench, ga
from .accuracy import AccuracyEstimator, OracleParams, TrainConfig, generate_training_set, train_mlp
from .context import build_context
from .netmodel import SystemParams
from .quality import VALID_K
from .scene import load_scenario, make_default_scenario

log = logging.getLogger("coopsense")

RESULT_COLUMNS = ("scheme", "epsilon", "A", "K", "seed", "feasible", "total_cost",
                  "bandwidth_fraction", "compute_fraction", "accuracy_estimated",
                  "accuracy_oracle", "elapsed_ms")


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        self.field = field_name
        super().__init__(f"config field '{field_name}': {message}")


@dataclass
class ExperimentConfig:
    scenario: str | None = None      # JSON scenario file; None uses the default scene
    scenario_seed: int = 0
    params: dict = field(default_factory=dict)
    K: int = 3
    ga: dict = field(default_factory=dict)
    oracle: dict = field(default_factory=dict)
    training: dict = field(default_factory=dict)  # TrainConfig fields plus "count"
    schemes: list = field(default_factory=lambda: list(bench.SCHEMES))
    epsilon: list = field(default_factory=lambda: [10000, 20000, 30000, 40000])
    accuracy_req: list = field(default_factory=lambda: [0.9])
    seed: int = 0
    out: str = "results"
    model: str | None = None
    train: bool = False
    exhaustive: bool = False
    timing: bool = False

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        for key in doc:
            if key not in names:
                raise ConfigError(key, "unknown field")
        return cls(**doc)

    def validate(self) -> None:
        if self.scenario is not None and not Path(self.scenario).is_file():
            raise ConfigError("scenario", f"scenario file not found: {self.scenario}")
        if self.model is not None and not self.train and not Path(self.model).is_file():
            raise ConfigError("model", f"model file not found: {self.model}")
        if self.K not in VALID_K:
            raise ConfigError("K", f"must be one of {VALID_K}")
        if not self.epsilon:
            raise ConfigError("epsilon", "sweep list is empty")
        if not self.accuracy_req:
            raise ConfigError("accuracy_req", "sweep list is empty")
        for a in self.accuracy_req:
            if not 0 <= a < 1:
                raise ConfigError("accuracy_req", f"{a} is outside [0, 1)")
        for e in self.epsilon:
            if e <= 0:
                raise ConfigError("epsilon", f"{e} is not positive")
        if not self.schemes:
            raise ConfigError("schemes", "no schemes selected")
        for s in self.schemes:
            if s not in bench.SCHEMES:
                raise ConfigError("schemes", f"unknown scheme {s!r}")
        if self.seed < 0:
            raise ConfigError("seed", "must be non-negative")
        checks = {"params": lambda: SystemParams.from_dict(self.params),
                  "ga": self.ga_config,
                  "oracle": lambda: OracleParams(**self.oracle),
                  "training": self.train_config}
        for name, build in checks.items():
            try:
                build()
            except (TypeError, ValueError) as exc:
                raise ConfigError(name, str(exc)) from None

    def ga_config(self) -> ga.GaConfig:
        return ga.GaConfig.from_dict({"seed": self.seed, **self.ga})

    def train_config(self) -> TrainConfig:
        doc = {k: v for k, v in self.training.items() if k != "count"}
        return TrainConfig(**{"seed": self.seed, **doc})


def parse_list(text: str, cast=float) -> list:
    return [cast(v) for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="coopsense", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="JSON experiment config")
    p.add_argument("--scenario", help="JSON scenario file (default: built-in scene)")
    p.add_argument("--seed", type=int)
    p.add_argument("--scheme", help="scheme name or comma list; a lone 'all' runs every scheme")
    p.add_argument("--epsilon", help="comma-separated cycles/point sweep")
    p.add_argument("--accuracy-req", help="comma-separated accuracy requirements")
    p.add_argument("--K", type=int, choices=VALID_K)
    p.add_argument("--train", action="store_true", default=None, help="retrain the accuracy model")
    p.add_argument("--model", help="model JSON to load (or write with --train)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--exhaustive", action="store_true", default=None,
                   help="exhaustive search instead of the GA (tiny instances)")
    p.add_argument("--workers", type=int, help="threads for GA candidate evaluation")
    p.add_argument("--timing", action="store_true", default=None,
                   help="fill elapsed_ms (makes results.csv run-dependent)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def config_from_args(args) -> ExperimentConfig:
    doc = {}
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise ConfigError("config", f"config file not found: {path}")
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"invalid JSON: {exc}") from None
    cfg = ExperimentConfig.from_dict(doc)
    if args.scenario is not None:
        cfg.scenario = args.scenario
    if args.seed is not None:
        cfg.seed = args.seed
    if args.scheme is not None:
        # a lone "all" means every scheme; the share-everything baseline alone
        # is reachable through the config file's scheme list
        cfg.schemes = list(bench.SCHEMES) if args.scheme == "all" else parse_list(args.scheme, str)
    if args.epsilon is not None:
        cfg.epsilon = parse_list(args.epsilon)
    if args.accuracy_req is not None:
        cfg.accuracy_req = parse_list(args.accuracy_req)
    if args.K is not None:
        cfg.K = args.K
    if args.train:
        cfg.train = True
    if args.model is not None:
        cfg.model = args.model
    if args.out is not None:
        cfg.out = args.out
    if args.exhaustive:
        cfg.exhaustive = True
    if args.timing:
        cfg.timing = True
    if args.workers is not None:
        cfg.ga = {**cfg.ga, "workers": args.workers}
    return cfg


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _acc(values) -> str:
    return ";".join(f"{v:.6f}" for v in values)


def obtain_model(cfg: ExperimentConfig, out: Path) -> AccuracyEstimator:
    if cfg.model is not None and not cfg.train:
        model = AccuracyEstimator.load(cfg.model)
        if model.K_ != cfg.K:
            raise ConfigError("K", f"model {cfg.model} was trained for K={model.K_}")
        return model
    count = int(cfg.training.get("count", 5600))
    oracle = OracleParams(**cfg.oracle)
    log.info("generating %d training samples (K=%d)", count, cfg.K)
    data = generate_training_set(cfg.seed, count, cfg.K, oracle)
    model = train_mlp(data, cfg.train_config())
    model.save(out / "model.json")
    if cfg.model is not None:
        model.save(cfg.model)
    return model


def run_experiment(cfg: ExperimentConfig) -> Path:
    """Run the sweep and write results.csv, elite_history.csv and summary.txt."""
    cfg.validate()
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    file_params = {}
    if cfg.scenario is not None:
        scenario, file_params = load_scenario(cfg.scenario)
    else:
        scenario = make_default_scenario(cfg.scenario_seed)
    try:
        params = SystemParams.from_dict({**file_params, **cfg.params})
    except (TypeError, ValueError) as exc:
        raise ConfigError("params", str(exc)) from None
    model = obtain_model(cfg, out)
    ctx = build_context(scenario, params, model, OracleParams(**cfg.oracle))
    ga_cfg = cfg.ga_config()

    rows, history_rows, summary = [], [], []
    for A in cfg.accuracy_req:
        for eps in cfg.epsilon:
            sub = ctx.with_params(params.replace(epsilon=float(eps), A=float(A)))
            results = {}
            for name in cfg.schemes:
                t0 = time.perf_counter()
                res = bench.run_scheme(name, sub, ga_cfg, cfg.exhaustive)
                elapsed = (time.perf_counter() - t0) * 1e3
                results[name] = res
                rows.append([name, float(eps), float(A), cfg.K, cfg.seed, res.feasible, res.total_cost,
                             res.bandwidth_fraction, res.compute_fraction, _acc(res.accuracy),
                             _acc(res.oracle_accuracy), round(elapsed, 3) if cfg.timing else None])
                for g, c in enumerate(res.history or []):
                    history_rows.append([name, float(eps), float(A), g, c])
            summary.extend(_summarise(float(eps), float(A), results))

    with open(out / "results.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        w.writerows([[_fmt(v) for v in row] for row in rows])
    with open(out / "elite_history.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("scheme", "epsilon", "A", "generation", "cost"))
        w.writerows([[_fmt(v) for v in row] for row in history_rows])
    (out / "summary.txt").write_text("\n".join(summary) + "\n")
    return out


def _summarise(eps: float, A: float, results: dict) -> list[str]:
    lines = [f"epsilon={eps:g} A={A:g}"]
    for name, res in results.items():
        cost = f"{res.total_cost:.6f}" if res.feasible else f"infeasible ({res.reason})"
        low = [m for m, ok in enumerate(res.meets_accuracy) if not ok]
        extra = f"  subtasks below A: {low}" if low else ""
        lines.append(f"  {name:<12} {cost}{extra}")
    broken = bench.dominance_violations(results)
    chain = [k for k in ("proposed", "centralized", "unified", "all") if k in results]
    if len(chain) < 4 or not all(results[k].feasible for k in chain):
        verdict = "not checked (scheme missing or infeasible)"
    else:
        verdict = "holds" if not broken else "VIOLATED: " + "; ".join(broken)
    lines.append(f"  dominance proposed <= centralized <= unified <= all: {verdict}")
    return lines


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        out = run_experiment(config_from_args(args))
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # anything else is still a failed run
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    print(f"results written to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
