"""Command-line front end.

    owlprune lod        --model M.lodt --regime scenario --samples 128
    owlprune prune      --model M.lodt --sparsity 0.3 --allocation owled_lm_only
    owlprune experiment sweep|scope|calib --seeds 0-19

Options may also come from ``--config FILE`` (``key = value`` lines, keys
named like the long flags); flags given on the command line win. Output goes
to ``--out``, else ``$OWLPRUNE_OUT``, else ``./owlprune-out``.

Exit codes: 0 success, 2 bad configuration, 3 file or format error,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path

from .allocation import allocate_scoped, write_plan
from .archive import load_model, save_model
from .calibration import Regime, collect_norms, generate, load_calibration
from .config import (
    DEFAULT_LIMIT,
    DEFAULT_SAMPLES,
    Allocation,
    Comparison,
    Method,
    PruningConfig,
    feasible_limit,
)
from .errors import ConfigError, FormatError, NumericalError, StructuralError
from .evaluation import (
    DEFAULT_SEEDS,
    load_fixture,
    load_task,
    run_calibration_ablation,
    run_scope_ablation,
    run_sweep,
)
from .outliers import DEFAULT_THRESHOLD, compute_lod, lod_text
from .pruning import prune_model

log = logging.getLogger("owlprune")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERICAL = 0, 2, 3, 4
OUT_ENV = "OWLPRUNE_OUT"
EXPERIMENTS = ("sweep", "scope", "calib")

DEFAULTS = {
    "model": None,
    "out": None,
    "calibration": None,
    "sparsity": 0.5,
    "lambda": DEFAULT_LIMIT,
    "m_threshold": DEFAULT_THRESHOLD,
    "method": "wanda",
    "allocation": "owled_lm_only",
    "comparison": "per_row",
    "regime": "scenario",
    "samples": DEFAULT_SAMPLES,
    "seed": 0,
    "seeds": None,
    "scope": "all",
}


@dataclass(frozen=True)
class RunConfig:
    command: str
    model: Path
    out: Path
    regime: Regime
    samples: int
    seed: int
    seeds: tuple
    pruning: PruningConfig
    calibration: Path | None = None
    scope: str = "all"
    experiment: str | None = None


def parse_seeds(text):
    seeds = []
    for part in str(text).replace(" ", "").split(","):
        if not part:
            continue
        lo, sep, hi = part.partition("-")
        try:
            if sep:
                seeds.extend(range(int(lo), int(hi) + 1))
            else:
                seeds.append(int(lo))
        except ValueError:
            raise ConfigError(f"cannot parse seed list {text!r}") from None
    if not seeds or min(seeds) < 0:
        raise ConfigError(f"seed list {text!r} must name non-negative seeds")
    return tuple(seeds)


def read_config_file(path):
    values = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise FileNotFoundError(f"cannot read config file {path}: {exc.strerror}") from None
    for number, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().lstrip("-").replace("-", "_")
        if not sep or key not in DEFAULTS:
            raise ConfigError(f"{path}:{number}: expected 'key = value' with a known key, got {line!r}")
        values[key] = value.strip()
    return values


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value file; command-line flags override it")
    common.add_argument("--model", help="LODT archive (default: bundled fixture)")
    common.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or ./owlprune-out)")
    common.add_argument("--calibration", help="LODC calibration blob to use instead of the generators")
    common.add_argument("--sparsity", type=float)
    common.add_argument("--lambda", dest="lambda", type=float, help="clamp half-width")
    common.add_argument("--m-threshold", dest="m_threshold", type=float, help="outlier threshold multiplier")
    common.add_argument("--method", choices=[m.value for m in Method])
    common.add_argument("--allocation", choices=[a.value for a in Allocation])
    common.add_argument("--comparison", choices=[c.value for c in Comparison])
    common.add_argument("--regime", choices=[r.name.lower() for r in Regime])
    common.add_argument("--samples", type=int, help="calibration sample count")
    common.add_argument("--seed", type=int)
    common.add_argument("--seeds", help="seed list for experiments, e.g. 0-19 or 1,4,9")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="owlprune", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    lod = sub.add_parser("lod", parents=[common], help="compute the layerwise outlier distribution")
    lod.add_argument("--scope", choices=["all", "encoder", "lm"])
    sub.add_parser("prune", parents=[common], help="prune a model and write the report")
    exp = sub.add_parser("experiment", parents=[common], help="run a canned experiment")
    exp.add_argument("name", choices=EXPERIMENTS)
    for p in (parser, lod, exp):
        p.set_defaults(**{k: None for k in DEFAULTS})
    return parser


def resolve(args) -> RunConfig:
    values = dict(DEFAULTS)
    if getattr(args, "name", None) == "calib":
        values["sparsity"] = 0.4
    if args.config:
        values.update(read_config_file(args.config))
    for key in DEFAULTS:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    try:
        samples = int(values["samples"])
        seed = int(values["seed"])
        threshold = float(values["m_threshold"])
        limit = float(values["lambda"])
        sparsity = float(values["sparsity"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad numeric option: {exc}") from None
    if samples < 1:
        raise ConfigError("--samples must be at least 1")
    if seed < 0:
        raise ConfigError("--seed must be non-negative")
    capped = feasible_limit(sparsity, limit) if 0 <= sparsity < 1 and limit >= 0 else limit
    if capped != limit:
        log.warning("lambda %.4g capped to %.4g so that sparsity +/- lambda stays in [0, 1]", limit, capped)
        limit = capped
    pruning = PruningConfig(
        sparsity,
        limit,
        threshold,
        values["method"],
        values["allocation"],
        values["comparison"],
        seed=seed,
    )
    try:
        regime = Regime[str(values["regime"]).upper()]
    except KeyError:
        raise ConfigError(f"unknown regime {values['regime']!r}") from None
    scope = str(values["scope"]).lower()
    if scope not in ("all", "encoder", "lm"):
        raise ConfigError(f"unknown scope {scope!r}")
    if values["seeds"] is not None:
        seeds = parse_seeds(values["seeds"])
    else:
        seeds = DEFAULT_SEEDS if args.command == "experiment" else (seed,)
    out = values["out"] or os.environ.get(OUT_ENV) or "owlprune-out"
    model = Path(values["model"]) if values["model"] else None
    return RunConfig(
        command=args.command,
        model=model,
        out=Path(out),
        regime=regime,
        samples=samples,
        seed=seed,
        seeds=seeds,
        pruning=pruning,
        calibration=Path(values["calibration"]) if values["calibration"] else None,
        scope=scope,
        experiment=getattr(args, "name", None),
    )


def _load(cfg):
    if cfg.model is None:
        return load_fixture()
    return load_model(cfg.model)


def _calibration(cfg, graph):
    if cfg.calibration is not None:
        c = load_calibration(cfg.calibration)
    else:
        c = generate(cfg.regime, cfg.samples, cfg.seed)
    if c.width != graph.input_dim:
        raise ConfigError(f"calibration width {c.width} does not match model input_dim {graph.input_dim}")
    return c


def cmd_lod(cfg: RunConfig):
    graph = _load(cfg)
    calib = _calibration(cfg, graph)
    trace = collect_norms(graph, calib)
    scope = None if cfg.scope == "all" else cfg.scope.upper()
    profile = compute_lod(graph, trace, cfg.pruning.threshold, scope)
    cfg.out.mkdir(parents=True, exist_ok=True)
    path = cfg.out / "lod.txt"
    path.write_text(
        lod_text(profile, regime=calib.regime, seed=calib.seed, n_samples=calib.n_samples),
        encoding="utf-8",
    )
    for layer_id, d in profile.entries:
        print(f"{layer_id}\t{d:.6f}")
    log.info("wrote %s", path)


def cmd_prune(cfg: RunConfig):
    graph = _load(cfg)
    pcfg = cfg.pruning
    trace = None
    if pcfg.method is Method.WANDA or pcfg.allocation is not Allocation.UNIFORM:
        trace = collect_norms(graph, _calibration(cfg, graph))
    plan = allocate_scoped(graph, trace, pcfg)
    pruned, report = prune_model(graph, plan, pcfg.method, trace, pcfg.comparison)
    cfg.out.mkdir(parents=True, exist_ok=True)
    save_model(pruned, cfg.out / "pruned.lodt")
    write_plan(plan, cfg.out / "plan.txt")
    (cfg.out / "report.txt").write_text(report.to_text(), encoding="utf-8")
    (cfg.out / "report.kv").write_text(report.to_kv(), encoding="utf-8")
    print(f"achieved sparsity: {report.scope_sparsity:.6f} over targeted layers, "
          f"{report.model_sparsity:.6f} over the whole model")
    for tag in ("ENCODER", "LM"):
        print(f"{tag} sparsity: {report.component_sparsity(tag):.6f}")


def cmd_experiment(cfg: RunConfig):
    graph = _load(cfg)
    task = load_task(graph)
    pcfg = cfg.pruning
    common = dict(seeds=cfg.seeds, limit=pcfg.limit, threshold=pcfg.threshold, comparison=pcfg.comparison)
    if cfg.experiment == "sweep":
        result = run_sweep(task, n_samples=cfg.samples, **common)
    elif cfg.experiment == "scope":
        result = run_scope_ablation(task, n_samples=cfg.samples, **common)
    else:
        result = run_calibration_ablation(task, sparsity=pcfg.sparsity, **common)
    paths = result.write(cfg.out)
    sys.stdout.write(result.summary_text())
    for path in paths.values():
        log.info("wrote %s", path)


COMMANDS = {"lod": cmd_lod, "prune": cmd_prune, "experiment": cmd_experiment}


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="owlprune: %(message)s",
    )
    try:
        cfg = resolve(args)
    except ConfigError as exc:
        print(f"owlprune: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"owlprune: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        COMMANDS[cfg.command](cfg)
    except ConfigError as exc:
        print(f"owlprune: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FormatError, StructuralError, OSError) as exc:
        print(f"owlprune: {exc}", file=sys.stderr)
        return EXIT_IO
    except NumericalError as exc:
        print(f"owlprune: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
