"""Command-line interface.

Subcommands: gen-dataset, train-guide, train-value, search, evaluate,
benchmark, selectivity. Every command that writes artifacts takes an
--out directory and drops a manifest.json there describing inputs
(sha256), the config snapshot, the seed, outputs, and wall time.

All randomness is seeded, and all primary artifacts are byte-identical
across runs with the same seed; wall-clock measurements go to the
manifest and to *timing* sidecar files, which are the only run-dependent
outputs.

Exit codes: 0 success, 1 runtime failure, 2 usage/config error.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import os
import sys
import time
from pathlib import Path

from . import __version__, nn
from .env import EnvConfig
from .evaluation import (
    EvalConfig,
    benchmark,
    eval_summary,
    infer_eoc,
    run_scenario,
    selectivity_check,
    write_eval_csv,
)
from .grid import CaseError, GridCase, TopologyState, load_case
from .oracles import GAConfig, ga_search, gen_dataset, global_enumerate, local_enumerate, read_dataset, write_dataset
from .training import (
    GuideConfig,
    TrainConfig,
    ValueConfig,
    pretrain_guide,
    train_value,
    write_train_report,
)

USAGE_ERROR = 2
RUNTIME_ERROR = 1


class ConfigError(Exception):
    """Config file failed validation; message lists every problem."""


# ---------------------------------------------------------------------------
# config files

GUIDE_KEYS = (
    "batch",
    "training set",
    "verify set",
    "test set",
    "learning rate",
    "train epochs",
    "initial percentage",
    "percentage step",
)
VALUE_KEYS = (
    "batch",
    "alpha",
    "epsilon",
    "action num",
    "n1",
    "n2",
    "learning rate",
    "memory",
    "gamma",
    "step size",
)
RUN_REQUIRED = ("k", "seed")


def _widths(text: str) -> tuple[int, ...]:
    text = text.strip()
    if not text:
        return ()
    return tuple(int(part) for part in text.split(","))


def load_train_config(path) -> tuple[TrainConfig, dict]:
    """Parse and validate a training config file.

    The [guide] and [value] sections mirror the hyperparameter table
    one-to-one and every listed key must be present; [run] holds k, seed,
    and schedule extras. Returns the config plus a plain-dict snapshot for
    the manifest. Raises ConfigError listing all problems at once.
    """
    parser = configparser.ConfigParser()
    read = parser.read(path)
    problems: list[str] = []
    if not read:
        raise ConfigError(f"config file {path} not found or unreadable")
    for section in ("guide", "value", "run"):
        if section not in parser:
            problems.append(f"missing [{section}] section")
    if problems:
        raise ConfigError("; ".join(problems))
    for key in GUIDE_KEYS:
        if key not in parser["guide"]:
            problems.append(f"[guide] is missing {key!r}")
    for key in VALUE_KEYS:
        if key not in parser["value"]:
            problems.append(f"[value] is missing {key!r}")
    for key in RUN_REQUIRED:
        if key not in parser["run"]:
            problems.append(f"[run] is missing {key!r}")
    if problems:
        raise ConfigError("; ".join(problems))

    g = parser["guide"]
    v = parser["value"]
    r = parser["run"]
    try:
        guide = GuideConfig(
            batch=g.getint("batch"),
            train_size=g.getint("training set"),
            verify_size=g.getint("verify set"),
            test_size=g.getint("test set"),
            learning_rate=g.getfloat("learning rate"),
            epochs=g.getint("train epochs"),
            conv_widths=_widths(r.get("guide conv widths", "64,64")),
            dense_widths=_widths(r.get("guide dense widths", "256")),
        )
        value = ValueConfig(
            batch=v.getint("batch"),
            alpha=v.getfloat("alpha"),
            epsilon=v.getfloat("epsilon"),
            explore_n=v.getint("action num"),
            learning_rate=v.getfloat("learning rate"),
            memory=v.getint("memory"),
            lr_decay=v.getfloat("gamma"),
            lr_step=v.getint("step size"),
            initial_guided_percentage=g.getfloat("initial percentage"),
            percentage_step=g.getfloat("percentage step"),
            episodes_per_round=r.getint("episodes per round", fallback=100),
            rounds=r.getint("rounds", fallback=60),
            snapshot_samples=r.getint("snapshot samples", fallback=100),
            conv_widths=_widths(r.get("value conv widths", "64,64")),
            dense_widths=_widths(r.get("value dense widths", "256,128")),
        )
        config = TrainConfig(
            guide=guide,
            value=value,
            k_max=r.getint("k"),
            seed=r.getint("seed"),
            initial_outage_limit=r.getint("initial outages", fallback=3),
        )
    except (ValueError, ConfigError) as exc:
        raise ConfigError(f"config value error: {exc}") from None

    snapshot = {section: dict(parser[section]) for section in parser.sections()}
    snapshot["_derived"] = {"n1": v.getint("n1"), "n2": v.getint("n2")}
    return config, snapshot


# ---------------------------------------------------------------------------
# manifests and small helpers


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(out_dir: Path, command: str, args: argparse.Namespace, inputs: list, outputs: list, config_snapshot, started: float) -> None:
    manifest = {
        "command": command,
        "argv": [a for a in sys.argv[1:]],
        "config": config_snapshot,
        "seed": getattr(args, "seed", None),
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": sorted(str(Path(o).name) for o in outputs),
        "tool_version": __version__,
        "wall_time_s": time.perf_counter() - started,
    }
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _parse_relay(case: GridCase, text: str):
    parts = text.split(":")
    if len(parts) != 2 or parts[1] not in ("from", "to"):
        raise CaseError(f"relay must look like LINE:from or LINE:to, got {text!r}")
    try:
        line_id = int(parts[0])
    except ValueError:
        raise CaseError(f"relay line id must be an integer, got {parts[0]!r}") from None
    return case.relay(line_id, parts[1])


def _parse_status(case: GridCase, text: str | None) -> TopologyState:
    if text is None or text == "all":
        return TopologyState.all_in_service(case.m)
    if len(text) != case.m or any(ch not in "01" for ch in text):
        raise CaseError(f"status must be a {case.m}-character bitstring of 0/1 (1 = in service)")
    return TopologyState(status=tuple(int(ch) for ch in text))


def _workers(args: argparse.Namespace) -> int:
    if getattr(args, "workers", None):
        return args.workers
    env = os.environ.get("EOCS_WORKERS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"EOCS_WORKERS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def _out_dir(args: argparse.Namespace) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# commands


def cmd_gen_dataset(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    if args.samples < 1:
        raise ConfigError(f"--samples must be >= 1, got {args.samples}")
    case = load_case(args.case)
    out = _out_dir(args)
    samples = gen_dataset(
        case,
        sample_count=args.samples,
        initial_outage_limit=args.initial_outages,
        k=args.k,
        seed=args.seed,
        workers=_workers(args),
    )
    dataset_path = out / "dataset.jsonl"
    write_dataset(samples, dataset_path)
    write_manifest(out, "gen-dataset", args, [args.case], [dataset_path], None, started)
    print(f"wrote {len(samples)} samples to {dataset_path}")
    return 0


def cmd_train_guide(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    config, snapshot = load_train_config(args.config)
    if args.seed is not None:
        config = TrainConfig(
            guide=config.guide, value=config.value, k_max=config.k_max,
            seed=args.seed, initial_outage_limit=config.initial_outage_limit,
        )
    case = load_case(args.case)
    dataset = read_dataset(args.dataset, case)
    out = _out_dir(args)
    params, accuracy, history = pretrain_guide(case, dataset, config)
    weights = out / "guide.json"
    nn.save_params(params, weights)
    report = out / "guide_report.csv"
    with open(report, "w", encoding="utf-8", newline="") as fh:
        fh.write("epoch,loss,verify_accuracy\n")
        for epoch, loss, acc in history:
            fh.write(f"{epoch},{loss!r},{acc!r}\n")
    write_manifest(out, "train-guide", args, [args.case, args.config, args.dataset], [weights, report], snapshot, started)
    print(f"guide test exact-match accuracy: {accuracy:.4f}")
    return 0


def cmd_train_value(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    config, snapshot = load_train_config(args.config)
    if args.seed is not None:
        config = TrainConfig(
            guide=config.guide, value=config.value, k_max=config.k_max,
            seed=args.seed, initial_outage_limit=config.initial_outage_limit,
        )
    case = load_case(args.case)
    guide = nn.load_params(args.guide, expect_n=case.n, expect_m=case.m)
    out = _out_dir(args)
    outputs = []

    checkpoint_every = args.checkpoint_every

    def checkpoint(rnd: int, params, target) -> None:
        if checkpoint_every and (rnd + 1) % checkpoint_every == 0:
            path = out / f"value_round_{rnd + 1}.json"
            nn.save_params(params, path)
            outputs.append(path)

    def progress(row) -> None:
        if not args.quiet:
            print(
                f"round {row.round}: guided={row.guided_fraction:.3f} "
                f"loss={row.loss:.6g} acc={row.accuracy:.3f} lr={row.learning_rate:.2e}",
                file=sys.stderr,
            )

    params, report = train_value(case, guide, config, ablation=args.ablation, progress=progress, checkpoint=checkpoint)
    weights = out / "value.json"
    nn.save_params(params, weights)
    report_path = out / "value_report.csv"
    write_train_report(report, report_path)
    outputs += [weights, report_path]
    write_manifest(out, "train-value", args, [args.case, args.config, args.guide], outputs, snapshot, started)
    print(f"final snapshot accuracy: {report.rounds[-1].accuracy:.4f}")
    return 0


def cmd_search(args: argparse.Namespace) -> int:
    case = load_case(args.case)
    relay = _parse_relay(case, args.relay)
    status = _parse_status(case, args.status)
    if args.method == "model":
        if not args.model:
            raise ConfigError("--method model requires --model WEIGHTS")
        params = nn.load_params(args.model, expect_n=case.n, expect_m=case.m)
        result = infer_eoc(params, case, status, relay, args.k, EnvConfig(k_max=args.k))
    elif args.method == "global":
        result = global_enumerate(case, status, relay, args.k, workers=_workers(args))
    elif args.method == "local":
        result = local_enumerate(case, status, relay, args.k, args.radius)
    else:
        ga_cfg = GAConfig(
            population=args.ga_population,
            generations=args.ga_generations,
            crossover_rate=0.9,
            mutation_rate=args.ga_mutation,
            penalty_weight=1000.0,
            seed=args.seed,
        )
        result = ga_search(case, status, relay, args.k, ga_cfg)

    trips = sorted(set(status.out_lines()) ^ set(result.eoc_status.out_lines()))
    payload = {
        "method": args.method,
        "relay": {"line": relay.line_id, "terminal": relay.terminal},
        "trips": trips,
        "eoc_status": "".join(str(b) for b in result.eoc_status.status),
        "i_max_pu": result.i_max,
        "evaluations": result.evaluated_count,
        "wall_time_s": result.wall_time_s,
    }
    if result.warning:
        payload["warning"] = result.warning
    if args.json:
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        print(f"method:      {args.method}")
        print(f"relay:       line {relay.line_id} ({relay.terminal} terminal, fault at bus {relay.fault_bus})")
        print(f"trip set:    {trips if trips else '(none; initial condition is extreme)'}")
        print(f"eoc status:  {payload['eoc_status']}")
        print(f"i_max:       {result.i_max:.9f} pu")
        print(f"evaluations: {result.evaluated_count}")
        print(f"wall time:   {result.wall_time_s * 1e3:.3f} ms")
        if result.warning:
            print(f"warning:     {result.warning}")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    case = load_case(args.case)
    params = nn.load_params(args.model, expect_n=case.n, expect_m=case.m)
    out = _out_dir(args)
    config = EvalConfig(
        scenario=args.scenario,
        n1=args.n1,
        n2=args.n2,
        k=args.k,
        seed=args.seed,
        initial_outage_limit=args.outage_limit,
    )
    report = run_scenario(params, case, config, workers=_workers(args))
    csv_path = out / "report.csv"
    timing_path = out / "report_timing.csv"
    write_eval_csv(report, csv_path, timing_path)
    summary_path = out / "summary.json"
    with open(summary_path, "w", encoding="utf-8") as fh:
        json.dump(eval_summary(report), fh, indent=2, sort_keys=True)
        fh.write("\n")
    timing_json = out / "timing.json"
    with open(timing_json, "w", encoding="utf-8") as fh:
        json.dump(
            {"mean_model_time_s": report.mean_model_time_s, "mean_oracle_time_s": report.mean_oracle_time_s},
            fh, indent=2, sort_keys=True,
        )
        fh.write("\n")
    write_manifest(out, "evaluate", args, [args.case, args.model], [csv_path, summary_path, timing_path, timing_json], None, started)
    print(json.dumps(eval_summary(report), indent=2, sort_keys=True))
    return 0


def cmd_benchmark(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    case = load_case(args.case)
    methods = tuple(part.strip() for part in args.methods.split(",") if part.strip())
    params = None
    inputs = [args.case]
    if "graph-d3qn" in methods:
        if not args.model:
            raise ConfigError("benchmarking graph-d3qn requires --model")
        params = nn.load_params(args.model, expect_n=case.n, expect_m=case.m)
        inputs.append(args.model)
    out = _out_dir(args)
    rows = benchmark(
        params, case, methods,
        sample_count=args.samples, k=args.k, seed=args.seed,
        local_radius=args.radius, initial_outage_limit=args.outage_limit,
    )
    table = out / "benchmark.csv"
    with open(table, "w", encoding="utf-8", newline="") as fh:
        fh.write("method,accuracy,e1_accuracy\n")
        for row in rows:
            fh.write(f"{row.method},{row.accuracy!r},{row.e1_accuracy!r}\n")
    timing = out / "benchmark_timing.csv"
    with open(timing, "w", encoding="utf-8", newline="") as fh:
        fh.write("method,mean_time_s\n")
        for row in rows:
            fh.write(f"{row.method},{row.mean_time_s!r}\n")
    write_manifest(out, "benchmark", args, inputs, [table, timing], None, started)
    for row in rows:
        print(f"{row.method:12s} accuracy={row.accuracy:.3f} 1%-acc={row.e1_accuracy:.3f} mean={row.mean_time_s * 1e3:.3f} ms")
    return 0


def cmd_selectivity(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    case = load_case(args.case)
    params = nn.load_params(args.model, expect_n=case.n, expect_m=case.m)
    relay = _parse_relay(case, args.relay)
    out = _out_dir(args)
    report = selectivity_check(
        params, case, relay, K=args.K, k=args.k,
        outage_limit=args.outage_limit, workers=_workers(args),
    )
    result_path = out / "selectivity.json"
    with open(result_path, "w", encoding="utf-8") as fh:
        json.dump(
            {
                "relay": {"line": relay.line_id, "terminal": relay.terminal},
                "K": args.K,
                "conditions": report.conditions,
                "satisfied": report.satisfied,
                "fraction": report.fraction,
                "failures": [
                    {"status": "".join(str(b) for b in st.status), "i_model": im, "i_oracle": io}
                    for st, im, io in report.failures
                ],
            },
            fh, indent=2, sort_keys=True,
        )
        fh.write("\n")
    write_manifest(out, "selectivity", args, [args.case, args.model], [result_path], None, started)
    print(f"selectivity: {report.satisfied}/{report.conditions} conditions satisfied ({report.fraction:.2%})")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eocsearch", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"eocsearch {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-dataset", help="generate enumeration-labeled samples")
    p.add_argument("case")
    p.add_argument("--samples", type=int, required=True)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--initial-outages", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_gen_dataset)

    p = sub.add_parser("train-guide", help="supervised guide-network pretraining")
    p.add_argument("case")
    p.add_argument("config")
    p.add_argument("--dataset", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_guide)

    p = sub.add_parser("train-value", help="guided/free value-network training")
    p.add_argument("case")
    p.add_argument("config")
    p.add_argument("--guide", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--ablation", choices=["no_guide", "no_dueling", "no_double"])
    p.add_argument("--checkpoint-every", type=int, default=0)
    p.add_argument("--quiet", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_value)

    p = sub.add_parser("search", help="find the extreme condition for one relay")
    p.add_argument("case")
    p.add_argument("--model")
    p.add_argument("--status", default="all")
    p.add_argument("--relay", required=True, metavar="LINE:from|to")
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--method", choices=["model", "global", "local", "ga"], default="global")
    p.add_argument("--radius", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ga-population", type=int, default=30)
    p.add_argument("--ga-generations", type=int, default=40)
    p.add_argument("--ga-mutation", type=float, default=0.05)
    p.add_argument("--json", action="store_true")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("evaluate", help="scenario accuracy against enumeration")
    p.add_argument("case")
    p.add_argument("--model", required=True)
    p.add_argument("--scenario", type=int, choices=[1, 2], default=1)
    p.add_argument("--n1", type=int, default=1000)
    p.add_argument("--n2", type=int, default=20)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--outage-limit", type=int, default=3)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("benchmark", help="compare methods on one sample set")
    p.add_argument("case")
    p.add_argument("--model")
    p.add_argument("--methods", default="graph-d3qn,global-enum,local-enum,ga")
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--radius", type=int, default=3)
    p.add_argument("--outage-limit", type=int, default=3)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("selectivity", help="pickup-margin check over initial conditions")
    p.add_argument("case")
    p.add_argument("--model", required=True)
    p.add_argument("--relay", required=True, metavar="LINE:from|to")
    p.add_argument("--K", type=float, default=1.2)
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--outage-limit", type=int, default=2)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_selectivity)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except (CaseError, nn.WeightFileError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return RUNTIME_ERROR


if __name__ == "__main__":
    sys.exit(main())
