"""Command-line entry point.

Subcommands: train, account, calibrate, sweep, bench, synth. Tabular output
is CSV with a header row, accounting results are JSON, and per-evaluation
training logs are JSONL. Exit codes: 0 success, 2 configuration error,
3 runtime error.
"""

import argparse
import csv
import json
import os
import sys

import jsonschema
import numpy as np

from . import bench as bench_mod
from . import kernels
from .accountant import (
    METHODS,
    account,
    calibrate_sigma,
    sweep_batch_noise,
    sweep_epsilon_methods,
)
from .data import (
    SynthConfig,
    load_criteo_tsv,
    synth_generate,
    write_manifest,
    write_tsv,
)
from .dpsgd import (
    DPConfig,
    NonPrivateConfig,
    OPTIMIZER_KINDS,
    OptimizerSpec,
    TrainReport,
    train,
)
from .errors import ConfigError, DpctrError
from .labeldp import RRConfig
from .model import DEFAULT_HIDDEN, ModelArch

RUN_CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["data", "mode", "seeds", "out_dir"],
    "properties": {
        "description": {"type": "string"},
        "data": {
            "type": "object",
            "additionalProperties": False,
            "minProperties": 1,
            "maxProperties": 1,
            "properties": {
                "synth": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["n"],
                    "properties": {
                        "n": {"type": "integer", "minimum": 1},
                        "task": {"enum": ["binary", "count"]},
                        "positive_rate": {"type": "number"},
                        "mean_count": {"type": "number"},
                        "vocab_sizes": {
                            "anyOf": [
                                {"type": "integer", "minimum": 1},
                                {"type": "array", "items": {"type": "integer", "minimum": 1}},
                            ]
                        },
                        "seed": {"type": "integer"},
                        "signal_std": {"type": "number"},
                    },
                },
                "criteo": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["path"],
                    "properties": {
                        "path": {"type": "string"},
                        "bucket_counts": {
                            "anyOf": [
                                {"type": "integer", "minimum": 1},
                                {"type": "array", "items": {"type": "integer", "minimum": 1}},
                            ]
                        },
                        "task": {"enum": ["binary", "count"]},
                        "limit": {"type": ["integer", "null"], "minimum": 1},
                    },
                },
            },
        },
        "arch": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "hidden": {"type": "array", "items": {"type": "integer", "minimum": 1}}
            },
        },
        "mode": {"enum": ["dp", "nonprivate"]},
        "dp": {
            "type": "object",
            "additionalProperties": False,
            "required": ["clip_norm", "expected_batch_size"],
            "properties": {
                "clip_norm": {"type": "number", "exclusiveMinimum": 0},
                "noise_multiplier": {"type": "number", "minimum": 0},
                "target_epsilon": {"type": "number", "exclusiveMinimum": 0},
                "expected_batch_size": {"type": "integer", "minimum": 1},
                "microbatch_size": {"type": "integer", "minimum": 1},
                "delta": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "accountant": {"enum": ["pld", "rdp"]},
            },
        },
        "labeldp_epsilon": {"type": "number", "exclusiveMinimum": 0},
        "batch_size": {"type": "integer", "minimum": 1},
        "epochs": {"type": "number", "exclusiveMinimum": 0},
        "steps": {"type": "integer", "minimum": 1},
        "optimizer": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": list(OPTIMIZER_KINDS)},
                "lr": {"type": "number", "exclusiveMinimum": 0},
                "momentum": {"type": "number", "minimum": 0},
                "weight_decay": {"type": "number", "minimum": 0},
            },
        },
        "eval_every": {"type": ["integer", "null"], "minimum": 1},
        "seeds": {"type": "array", "items": {"type": "integer"}, "minItems": 1},
        "out_dir": {"type": "string"},
    },
}


def load_run_config(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        config = json.load(fh)
    validate_run_config(config)
    return config


def validate_run_config(config: dict) -> None:
    try:
        jsonschema.validate(config, RUN_CONFIG_SCHEMA)
    except jsonschema.ValidationError as err:
        raise ConfigError(f"{err.json_path}: {err.message}") from None
    if (config.get("epochs") is None) == (config.get("steps") is None):
        raise ConfigError("$: exactly one of epochs/steps must be set")
    if config["mode"] == "nonprivate":
        if "dp" in config:
            raise ConfigError("$.dp: conflicts with mode 'nonprivate'")
        if "batch_size" not in config:
            raise ConfigError("$.batch_size: required in mode 'nonprivate'")
    else:
        if "dp" not in config:
            raise ConfigError("$.dp: required in mode 'dp'")
        if "batch_size" in config:
            raise ConfigError("$.batch_size: conflicts with mode 'dp'; use dp.expected_batch_size")
        if "labeldp_epsilon" in config:
            raise ConfigError("$.labeldp_epsilon: randomized response replaces DP-SGD; use mode 'nonprivate'")
        dp = config["dp"]
        if ("noise_multiplier" in dp) == ("target_epsilon" in dp):
            raise ConfigError("$.dp: exactly one of noise_multiplier/target_epsilon must be set")


def build_dataset(config: dict):
    source = config["data"]
    if "synth" in source:
        spec = dict(source["synth"])
        spec.setdefault("task", "binary")
        if spec["task"] == "count":
            spec.setdefault("mean_count", 2.0)
            spec.pop("positive_rate", None)
        return synth_generate(SynthConfig(**spec))
    spec = source["criteo"]
    return load_criteo_tsv(
        spec["path"],
        bucket_counts=spec.get("bucket_counts", 10_000),
        task=spec.get("task", "binary"),
        limit=spec.get("limit"),
    )


def _run_from_config(config: dict, n_train_hint: int) -> DPConfig | NonPrivateConfig:
    epochs = config.get("epochs")
    steps = config.get("steps")
    if config["mode"] == "nonprivate":
        return NonPrivateConfig(batch_size=config["batch_size"], epochs=epochs, steps=steps)
    dp = config["dp"]
    sigma = dp.get("noise_multiplier")
    if sigma is None:
        resolved = DPConfig(
            clip_norm=dp["clip_norm"],
            noise_multiplier=0.0,
            expected_batch_size=dp["expected_batch_size"],
            microbatch_size=dp.get("microbatch_size", 1),
            epochs=epochs,
            steps=steps,
            delta=dp.get("delta"),
            accountant=dp.get("accountant", "pld"),
        ).resolve(n_train_hint)
        sigma = calibrate_sigma(
            dp["target_epsilon"],
            resolved.delta,
            resolved.sampling_prob,
            resolved.steps,
            method=resolved.accountant,
        )
    return DPConfig(
        clip_norm=dp["clip_norm"],
        noise_multiplier=sigma,
        expected_batch_size=dp["expected_batch_size"],
        microbatch_size=dp.get("microbatch_size", 1),
        epochs=epochs,
        steps=steps,
        delta=dp.get("delta"),
        accountant=dp.get("accountant", "pld"),
    )


def cmd_train(args) -> int:
    config = load_run_config(args.config)
    if args.labeldp_eps is not None:
        config["labeldp_epsilon"] = args.labeldp_eps
        validate_run_config(config)
    dataset = build_dataset(config)
    n_train = (8 * dataset.n) // 10
    hidden = tuple(config.get("arch", {}).get("hidden", DEFAULT_HIDDEN))
    arch = ModelArch.for_dataset(dataset, hidden=hidden)
    run = _run_from_config(config, n_train)
    opt = OptimizerSpec(**config.get("optimizer", {}))
    out_dir = config["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    reports: list[TrainReport] = []
    for seed in config["seeds"]:
        label_privacy = None
        if "labeldp_epsilon" in config:
            label_privacy = RRConfig(epsilon=config["labeldp_epsilon"], seed=seed)
        report = train(
            dataset,
            arch,
            run,
            opt,
            eval_every=config.get("eval_every"),
            seed=seed,
            label_privacy=label_privacy,
        )
        report.write_jsonl(os.path.join(out_dir, f"seed_{seed}.jsonl"))
        report.params.save(os.path.join(out_dir, f"params_seed_{seed}"))
        reports.append(report)
    _write_summary(os.path.join(out_dir, "summary.csv"), reports)
    print(out_dir)
    return 0


def _write_summary(path: str, reports: list[TrainReport]) -> None:
    metric = "auc_loss" if reports[0].task == "binary" else "pll"
    values = np.asarray([r.final_test[metric] for r in reports])
    losses = np.asarray([r.final_test["loss"] for r in reports])
    epsilons = [r.final_test.get("epsilon") for r in reports]
    epsilon = epsilons[0] if epsilons[0] is not None else ""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["metric", "mean", "std", "loss_mean", "loss_std", "n_seeds", "epsilon"]
        )
        writer.writerow(
            [
                metric,
                repr(float(values.mean())),
                repr(float(values.std(ddof=1))) if len(values) > 1 else "0.0",
                repr(float(losses.mean())),
                repr(float(losses.std(ddof=1))) if len(losses) > 1 else "0.0",
                len(reports),
                repr(float(epsilon)) if epsilon != "" else "",
            ]
        )


def _emit_json(payload: dict, out: str | None) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _emit_csv(rows: list[dict], fieldnames: list[str], out: str | None) -> None:
    target = open(out, "w", encoding="utf-8", newline="") if out else sys.stdout
    try:
        writer = csv.DictWriter(target, fieldnames=fieldnames, extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _csv_value(row.get(k)) for k in fieldnames})
    finally:
        if out:
            target.close()


def _csv_value(value):
    if isinstance(value, float):
        return repr(value)
    return value


def _resolve_q(args) -> float:
    if args.q is not None:
        return args.q
    if args.n is not None and args.batch_size is not None:
        return args.batch_size / args.n
    raise ConfigError("give either --q or both --n and --batch-size")


def cmd_account(args) -> int:
    q = _resolve_q(args)
    epsilon = account(
        q, args.sigma, args.steps, args.delta, method=args.method, direction=args.direction
    )
    _emit_json(
        {
            "epsilon": epsilon,
            "delta": args.delta,
            "sigma": args.sigma,
            "q": q,
            "steps": args.steps,
            "method": args.method,
            "direction": args.direction,
        },
        args.out,
    )
    return 0


def cmd_calibrate(args) -> int:
    q = _resolve_q(args)
    sigma = calibrate_sigma(args.target_epsilon, args.delta, q, args.steps, method=args.method)
    achieved = account(q, sigma, args.steps, args.delta, method=args.method)
    _emit_json(
        {
            "epsilon": achieved,
            "target_epsilon": args.target_epsilon,
            "delta": args.delta,
            "sigma": sigma,
            "q": q,
            "steps": args.steps,
            "method": args.method,
            "direction": "both",
        },
        args.out,
    )
    return 0


def cmd_sweep(args) -> int:
    if args.eps_list:
        q = _resolve_q(args)
        rows = sweep_epsilon_methods(q, args.steps, args.delta, _floats(args.eps_list))
        _emit_csv(rows, ["epsilon", "sigma_pld", "sigma_rdp"], args.out)
        return 0
    if args.n is None or not args.batch_sizes:
        raise ConfigError("batch sweep needs --n and --batch-sizes")
    rows = sweep_batch_noise(
        args.n,
        args.target_epsilon,
        args.delta,
        _ints(args.batch_sizes),
        mode=args.mode.replace("-", "_"),
        epochs=args.epochs,
        steps=args.steps,
        method=args.method,
        clip_norm=args.clip_norm,
    )
    _emit_csv(rows, ["B", "sigma", "effective_noise_std"], args.out)
    return 0


def cmd_bench(args) -> int:
    arch = bench_mod.bench_arch(vocab=args.vocab, hidden=tuple(_ints(args.hidden)))
    backends = _strs(args.backends)
    for name in backends:
        if name != "auto" and name not in kernels.available_backends():
            raise ConfigError(f"kernel backend {name!r} not available; have {kernels.available_backends()}")
    results = bench_mod.run_bench(
        arch,
        _ints(args.batch_sizes),
        implementations=_strs(args.implementations),
        backends=backends,
        steps_per_window=args.steps_per_window,
        windows=args.windows,
        mem_cap_bytes=int(args.mem_cap_mb * (1 << 20)),
        microbatch_size=args.microbatch_size,
        seed=args.seed,
    )
    _emit_csv(
        [r.as_row() for r in results],
        [
            "implementation",
            "backend",
            "batch_size",
            "steps_per_sec_mean",
            "steps_per_sec_std",
            "peak_mem_bytes",
            "oom",
        ],
        args.out,
    )
    return 0


def cmd_synth(args) -> int:
    kwargs = {"n": args.n, "task": args.task, "vocab_sizes": args.vocab, "seed": args.seed}
    if args.task == "binary":
        kwargs["positive_rate"] = args.positive_rate
    else:
        kwargs["positive_rate"] = None
        kwargs["mean_count"] = args.mean_count
    dataset = synth_generate(SynthConfig(**kwargs))
    os.makedirs(args.out_dir, exist_ok=True)
    tsv_path = os.path.join(args.out_dir, "synth.tsv")
    write_tsv(dataset, tsv_path)
    write_manifest(dataset, tsv_path, os.path.join(args.out_dir, "manifest.json"))
    print(tsv_path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dpctr")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model from a JSON run config")
    p_train.add_argument("--config", required=True)
    p_train.add_argument(
        "--labeldp-eps",
        type=float,
        default=None,
        help="randomize training labels with this epsilon instead of DP-SGD noise",
    )
    p_train.set_defaults(func=cmd_train)

    def accounting_args(p, with_sigma: bool):
        p.add_argument("--q", type=float, default=None, help="sampling probability")
        p.add_argument("--n", type=int, default=None, help="dataset size (with --batch-size)")
        p.add_argument("--batch-size", type=int, default=None)
        if with_sigma:
            p.add_argument("--sigma", type=float, required=True)
        p.add_argument("--steps", type=int, required=True)
        p.add_argument("--delta", type=float, required=True)
        p.add_argument("--method", choices=METHODS, default="pld")
        p.add_argument("--out", default=None)

    p_account = sub.add_parser("account", help="epsilon for a trained mechanism")
    accounting_args(p_account, with_sigma=True)
    p_account.add_argument("--direction", choices=["remove", "add", "both"], default="both")
    p_account.set_defaults(func=cmd_account)

    p_cal = sub.add_parser("calibrate", help="smallest sigma reaching a target epsilon")
    accounting_args(p_cal, with_sigma=False)
    p_cal.add_argument("--target-epsilon", type=float, required=True)
    p_cal.set_defaults(func=cmd_calibrate)

    p_sweep = sub.add_parser("sweep", help="batch-size/noise sweeps and PLD-vs-RDP tables")
    p_sweep.add_argument("--n", type=int, default=None)
    p_sweep.add_argument("--q", type=float, default=None)
    p_sweep.add_argument("--batch-size", type=int, default=None)
    p_sweep.add_argument("--batch-sizes", default=None, help="comma-separated batch sizes")
    p_sweep.add_argument("--target-epsilon", type=float, default=1.0)
    p_sweep.add_argument("--delta", type=float, required=True)
    p_sweep.add_argument("--mode", choices=["fixed-epochs", "fixed-steps"], default="fixed-epochs")
    p_sweep.add_argument("--epochs", type=float, default=None)
    p_sweep.add_argument("--steps", type=int, default=None)
    p_sweep.add_argument("--method", choices=METHODS, default="pld")
    p_sweep.add_argument("--clip-norm", type=float, default=1.0)
    p_sweep.add_argument("--eps-list", default=None, help="comma-separated target epsilons")
    p_sweep.add_argument("--out", default=None)
    p_sweep.set_defaults(func=cmd_sweep)

    p_bench = sub.add_parser("bench", help="throughput/memory comparison of implementations")
    p_bench.add_argument("--batch-sizes", default="32,256,4096")
    p_bench.add_argument("--implementations", default="baseline,naive,ghost")
    p_bench.add_argument("--backends", default="auto", help="kernel backends, e.g. compiled,python")
    p_bench.add_argument("--vocab", type=int, default=2000)
    p_bench.add_argument("--hidden", default="256,256")
    p_bench.add_argument("--steps-per-window", type=int, default=2)
    p_bench.add_argument("--windows", type=int, default=5)
    p_bench.add_argument("--mem-cap-mb", type=float, default=1024.0)
    p_bench.add_argument("--microbatch-size", type=int, default=1)
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.add_argument("--out", default=None)
    p_bench.set_defaults(func=cmd_bench)

    p_synth = sub.add_parser("synth", help="generate a synthetic dataset (TSV + manifest)")
    p_synth.add_argument("--n", type=int, required=True)
    p_synth.add_argument("--task", choices=["binary", "count"], default="binary")
    p_synth.add_argument("--positive-rate", type=float, default=0.25)
    p_synth.add_argument("--mean-count", type=float, default=2.0)
    p_synth.add_argument("--vocab", type=int, default=100)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--out-dir", required=True)
    p_synth.set_defaults(func=cmd_synth)
    return parser


def _ints(text) -> list[int]:
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    return [int(v) for v in str(text).split(",") if v != ""]


def _floats(text) -> list[float]:
    return [float(v) for v in str(text).split(",") if v != ""]


def _strs(text) -> list[str]:
    return [v.strip() for v in str(text).split(",") if v.strip() != ""]


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except DpctrError as err:
        print(f"error: {err}", file=sys.stderr)
        return 3
    except (OSError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
