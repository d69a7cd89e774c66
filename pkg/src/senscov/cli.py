"""Command-line interface.

Subcommands: dataset, train, fuzz, baseline, correlate, retrain, report.
Every run writes a self-describing ``<stem>.manifest.json`` next to its
outputs. Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

import argparse
import json
import os
import subprocess
import sys
from dataclasses import replace

from . import __version__
from .baselines import baseline_campaign, build_kmnc_profile
from .campaign_io import (dump_json, fault_csv_rows, iteration_csv_rows,
                          load_campaign, neuron_csv_rows, save_campaign,
                          stem_of, write_csv)
from .coverage import McmcConfig
from .datasets import load_csv, load_idx, write_digit_dataset
from .engine import accuracy, build_from_arch, sgd_train
from .experiments import correlate_experiment, retrain_experiment
from .fuzzer import FuzzConfig, run_campaign
from .model_io import load_model, save_model
from .perturb import parse_spec
from .rng import substream, STREAM_EXPERIMENT


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _git_describe():
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"],
                             capture_output=True, text=True, timeout=10)
        if out.returncode == 0:
            return out.stdout.strip()
    except (OSError, subprocess.TimeoutExpired):
        pass
    return "unknown"


def _write_manifest(out_path, command, seed, config):
    manifest = {
        "tool": "senscov",
        "version": __version__,
        "command": command,
        "seed": seed,
        "config": config,
        "git_describe": _git_describe(),
    }
    dump_json(manifest, stem_of(out_path) + ".manifest.json")


def _add_data_args(parser, prefix=""):
    parser.add_argument(f"--{prefix}dataset",
                        help="directory holding <split>-images.idx / <split>-labels.idx")
    parser.add_argument(f"--{prefix}images", help="IDX image file")
    parser.add_argument(f"--{prefix}labels", help="IDX label file")
    parser.add_argument(f"--{prefix}csv", help="numeric CSV, integer label last")
    parser.add_argument(f"--{prefix}csv-header", action="store_true",
                        help="skip the first CSV line")
    parser.add_argument(f"--{prefix}num-classes", type=int, default=10)


class CliRuntimeError(RuntimeError):
    pass


def _load_data(args, prefix="", split="test"):
    get = lambda name: getattr(args, (prefix + name).replace("-", "_"))
    if get("csv"):
        return load_csv(get("csv"), get("num-classes"), split=split,
                        header=get("csv-header"))
    if get("dataset"):
        return load_idx(os.path.join(get("dataset"), f"{split}-images.idx"),
                        os.path.join(get("dataset"), f"{split}-labels.idx"),
                        split=split, num_classes=get("num-classes"))
    if get("images") and get("labels"):
        return load_idx(get("images"), get("labels"), split=split,
                        num_classes=get("num-classes"))
    raise CliRuntimeError(
        f"need --{prefix}dataset, --{prefix}images/--{prefix}labels, or --{prefix}csv")


def _fuzz_config_args(parser):
    parser.add_argument("--coverage-target", type=float, default=1.0)
    parser.add_argument("--max-iterations", type=int, default=50)
    parser.add_argument("--inner-steps", type=int, default=10)
    parser.add_argument("--step-size", type=float, default=0.01)
    parser.add_argument("--batch", type=int, default=None,
                        help="inputs per iteration (default: whole dataset)")
    parser.add_argument("--k", type=int, default=1000, help="neuron sample size")
    parser.add_argument("--threshold", type=float, default=0.05,
                        help="MCSE convergence threshold t")
    parser.add_argument("--chains", type=int, default=2)
    parser.add_argument("--draws", type=int, default=1000)
    parser.add_argument("--warmup", type=int, default=500)
    parser.add_argument("--freeze-sample", action="store_true",
                        help="keep the iteration-0 neuron sample for later iterations")


def _fuzz_config(args, seed):
    return FuzzConfig(
        coverage_target=args.coverage_target,
        max_outer_iterations=args.max_iterations,
        inner_steps=args.inner_steps,
        step_size=args.step_size,
        batch_size=args.batch,
        seed=seed,
        sample_size=args.k,
        mcse_threshold=args.threshold,
        freeze_sample_after_first=args.freeze_sample,
        mcmc=McmcConfig(chains=args.chains, draws=args.draws, warmup=args.warmup),
    )


def build_parser():
    parser = _Parser(prog="senscov",
                     description="coverage-guided classifier testing via "
                                 "sensitivity convergence")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("dataset", help="render a synthetic digit dataset as IDX files")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--train", type=int, default=2000)
    p.add_argument("--test", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("train", help="train a model and save it as THM1")
    p.add_argument("--arch", required=True, help="mlp:784-64-10 or convnet")
    _add_data_args(p)
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="model output path")

    p = sub.add_parser("fuzz", help="run a sensitivity-coverage campaign")
    p.add_argument("--model", required=True)
    _add_data_args(p)
    p.add_argument("--perturb", required=True,
                   help="gaussian:sigma=0.03 | fgsm:eps=0.2 | pgd:eps=0.2,steps=10,"
                        "alpha=0.05 | bare family for random magnitudes")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="campaign JSON output")
    _fuzz_config_args(p)

    p = sub.add_parser("baseline", help="run an NC or KMNC selection campaign")
    p.add_argument("--model", required=True)
    _add_data_args(p)
    _add_data_args(p, prefix="train-")
    p.add_argument("--metric", required=True, choices=["nc", "kmnc"])
    p.add_argument("--perturb", required=True, help="perturbation family")
    p.add_argument("--budget", type=int, default=2000)
    p.add_argument("--nc-threshold", type=float, default=0.5)
    p.add_argument("--kmnc-k", type=int, default=1000)
    p.add_argument("--stall-limit", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("correlate", help="error-rate vs fault-count correlation")
    p.add_argument("--model", required=True)
    _add_data_args(p)
    p.add_argument("--family", required=True)
    p.add_argument("--seeds", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    _fuzz_config_args(p)

    p = sub.add_parser("retrain", help="fine-tune on detected faults")
    p.add_argument("--model", required=True)
    p.add_argument("--campaign", required=True, help="campaign JSON")
    _add_data_args(p, prefix="train-")
    _add_data_args(p)
    p.add_argument("--epochs", type=int, default=2)
    p.add_argument("--lr", type=float, default=0.02)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--save-model", help="optional path for the tuned model")

    p = sub.add_parser("report", help="export a campaign as CSV or JSON")
    p.add_argument("--campaign", required=True)
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--table", choices=["iterations", "faults", "neurons"],
                   default="iterations")
    p.add_argument("--out", help="output file (default: stdout)")

    return parser


def _cmd_dataset(args):
    paths = write_digit_dataset(args.out, args.train, args.test, args.seed)
    _write_manifest(os.path.join(args.out, "dataset"), "dataset", args.seed,
                    {"train": args.train, "test": args.test, "out": args.out})
    for split, (img, lab) in sorted(paths.items()):
        print(f"{split}: {img} {lab}")
    return 0


def _cmd_train(args):
    data = _load_data(args, split="train")
    model = build_from_arch(args.arch, args.seed)
    data = data.conform(model.input_shape)
    model = sgd_train(model, data, args.epochs, args.lr, args.batch, args.seed)
    save_model(model, args.out)
    _write_manifest(args.out, "train", args.seed, {
        "arch": args.arch, "epochs": args.epochs, "lr": args.lr,
        "batch": args.batch, "dataset_size": len(data),
    })
    acc = accuracy(model, data)
    print(f"trained {args.arch} on {len(data)} examples: train accuracy {acc:.3f}")
    print(f"saved {args.out}")
    return 0


def _cmd_fuzz(args):
    model = load_model(args.model)
    data = _load_data(args).conform(model.input_shape)
    family, spec = parse_spec(args.perturb)
    cfg = _fuzz_config(args, args.seed)
    if spec is not None:
        cfg = replace(cfg, magnitude=spec.magnitude)
        if family == "pgd":
            cfg = replace(cfg, pgd_steps=spec.steps, pgd_alpha=spec.alpha)
    result = run_campaign(model, data, family, cfg, flush_path=args.out)
    save_campaign(result, args.out)
    _write_manifest(args.out, "fuzz", args.seed, result.config)
    last = result.reports[-1]
    print(f"campaign: {len(result.reports)} iterations, coverage {last.coverage:.3f}, "
          f"{len(result.faults)} faults, {result.total_inputs} inputs "
          f"({result.termination})")
    print(f"saved {args.out}")
    return 0


def _cmd_baseline(args):
    model = load_model(args.model)
    data = _load_data(args).conform(model.input_shape)
    profile = None
    if args.metric == "kmnc":
        train = _load_data(args, prefix="train-", split="train").conform(model.input_shape)
        profile = build_kmnc_profile(model, train, args.kmnc_k)
    family, spec = parse_spec(args.perturb)
    if spec is not None:
        raise CliRuntimeError("baseline perturbs with random magnitudes; pass a bare family")
    result = baseline_campaign(model, data, family, args.metric, args.budget,
                               args.seed, nc_threshold=args.nc_threshold,
                               profile=profile, stall_limit=args.stall_limit)
    save_campaign(result, args.out)
    _write_manifest(args.out, "baseline", args.seed, result.config)
    print(f"{args.metric}: coverage {result.extra['final_coverage']:.4f}, "
          f"{result.extra['inputs_accepted']} accepted of {result.total_inputs} attempts, "
          f"{len(result.faults)} faults ({result.termination})")
    return 0


def _cmd_correlate(args):
    model = load_model(args.model)
    data = _load_data(args).conform(model.input_shape)
    reports = []
    timing = []
    for s in range(args.seeds):
        seed_s = int(substream(args.seed, STREAM_EXPERIMENT, 1000 + s).integers(2**63))
        rep = correlate_experiment(model, data, args.family, _fuzz_config(args, seed_s),
                                   seed_s)
        d = rep.to_dict()
        timing.append([row.pop("wall_clock") for row in d["rows"]])
        reports.append(d)
    pearsons = sorted(r["pearson"] for r in reports if r["pearson"] is not None)
    median = pearsons[len(pearsons) // 2] if pearsons else None
    out = {
        "kind": "correlation_aggregate",
        "family": args.family,
        "per_seed": reports,
        "median_pearson": median,
    }
    dump_json(out, args.out)
    dump_json({"per_seed_wall_clock": timing}, stem_of(args.out) + ".timing.json")
    _write_manifest(args.out, "correlate", args.seed,
                    {"family": args.family, "seeds": args.seeds})
    print(f"median pearson over {args.seeds} seeds: {median}")
    return 0


def _cmd_retrain(args):
    model = load_model(args.model)
    train = _load_data(args, prefix="train-", split="train").conform(model.input_shape)
    eval_ds = _load_data(args).conform(model.input_shape)
    manifest, faults = load_campaign(args.campaign)
    family = manifest["config"]["family"]
    magnitude = manifest["config"].get("magnitude")
    report, tuned = retrain_experiment(
        model, train, eval_ds, faults, (family, magnitude),
        args.epochs, args.lr, args.seed, batch_size=args.batch,
    )
    dump_json(report.to_dict(), args.out)
    _write_manifest(args.out, "retrain", args.seed, {
        "campaign": args.campaign, "epochs": args.epochs, "lr": args.lr,
    })
    if args.save_model:
        save_model(tuned, args.save_model)
    d = report.to_dict()
    print(f"perturbed accuracy {d['accuracy_before']:.4f} -> {d['accuracy_after']:.4f} "
          f"(gain {d['gain']:+.4f}); clean {d['clean_before']:.4f} -> {d['clean_after']:.4f}")
    return 0


def _cmd_report(args):
    manifest, _ = load_campaign(args.campaign)
    tables = {"iterations": iteration_csv_rows, "faults": fault_csv_rows,
              "neurons": neuron_csv_rows}
    rows = tables[args.table](manifest)
    if args.format == "json":
        header, body = rows[0], rows[1:]
        payload = [dict(zip(header, row)) for row in body]
        text = json.dumps(payload, sort_keys=True, indent=2) + "\n"
        if args.out:
            with open(args.out, "w", encoding="utf-8") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
    else:
        if args.out:
            with open(args.out, "w", encoding="utf-8") as fh:
                write_csv(rows, fh)
        else:
            write_csv(rows, sys.stdout)
    return 0


_COMMANDS = {
    "dataset": _cmd_dataset,
    "train": _cmd_train,
    "fuzz": _cmd_fuzz,
    "baseline": _cmd_baseline,
    "correlate": _cmd_correlate,
    "retrain": _cmd_retrain,
    "report": _cmd_report,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    try:
        return _COMMANDS[args.command](args)
    except CliRuntimeError as exc:
        print(f"senscov {args.command}: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"senscov {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
