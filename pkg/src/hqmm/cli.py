"""
Command-line interface::

    hqmm generate --generator "random-hmm(4,4,7)" --num 10 --length 1000 --out train.txt
    hqmm train --data train.txt --val val.txt --arch 4,4,2 --epochs 60 --out run.json
    hqmm eval --model model.json --data test.txt --burn-in 100 --metric da
    hqmm classify --splice splice.data --arch 4,4,1 --folds 5
    hqmm convert model.json --to khqmm --out lifted.json
    hqmm validate model.json
    hqmm tune --data train.txt --val val.txt --arch 2,4,1 --k 27
    hqmm speedup --baseline baseline.csv --target target.csv --fraction 1.0

Results are JSON on stdout; failures print a JSON error object on stderr
and exit with status 1 (usage errors exit with 2).
"""
import argparse
import json
import logging
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import io
from .data import generate_dataset, load_splice, parse_generator, reshape_sequences
from .errors import HqmmError
from .evaluation import baum_welch, cross_validate, description_accuracy, estimate_speedup
from .learning import TrainingConfig, hyperband_search, train
from .models import KHqmm, LHqmm, log_likelihoods, validate_oom_depth
from .representations import convert, khqmm_to_lhqmm, validate_channel


def _triple(text):
    try:
        parts = tuple(int(p) for p in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected n,s,w integers, got {text!r}") from None
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected n,s,w, got {text!r}")
    return parts


def _pair(text):
    try:
        lo, hi = (float(p) for p in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected lo,hi, got {text!r}") from None
    return lo, hi


def _add_training_flags(p):
    p.add_argument("--arch", type=_triple, required=True, help="n,s,w")
    p.add_argument("--config", help="key = value file of TrainingConfig fields")
    p.add_argument("--tau", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--batches", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--burn-in", type=int)
    p.add_argument("--update", choices=["wen-yin", "projection"])


def _config_from_args(args):
    config = io.load_config(args.config) if getattr(args, "config", None) else TrainingConfig()
    overrides = {
        "tau": args.tau,
        "alpha": args.alpha,
        "beta": args.beta,
        "batches": args.batches,
        "batch_size": args.batch_size,
        "epochs": args.epochs,
        "burn_in": args.burn_in,
        "seed": args.seed,
        "update_scheme": None if args.update is None else args.update.replace("-", "_"),
    }
    return replace(config, **{k: v for k, v in overrides.items() if v is not None}).validate()


def _dataset_burn_in(config, args, data):
    """Use the burn-in stored with the data unless one was given explicitly."""
    if args.burn_in is None and not args.config and data.burn_in:
        return replace(config, burn_in=data.burn_in)
    return config


def _load_sequences(path, s=None):
    return io.load_dataset(path, s)


def _emit(result, out=None):
    text = json.dumps(result, indent=2, default=_json_default)
    if out:
        Path(out).write_text(text)
    print(text)


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")


# --------------------------------------------------------------------------
# verbs
# --------------------------------------------------------------------------


def cmd_generate(args):
    source = io.load_model(args.model) if args.model else args.generator
    if source is None:
        raise HqmmError("one of --generator or --model is required")
    model, _ = parse_generator(source)
    ds = generate_dataset(model, args.num, args.length, args.seed)
    if args.generator:
        ds.provenance["generator"] = args.generator
    if args.model:
        ds.provenance["generator_file"] = args.model
    if args.sub_length:
        ds = reshape_sequences(ds, args.sub_length, args.burn_in or 0)
    io.save_dataset(ds, args.out)
    if args.save_generator:
        io.save_model(model, args.save_generator)
    _emit({"out": args.out, "sequences": len(ds), "s": ds.s, "provenance": ds.provenance})


def cmd_train(args):
    config = _config_from_args(args)
    n, s, w = args.arch
    data = _load_sequences(args.data, s)
    val = _load_sequences(args.val, s) if args.val else None
    config = _dataset_burn_in(config, args, data)
    run = train(data.sequences, args.arch, config, None if val is None else val.sequences)
    provenance = {"data": args.data, "validation": args.val, "seed": config.seed, "arch": list(args.arch)}
    io.save_run(run, args.out, provenance)
    model_path = args.model_out or str(Path(args.out).with_suffix("")) + ".model.json"
    io.save_model(run.model("best"), model_path)
    if args.trajectory:
        io.write_trajectory_csv(run, args.trajectory)
    _emit(
        {
            "out": args.out,
            "model": model_path,
            "best_epoch": run.best_epoch,
            "best_validation_da": run.best_validation_da,
            "max_feasibility_residual": max(run.feasibility),
            "epochs": len(run.records) - 1,
        }
    )


def cmd_eval(args):
    if args.run:
        run = io.load_run(args.run)
        out = args.trajectory_out or "trajectory.csv"
        with open(out, "w") as fh:
            fh.write("seconds,da\n")
            for _, _, da, sec in run.trajectory():
                fh.write(f"{float(sec)!r},{float(da)!r}\n")
        _emit({"trajectory": out, "points": len(run.records)})
        return
    model = io.load_model(args.model)
    data = _load_sequences(args.data, model.s)
    burn_in = args.burn_in if args.burn_in is not None else data.burn_in
    if args.metric == "da":
        score = description_accuracy(model, data.sequences, burn_in)
        result = {
            "metric": "da",
            "mean": score.mean,
            "std": score.std,
            "length": score.length,
            "s": score.s,
            "zero_probability": score.zero_probability,
        }
    else:
        lls = log_likelihoods(model, data.sequences, burn_in)
        result = {"metric": "loglik", "mean": float(np.mean(lls)), "per_sequence": lls}
    result.update({"model": args.model, "data": args.data, "burn_in": burn_in})
    _emit(result, args.out)


def cmd_classify(args):
    if args.splice:
        ds = load_splice(args.splice, args.ambiguous)
    else:
        ds = _load_sequences(args.data)
    if ds.labels is None:
        raise HqmmError("classification data must be labeled")
    k = args.k
    if args.model_type == "hmm":
        n = args.arch[0] if args.arch else 4

        def fit(seqs, fold, label):
            return baum_welch(seqs, n, ds.s, args.restarts, seed=args.seed + 97 * fold + label)[0]

    else:
        if args.arch is None:
            raise HqmmError("--arch is required for HQMM classification")
        config = _config_from_args(args)
        if args.burn_in is None:
            config = replace(config, burn_in=0)

        def fit(seqs, fold, label):
            cfg = replace(config, seed=config.seed + 97 * fold + label)
            return train(seqs, args.arch, cfg).model("best")

    result = cross_validate(
        ds.sequences, ds.labels, fit, k=k, seed=args.seed, burn_in=args.burn_in or 0, folds=args.folds,
        jobs=args.jobs,
    )
    report = result.to_dict()
    report.update(
        {
            "k": k,
            "folds_evaluated": len(result.fold_accuracies),
            "model_type": args.model_type,
            "arch": args.arch,
            "label_counts": ds.provenance.get("label_counts"),
            "counts_match_published": ds.provenance.get("counts_match_published"),
            "seed": args.seed,
        }
    )
    _emit(report, args.out)


def cmd_convert(args):
    model = io.load_model(args.model)
    out = convert(model, args.to)
    io.save_model(out, args.out)
    _emit({"from": model.family, "to": out.family, "out": args.out})


def cmd_validate(args):
    model = io.load_model(args.model)
    report = {"family": model.family}
    ok = True
    if isinstance(model, (KHqmm, LHqmm)):
        lhqmm = khqmm_to_lhqmm(model) if isinstance(model, KHqmm) else model
        report.update(validate_channel(lhqmm.L, mode="full-model"))
        ok = report["tp_residual"] < 1e-8 and report["cp_min_eig"] >= -1e-8 and report["hp_residual"] < 1e-8
    try:
        model.validate()
        report["invariants"] = "ok"
    except HqmmError as err:
        report["invariants"] = str(err)
        ok = False
    if model.family in ("standard_oom", "general_oom"):
        depth = validate_oom_depth(model, args.depth)
        report["bounded_check"] = {k: v for k, v in depth.items() if k != "violations"}
        report["bounded_check"]["violations"] = len(depth["violations"])
        ok = ok and not depth["violations"]
    report["valid"] = ok
    _emit(report, args.out)
    return 0 if ok else 1


def cmd_tune(args):
    config = _config_from_args(args)
    n, s, w = args.arch
    data = _load_sequences(args.data, s)
    val = _load_sequences(args.val, s)
    config = _dataset_burn_in(config, args, data)
    result = hyperband_search(
        data.sequences,
        args.arch,
        val.sequences,
        k=args.k,
        tau_range=args.tau_range,
        alpha_range=args.alpha_range,
        base_config=config,
        seed=args.seed,
        jobs=args.jobs,
    )
    report = {
        "best_config": asdict(result.best_config),
        "best_validation_da": result.best_run.best_validation_da,
        "schedule": result.schedule,
        "trials": result.trials,
    }
    if args.out:
        io.save_run(result.best_run, str(Path(args.out).with_suffix("")) + ".best_run.json")
    _emit(report, args.out)


def cmd_speedup(args):
    base = io.read_trajectory_csv(args.baseline)
    targ = io.read_trajectory_csv(args.target)
    est = estimate_speedup(base, targ, args.fraction)
    result = asdict(est)
    if est.infinite:
        result["speedup"] = "inf"
        result["baseline_time"] = "inf"
    _emit(result, args.out)


def build_parser():
    parser = argparse.ArgumentParser(prog="hqmm", description=__doc__.split("\n")[1].strip() or None)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out")
        return p

    p = common(sub.add_parser("generate", help="sample a dataset"))
    p.add_argument("--generator", help='e.g. "random-hmm(4,4,7)"')
    p.add_argument("--model", help="generating model JSON")
    p.add_argument("--num", type=int, default=20)
    p.add_argument("--length", type=int, default=3000)
    p.add_argument("--sub-length", type=int)
    p.add_argument("--burn-in", type=int)
    p.add_argument("--save-generator")
    p.set_defaults(func=cmd_generate)

    p = common(sub.add_parser("train", help="fit a K-HQMM"))
    _add_training_flags(p)
    p.add_argument("--data", required=True)
    p.add_argument("--val")
    p.add_argument("--model-out")
    p.add_argument("--trajectory", help="write the per-epoch CSV here")
    p.set_defaults(func=cmd_train)

    p = common(sub.add_parser("eval", help="score a model on data"))
    p.add_argument("--model")
    p.add_argument("--data")
    p.add_argument("--burn-in", type=int)
    p.add_argument("--metric", choices=["da", "loglik"], default="da")
    p.add_argument("--run", help="emit the DA trajectory of a training run instead")
    p.add_argument("--trajectory-out")
    p.set_defaults(func=cmd_eval)

    p = common(sub.add_parser("classify", help="per-label models with stratified CV"))
    p.add_argument("--data", help="labeled dataset file")
    p.add_argument("--splice", help="UCI splice.data file")
    p.add_argument("--ambiguous", choices=["drop-seqs", "strip-chars"], default="drop-seqs")
    p.add_argument("--model-type", choices=["hqmm", "hmm"], default="hqmm")
    p.add_argument("--k", type=int, default=5, help="number of CV partitions")
    p.add_argument("--folds", type=int, help="evaluate only the first FOLDS partitions")
    p.add_argument("--restarts", type=int, default=5)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--arch", type=_triple)
    for flag, kind in (("--tau", float), ("--alpha", float), ("--beta", float), ("--batches", int),
                       ("--batch-size", int), ("--epochs", int), ("--burn-in", int)):
        p.add_argument(flag, type=kind)
    p.add_argument("--config")
    p.add_argument("--update", choices=["wen-yin", "projection"])
    p.set_defaults(func=cmd_classify)

    p = common(sub.add_parser("convert", help="change model representation"))
    p.add_argument("model")
    p.add_argument("--to", required=True)
    p.set_defaults(func=cmd_convert)

    p = common(sub.add_parser("validate", help="check model invariants"))
    p.add_argument("model")
    p.add_argument("--depth", type=int, default=4, help="enumeration depth for OOM checks")
    p.set_defaults(func=cmd_validate)

    p = common(sub.add_parser("tune", help="Hyperband search over tau and alpha"))
    _add_training_flags(p)
    p.add_argument("--data", required=True)
    p.add_argument("--val", required=True)
    p.add_argument("--k", type=int, default=27)
    p.add_argument("--tau-range", type=_pair, default=(0.55, 0.95))
    p.add_argument("--alpha-range", type=_pair, default=(0.9, 0.99))
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_tune)

    p = common(sub.add_parser("speedup", help="extrapolated time-to-solution ratio"))
    p.add_argument("--baseline", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--fraction", type=float, default=1.0)
    p.set_defaults(func=cmd_speedup)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr)
    try:
        status = args.func(args)
    except (HqmmError, OSError, ValueError, KeyError) as err:
        print(json.dumps({"error": type(err).__name__, "message": str(err)}), file=sys.stderr)
        return 1
    return status or 0


if __name__ == "__main__":
    sys.exit(main())
