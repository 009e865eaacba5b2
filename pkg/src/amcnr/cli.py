"""Command-line surface driving every pipeline stage end to end.

Exit codes: 0 success, 1 file/format/state errors, 2 usage errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from .datasets import (
    MODULATION_LABELS,
    build_modulation_dataset,
    build_periodic_dataset,
)
from .datastore import (
    FormatError,
    RunManifest,
    file_digest,
    parse_config_file,
    read_checkpoint,
    read_dataset,
    write_checkpoint,
    write_dataset,
)
from .evaluation import (
    accuracy_vs_snr,
    confusion,
    snr_gain,
    write_accuracy_csv,
    write_confusion_csv,
    write_stage_report_csv,
)
from .nn import Role, StateError
from .signals import ModulationScheme
from .training import (
    TrainConfig,
    pretrain,
    train_baseline_amc,
    train_baseline_nr_scratch,
    transfer_stage1,
    transfer_stage2,
)

_SCHEME_BY_NAME = {m.value: m for m in ModulationScheme}


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value config file; flags override it")
    for f in dataclasses.fields(TrainConfig):
        flag = "--" + f.name.replace("_", "-")
        p.add_argument(flag, type=type(f.default), default=None)


def _train_config(args) -> TrainConfig:
    values: dict = {}
    if args.config:
        raw = parse_config_file(args.config)
        fields = {f.name: f for f in dataclasses.fields(TrainConfig)}
        for key, val in raw.items():
            if key not in fields:
                raise ValueError(f"unknown config key: {key}")
            values[key] = type(fields[key].default)(val)
    for f in dataclasses.fields(TrainConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    return TrainConfig(**values)


def _write_manifest(command: str, config: dict, inputs: list, outputs: list, path) -> None:
    RunManifest(
        command=command,
        config=config,
        inputs={str(p): file_digest(p) for p in inputs},
        outputs=[str(p) for p in outputs],
    ).write(path)


def _cmd_gen_periodic(args) -> int:
    ds = build_periodic_dataset(
        count=args.count,
        length=args.length,
        snr_min=args.snr_min,
        snr_max=args.snr_max,
        max_segments=args.max_segments,
        seed=args.seed,
    )
    write_dataset(ds, args.out)
    _write_manifest(
        "gen-periodic",
        {k: getattr(args, k) for k in
         ("count", "length", "snr_min", "snr_max", "max_segments", "seed")},
        [args.out], [args.out], f"{args.out}.manifest.json",
    )
    return 0


def _cmd_gen_mod(args) -> int:
    schemes = tuple(_SCHEME_BY_NAME[s] for s in args.schemes.split(","))
    ds = build_modulation_dataset(
        schemes=schemes,
        count_per_scheme=args.count_per_scheme,
        length=args.length,
        sps=args.sps,
        snr_min=args.snr_min,
        snr_max=args.snr_max,
        max_segments=args.max_segments,
        seed=args.seed,
        phase=args.phase,
    )
    write_dataset(ds, args.out)
    _write_manifest(
        "gen-mod",
        {k: getattr(args, k) for k in
         ("schemes", "count_per_scheme", "length", "sps", "snr_min", "snr_max",
          "max_segments", "seed", "phase")},
        [args.out], [args.out], f"{args.out}.manifest.json",
    )
    return 0


def _finish_train(command: str, args, cfg: TrainConfig, store, report, inputs) -> int:
    write_checkpoint(store, args.out_ckpt)
    report_path = f"{args.out_ckpt}.report.csv"
    write_stage_report_csv(report_path, report)
    _write_manifest(
        command, dataclasses.asdict(cfg), inputs,
        [args.out_ckpt, report_path], f"{args.out_ckpt}.manifest.json",
    )
    return 0


def _cmd_pretrain(args) -> int:
    cfg = _train_config(args)
    dataset = read_dataset(args.data)
    store, report = pretrain(dataset, cfg)
    return _finish_train("pretrain", args, cfg, store, report, [args.data])


def _cmd_transfer1(args) -> int:
    cfg = _train_config(args)
    init = read_checkpoint(args.init_ckpt)
    if init.role is not Role.PRETRAIN:
        raise StateError(f"transfer1 needs a pre-training checkpoint, got {init.role}")
    dataset = read_dataset(args.data)
    store, report = transfer_stage1(init, dataset, cfg)
    return _finish_train(
        "transfer1", args, cfg, store, report, [args.init_ckpt, args.data]
    )


def _cmd_finetune(args) -> int:
    cfg = _train_config(args)
    init = read_checkpoint(args.init_ckpt)
    if init.role not in (Role.PRETRAIN, Role.DENOISER):
        raise StateError(f"finetune needs a denoiser checkpoint, got {init.role}")
    dataset = read_dataset(args.data)
    store, report = transfer_stage2(init, dataset, cfg)
    return _finish_train(
        "finetune", args, cfg, store, report, [args.init_ckpt, args.data]
    )


def _cmd_baseline(args) -> int:
    cfg = _train_config(args)
    dataset = read_dataset(args.data)
    if args.mode == "nr-scratch":
        store, report = train_baseline_nr_scratch(dataset, cfg)
    else:
        store, report = train_baseline_amc(dataset, cfg)
    return _finish_train(
        f"baseline:{args.mode}", args, cfg, store, report, [args.data]
    )


def _cmd_eval(args) -> int:
    store = read_checkpoint(args.ckpt)
    dataset = read_dataset(args.data)
    report_dir = Path(args.report_dir)
    report_dir.mkdir(parents=True, exist_ok=True)
    task = args.task
    if task is None:
        task = "classify" if store.role is Role.CLASSIFIER else "denoise"
    outputs = []
    if task == "classify":
        if store.role is not Role.CLASSIFIER:
            raise StateError(
                f"classification eval needs a classifier checkpoint, got {store.role}"
            )
        curve = accuracy_vs_snr(store, dataset)
        acc_path = report_dir / "accuracy_vs_snr.csv"
        write_accuracy_csv(acc_path, curve)
        cm = confusion(store, dataset, args.confusion_band)
        cm_path = report_dir / "confusion.csv"
        write_confusion_csv(cm_path, cm)
        outputs += [acc_path, cm_path]
        print(f"overall accuracy: {cm.accuracy:.4f}")
    else:
        if store.role not in (Role.PRETRAIN, Role.DENOISER):
            raise StateError(
                f"denoising eval needs a denoiser checkpoint, got {store.role}"
            )
        gain = snr_gain(store, dataset)
        gain_path = report_dir / "snr_gain.txt"
        gain_path.write_text(f"snr_gain_db={gain:.4f}\n")
        outputs.append(gain_path)
        print(f"snr gain: {gain:.4f} dB")
    _write_manifest(
        "eval", {"task": task}, [args.ckpt, args.data], outputs,
        report_dir / "manifest.json",
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="amcnr",
        description="Noise-reduction-guided modulation classification workbench",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-periodic", help="generate a periodic-signal dataset")
    p.add_argument("--count", type=int, default=10000)
    p.add_argument("--length", type=int, default=1280)
    p.add_argument("--snr-min", type=float, default=-10.0)
    p.add_argument("--snr-max", type=float, default=18.0)
    p.add_argument("--max-segments", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen_periodic)

    p = sub.add_parser("gen-mod", help="generate a modulation dataset")
    p.add_argument(
        "--schemes", default=",".join(m.value for m in MODULATION_LABELS),
        help="comma-separated scheme names",
    )
    p.add_argument("--count-per-scheme", type=int, default=1000)
    p.add_argument("--length", type=int, default=1280)
    p.add_argument("--sps", type=int, default=8)
    p.add_argument("--snr-min", type=float, default=-10.0)
    p.add_argument("--snr-max", type=float, default=18.0)
    p.add_argument("--max-segments", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--phase", type=float, default=None,
                   help="fixed carrier phase (radians); default: random per frame")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen_mod)

    p = sub.add_parser("pretrain", help="stage 0: pre-train the denoiser")
    p.add_argument("--data", required=True)
    p.add_argument("--out-ckpt", required=True)
    _add_train_flags(p)
    p.set_defaults(func=_cmd_pretrain)

    p = sub.add_parser("transfer1", help="stage 1: transfer denoiser to modulation data")
    p.add_argument("--init-ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out-ckpt", required=True)
    _add_train_flags(p)
    p.set_defaults(func=_cmd_transfer1)

    p = sub.add_parser("finetune", help="stage 2: joint fine-tuning of the classifier")
    p.add_argument("--init-ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out-ckpt", required=True)
    _add_train_flags(p)
    p.set_defaults(func=_cmd_finetune)

    p = sub.add_parser("baseline", help="ablation baselines")
    p.add_argument("--mode", choices=("nr-scratch", "amc"), required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out-ckpt", required=True)
    _add_train_flags(p)
    p.set_defaults(func=_cmd_baseline)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--report-dir", required=True)
    p.add_argument("--task", choices=("classify", "denoise"), default=None)
    p.add_argument(
        "--confusion-band", type=float, nargs=2, default=None,
        metavar=("LO", "HI"), help="SNR band (dB) for the confusion matrix",
    )
    p.set_defaults(func=_cmd_eval)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (FormatError, StateError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
