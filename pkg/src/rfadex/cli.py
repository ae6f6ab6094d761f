"""Command-line front end: generate / train / attack / detect / report.

Every command writes its primary artifact plus a JSON run manifest
(<out>.manifest.json) listing the command, config, seeds, inputs and
outputs, so pipelines can be replayed from manifests alone.  Exit codes:
0 success, 1 usage error, 2 data/model error, 3 internal invariant
violation.
"""

from . import _threads  # noqa: F401  (must precede numpy for RFADEX_THREADS)

import argparse
import dataclasses
import json
import math
import sys
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .attack import AttackConfig, attack_dataset
from .data import (
    Dataset,
    DatasetFormatError,
    SplitSpec,
    frames_to_dataset,
    read_dataset,
    split_dataset,
    write_dataset,
)
from .detect import (
    STAT_KINDS,
    build_stat_samples,
    missing_classes,
    report_rows,
    run_three_instance_experiment,
    SOURCE_ADVERSARIAL,
    SOURCE_LEGITIMATE,
)
from .model import (
    CheckpointError,
    TrainConfig,
    UnknownArchitectureError,
    evaluate,
    init_model,
    load_model,
    save_model,
    softmax,
    train,
    write_history_csv,
)
from .signal import ModClass, generate_frame
from .detect import softmax_entropy

DEFAULT_SEED = 7

_CLASS_ALIASES = {
    "bpsk": ModClass.BPSK,
    "qpsk": ModClass.QPSK,
    "psk8": ModClass.PSK8,
    "8psk": ModClass.PSK8,
    "qam16": ModClass.QAM16,
    "16qam": ModClass.QAM16,
}


class UsageError(Exception):
    pass


class DataModelError(Exception):
    """File-level or model/dataset consistency problems (exit code 2)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@dataclass
class RunManifest:
    command: str
    config: dict
    seeds: dict
    inputs: list
    outputs: list
    tool_version: str
    started_utc: str
    wall_clock_seconds: float


def _write_manifest(out_path: Path, manifest: RunManifest) -> Path:
    path = Path(str(out_path) + ".manifest.json")
    path.write_text(json.dumps(dataclasses.asdict(manifest), indent=2) + "\n")
    return path


def _manifest(command, args, seeds, inputs, outputs, started, t0) -> RunManifest:
    config = {k: v for k, v in vars(args).items() if k != "func"}
    return RunManifest(
        command=command,
        config={k: (str(v) if isinstance(v, Path) else v) for k, v in config.items()},
        seeds=seeds,
        inputs=[str(p) for p in inputs],
        outputs=[str(p) for p in outputs],
        tool_version=__version__,
        started_utc=started,
        wall_clock_seconds=round(time.monotonic() - t0, 3),
    )


def _parse_classes(spec: str) -> list[ModClass]:
    if spec.strip().lower() == "all":
        return list(ModClass)
    classes = []
    for name in spec.split(","):
        key = name.strip().lower()
        if key not in _CLASS_ALIASES:
            raise UsageError(f"unknown class name {name.strip()!r}")
        classes.append(_CLASS_ALIASES[key])
    if len(set(classes)) != len(classes):
        raise UsageError("duplicate class names")
    return classes


def _parse_snr(spec: str) -> tuple[float, float]:
    try:
        if ":" in spec:
            lo, hi = (float(s) for s in spec.split(":", 1))
        else:
            lo = hi = float(spec)
    except ValueError:
        raise UsageError(f"bad --snr value {spec!r} (expected LO:HI or a number)")
    if math.isnan(lo) or math.isnan(hi) or lo > hi:
        raise UsageError(f"bad --snr range {spec!r}")
    return lo, hi


def _parse_subsets(spec: str) -> list[int]:
    try:
        subsets = [int(s) for s in spec.split(",") if s.strip()]
    except ValueError:
        raise UsageError(f"bad --subset value {spec!r}")
    if not subsets or any(s < 1 for s in subsets):
        raise UsageError("--subset needs positive integers")
    return subsets


def _load_dataset(path) -> Dataset:
    path = Path(path)
    if not path.exists():
        raise DataModelError(f"dataset not found: {path}")
    return read_dataset(path)


def _load_model(path):
    path = Path(path)
    if not path.exists():
        raise DataModelError(f"model checkpoint not found: {path}")
    return load_model(path)


def _check_compatible(m, ds: Dataset) -> None:
    if len(ds) and int(ds.labels.max()) >= m.class_count:
        raise DataModelError(
            f"dataset labels up to {int(ds.labels.max())} exceed the model's "
            f"{m.class_count} classes"
        )


def cmd_generate(args) -> int:
    started = datetime.now(timezone.utc).isoformat()
    t0 = time.monotonic()
    classes = _parse_classes(args.classes)
    if args.per_class < 1:
        raise UsageError("--per-class must be >= 1")
    lo, hi = _parse_snr(args.snr)

    total = len(classes) * args.per_class
    master = np.random.default_rng(args.seed)
    frame_seeds = master.integers(0, 2**62, size=total)
    snrs = master.uniform(lo, hi, size=total)

    frames = []
    i = 0
    for cls in classes:
        for _ in range(args.per_class):
            frames.append(
                generate_frame(cls, float(snrs[i]), seed=int(frame_seeds[i]))
            )
            i += 1
    ds = frames_to_dataset(
        frames,
        provenance=f"synthetic classes={','.join(c.name for c in classes)} "
        f"per_class={args.per_class} snr={args.snr} seed={args.seed}",
    )
    out = Path(args.out)
    write_dataset(ds, out)
    for cls in classes:
        print(f"{cls.name}: {int(ds.class_counts()[int(cls)])} frames")
    print(f"wrote {len(ds)} records to {out}")
    _write_manifest(
        out,
        _manifest("generate", args, {"seed": args.seed}, [], [out], started, t0),
    )
    return 0


def cmd_train(args) -> int:
    started = datetime.now(timezone.utc).isoformat()
    t0 = time.monotonic()
    if not 0.0 < args.test_fraction < 1.0:
        raise UsageError("--test-fraction must be in (0, 1)")
    ds = _load_dataset(args.data)
    if len(ds) == 0:
        raise DataModelError(f"{args.data}: cannot train on an empty dataset")
    train_ds, test_ds = split_dataset(
        ds, SplitSpec(train_fraction=1.0 - args.test_fraction, seed=args.seed)
    )
    class_count = int(ds.labels.max()) + 1

    attack_cfg = None
    if args.adversarial is not None:
        if args.adversarial < 0:
            raise UsageError("--adversarial epsilon must be >= 0")
        attack_cfg = AttackConfig(kind="fgsm", epsilon=args.adversarial)
    cfg = TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch,
        learning_rate=args.lr,
        seed=args.seed,
        adversarial=attack_cfg,
        adversarial_fraction=args.adv_fraction,
    )
    m = init_model(seed=args.seed, class_count=class_count)
    m, history = train(m, train_ds, cfg, test_ds=test_ds)

    out = Path(args.out)
    save_model(m, out)
    history_path = Path(args.history) if args.history else Path(str(out) + ".history.csv")
    write_history_csv(history, history_path)

    clean = evaluate(m, test_ds)
    print(f"final test accuracy: {clean.accuracy:.4f} ({len(test_ds)} records)")
    if attack_cfg is not None:
        adv_eval = evaluate(m, attack_dataset(m, test_ds, attack_cfg))
        print(f"adversarial (eps={attack_cfg.epsilon}) test accuracy: {adv_eval.accuracy:.4f}")
    _write_manifest(
        out,
        _manifest(
            "train",
            args,
            {"seed": args.seed},
            [args.data],
            [out, history_path],
            started,
            t0,
        ),
    )
    return 0


def cmd_attack(args) -> int:
    started = datetime.now(timezone.utc).isoformat()
    t0 = time.monotonic()
    if args.eps < 0:
        raise UsageError("--eps must be >= 0")
    m = _load_model(args.model)
    ds = _load_dataset(args.data)
    _check_compatible(m, ds)
    if len(ds) == 0:
        raise DataModelError(f"{args.data}: cannot attack an empty dataset")

    target = None
    if args.target is not None:
        target = int(_parse_classes(args.target)[0])
    cfg = AttackConfig(
        kind=args.method,
        epsilon=args.eps,
        steps=args.steps,
        step_size=args.step_size,
        targeted=target is not None,
        target=target,
    )
    adv = attack_dataset(m, ds, cfg)
    out = Path(args.out)
    write_dataset(adv, out)

    pre = evaluate(m, ds).accuracy
    post = evaluate(m, adv).accuracy
    print(f"pre-attack accuracy:  {pre:.4f}")
    print(f"post-attack accuracy: {post:.4f} ({cfg.describe()})")
    print(f"accuracy drop: {100.0 * (pre - post):.1f} points")
    _write_manifest(
        out,
        _manifest(
            "attack", args, {"seed": None}, [args.model, args.data], [out], started, t0
        ),
    )
    return 0


def cmd_detect(args) -> int:
    started = datetime.now(timezone.utc).isoformat()
    t0 = time.monotonic()
    subsets = _parse_subsets(args.subset)
    if args.stat == "both":
        kinds = list(STAT_KINDS)
    elif args.stat in STAT_KINDS:
        kinds = [args.stat]
    else:
        raise UsageError(f"--stat must be papr, entropy or both, got {args.stat!r}")

    m = _load_model(args.model)
    legit_ds = _load_dataset(args.legit)
    adv_ds = _load_dataset(args.adv)
    _check_compatible(m, legit_ds)
    _check_compatible(m, adv_ds)
    if len(legit_ds) == 0 or len(adv_ds) == 0:
        raise DataModelError("detect needs non-empty legitimate and adversarial sets")

    rows = []
    for kind_idx, kind in enumerate(kinds):
        legit_groups = build_stat_samples(legit_ds, m, kind, source=SOURCE_LEGITIMATE)
        adv_groups = build_stat_samples(adv_ds, m, kind, source=SOURCE_ADVERSARIAL)
        for cls in missing_classes(legit_groups, m.class_count):
            print(f"notice: no legitimate records predicted as {cls.name}; skipped")
        for cls, legit_sample in sorted(legit_groups.items()):
            if cls not in adv_groups:
                print(f"notice: no adversarial records predicted as {cls.name}; skipped")
                continue
            for subset_size in subsets:
                try:
                    report = run_three_instance_experiment(
                        legit_sample,
                        adv_groups[cls],
                        subset_size,
                        seed=np.random.SeedSequence(
                            [args.seed, kind_idx, int(cls), subset_size]
                        ),
                    )
                except ValueError as exc:
                    raise DataModelError(str(exc))
                rows.extend(report_rows(kind, report))

    out = Path(args.out)
    with open(out, "w") as fh:
        fh.write("stat_kind,class,instance,subset_size,n,m,D,p_value\n")
        for r in rows:
            fh.write(
                f"{r['stat_kind']},{r['class']},{r['instance']},{r['subset_size']},"
                f"{r['n']},{r['m']},{r['D']:.6f},{r['p_value']:.6e}\n"
            )
    print(f"wrote {len(rows)} KS rows to {out}")
    _write_manifest(
        out,
        _manifest(
            "detect",
            args,
            {"seed": args.seed},
            [args.model, args.legit, args.adv],
            [out],
            started,
            t0,
        ),
    )
    return 0


def cmd_report(args) -> int:
    started = datetime.now(timezone.utc).isoformat()
    t0 = time.monotonic()
    m = _load_model(args.model)
    ds = _load_dataset(args.data)
    _check_compatible(m, ds)
    adv_ds = None
    if args.adv is not None:
        adv_ds = _load_dataset(args.adv)
        _check_compatible(m, adv_ds)

    out = Path(args.out)
    inputs = [args.model, args.data] + ([args.adv] if args.adv else [])

    if args.mode in ("simplex", "simplex3"):
        if args.mode == "simplex3" and m.class_count != 3:
            raise DataModelError(
                f"simplex3 reporting requires a 3-class model (train on exactly "
                f"BPSK,QPSK,PSK8); this checkpoint has {m.class_count} classes"
            )
        header = ["record_id", "label"] + [f"p{i+1}" for i in range(m.class_count)]
        header.append("source")
        with open(out, "w") as fh:
            fh.write(",".join(header) + "\n")
            rid = 0
            for source, dset in ((SOURCE_LEGITIMATE, ds), (SOURCE_ADVERSARIAL, adv_ds)):
                if dset is None or len(dset) == 0:
                    continue
                probs = evaluate(m, dset).probs
                for i in range(len(dset)):
                    ps = ",".join(f"{p:.6e}" for p in probs[i])
                    fh.write(f"{rid},{int(dset.labels[i])},{ps},{source}\n")
                    rid += 1
                mean_h = float(
                    np.mean([softmax_entropy(probs[i]) for i in range(len(dset))])
                )
                print(f"{source}: {len(dset)} records, mean softmax entropy {mean_h:.4f} nats")
    else:
        if len(ds) == 0:
            with open(out, "w") as fh:
                fh.write("metric,true_class,pred_class,value\n")
            print("empty dataset: wrote header-only summary")
        else:
            result = evaluate(m, ds)
            names = [c.name for c in ModClass if int(c) < m.class_count]
            with open(out, "w") as fh:
                fh.write("metric,true_class,pred_class,value\n")
                fh.write(f"accuracy,,,{result.accuracy:.6f}\n")
                for ti, tname in enumerate(names):
                    for pi, pname in enumerate(names):
                        fh.write(f"confusion,{tname},{pname},{int(result.confusion[ti, pi])}\n")
            print(f"accuracy {result.accuracy:.4f} over {len(ds)} records")

    _write_manifest(
        out, _manifest("report", args, {"seed": None}, inputs, [out], started, t0)
    )
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="rfadex", description=__doc__)
    parser.add_argument("--version", action="version", version=f"rfadex {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="synthesize a labeled I/Q dataset")
    p.add_argument("--classes", default="all", help="all or comma list (bpsk,qpsk,8psk,16qam)")
    p.add_argument("--per-class", type=int, default=1000)
    p.add_argument("--snr", default="14:20", help="SNR in dB, LO:HI range or single value")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train the classifier on a dataset file")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--batch", type=int, default=128)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--adversarial", type=float, default=None, metavar="EPS",
                   help="enable FGSM adversarial training at this epsilon")
    p.add_argument("--adv-fraction", type=float, default=0.5)
    p.add_argument("--history", default=None, help="history CSV path (default OUT.history.csv)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("attack", help="write an adversarial copy of a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--method", choices=["fgsm", "bim"], default="fgsm")
    p.add_argument("--steps", type=int, default=5, help="BIM iterations")
    p.add_argument("--step-size", type=float, default=None)
    p.add_argument("--target", default=None, help="class name for targeted mode")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("detect", help="run the three-instance KS experiments")
    p.add_argument("--model", required=True)
    p.add_argument("--legit", required=True)
    p.add_argument("--adv", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--subset", default="50,200", help="comma list of subset sizes")
    p.add_argument("--stat", default="both", help="papr, entropy or both")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("report", help="emit softmax simplex dumps or accuracy summaries")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--adv", default=None, help="optional adversarial dataset")
    p.add_argument("--mode", choices=["summary", "simplex", "simplex3"], default="summary")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (DataModelError, DatasetFormatError, CheckpointError,
            UnknownArchitectureError, FileNotFoundError, PermissionError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except AssertionError as exc:
        print(f"internal invariant violation: {exc}", file=sys.stderr)
        return 3


def entry() -> None:
    sys.exit(main(sys.argv[1:]))


if __name__ == "__main__":
    entry()
