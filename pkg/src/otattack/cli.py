"""Command-line entry point.

Subcommands: gen-data, attack, transfer, sweep, selftest. Exit codes:
0 success, 2 configuration error, 3 dataset error, 4 at least one attack
run diverged (Sinkhorn NaN). A run with identical configuration rewrites
byte-identical outputs.
"""

import argparse
import os
import sys
from dataclasses import replace

from . import dataset as ds
from . import evaluate as ev
from . import pgm, reports
from .attack import AttackConfig
from .ot import SinkhornConfig

EXIT_OK = 0
EXIT_CONFIG_ERROR = 2
EXIT_DATASET_ERROR = 3
EXIT_DIVERGED = 4


class ConfigError(ValueError):
    pass


def load_config_file(path) -> dict:
    """Flat `key = value` configuration file; later CLI flags override."""
    values = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected key = value")
                key, value = (part.strip() for part in line.split("=", 1))
                values[key.replace("-", "_")] = value
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    return values


def _parse_scales(text) -> tuple:
    try:
        factors = tuple(float(tok) for tok in str(text).split(",") if tok.strip())
    except ValueError as exc:
        raise ConfigError(f"bad scale list {text!r}") from exc
    if not factors:
        raise ConfigError("scale list is empty")
    return factors


def _parse_int_list(text) -> list:
    try:
        return [int(tok) for tok in str(text).split(",") if tok.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad integer list {text!r}") from exc


def _add_attack_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epsilon", type=float, default=2.0 / 255.0)
    p.add_argument("--alpha", type=float, default=0.5 / 255.0)
    p.add_argument("--iters", type=int, default=10)
    p.add_argument("--lambda", dest="lam", type=float, default=0.05)
    p.add_argument("--objective", choices=["ot", "mean"], default="ot")
    p.add_argument("--scales", default="0.5,0.75,1.0,1.25,1.5,2")
    p.add_argument("--flip", choices=["always", "variant", "off"], default="variant")
    p.add_argument("--sinkhorn-thresh", type=float, default=1e-2)
    p.add_argument("--sinkhorn-max-iters", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", default=None, help="key = value preset file")


def _attack_config(args) -> AttackConfig:
    try:
        return AttackConfig(
            epsilon=args.epsilon,
            alpha=args.alpha,
            iters=args.iters,
            objective="mean_similarity" if args.objective == "mean" else "ot",
            lam=args.lam,
            scales=_parse_scales(args.scales),
            flip=args.flip,
            sinkhorn=SinkhornConfig(lam=args.lam, thresh=args.sinkhorn_thresh,
                                    max_iters=args.sinkhorn_max_iters),
            seed=args.seed,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _load_dataset(args) -> ds.Dataset:
    return ds.load_dataset(args.dataset)


def cmd_gen_data(args) -> int:
    data = ds.generate_dataset(args.n_images, args.captions_per_image,
                               (args.height, args.width), args.seed)
    manifest = ds.write_dataset(data, args.out)
    acc = ds.clean_tr_accuracy(data)
    print(f"wrote {data.n_images} images, {len(data.captions)} captions to {manifest}")
    print(f"clean TR R@1 under reference encoders: {100.0 * acc:.1f}%")
    return EXIT_OK


def cmd_attack(args) -> int:
    data = _load_dataset(args)
    cfg = _attack_config(args)
    adv_images, traces, diverged = ev.attack_dataset(data, args.source_seed, cfg)
    os.makedirs(args.out, exist_ok=True)
    for i, adv in enumerate(adv_images):
        pgm.write_image(os.path.join(args.out, f"adv_{i:04d}.pgm"), adv)
    report = ev.evaluate_on_target(data, adv_images, args.source_seed,
                                   args.source_seed, cfg, any_diverged=diverged)
    json_path, csv_path = reports.write_report(report, args.out)
    print(f"white-box report: {json_path}")
    _print_report_line(report)
    if diverged:
        print("error: at least one attack run diverged (Sinkhorn NaN)", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def _print_report_line(report) -> None:
    def fmt(v):
        return "n/a" if v is None else f"{v:.1f}%"
    print(f"  src={report.source_model_seed} tgt={report.target_model_seed} "
          f"TR-ASR={fmt(report.asr_tr)} ({report.n_attackable_tr} attackable) "
          f"IR-ASR={fmt(report.asr_ir)} ({report.n_attackable_ir} attackable) "
          f"mean feature deviation={report.mean_feature_deviation:.4f}")


def cmd_transfer(args) -> int:
    data = _load_dataset(args)
    cfg = _attack_config(args)
    sources = _parse_int_list(args.source_seeds)
    targets = _parse_int_list(args.target_seeds)
    if not sources or not targets:
        raise ConfigError("need at least one source and one target seed")
    os.makedirs(args.out, exist_ok=True)
    diverged = False
    comparison = {}
    for objective, tag in (("ot", "ot"), ("mean_similarity", "mean")):
        sub = replace(cfg, objective=objective)
        for report in ev.transfer_matrix(data, sources, targets, sub):
            out_dir = os.path.join(args.out, tag)
            reports.write_report(report, out_dir)
            diverged = diverged or report.any_diverged
            key = (report.source_model_seed, report.target_model_seed)
            comparison.setdefault(key, {})[tag] = (report.asr_tr, report.asr_ir)
            print(f"[{tag}]", end=" ")
            _print_report_line(report)
    rows = [
        (src, tgt,
         comparison[(src, tgt)]["ot"][0], comparison[(src, tgt)]["mean"][0],
         comparison[(src, tgt)]["ot"][1], comparison[(src, tgt)]["mean"][1])
        for src in sources for tgt in targets
    ]
    cmp_path = os.path.join(args.out, "objective_comparison.csv")
    reports.write_comparison(rows, cmp_path)
    print(f"objective comparison: {cmp_path}")
    if diverged:
        print("error: at least one attack run diverged (Sinkhorn NaN)", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def cmd_sweep(args) -> int:
    data = _load_dataset(args)
    cfg = _attack_config(args)
    sizes = _parse_int_list(args.sizes)
    curve = ev.augmentation_sweep(data, sizes, cfg, args.target_seed)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "sweep_curve.csv")
    reports.write_curve(curve, path)
    for size, value in curve:
        shown = "n/a" if value is None else f"{value:.1f}%"
        print(f"  set size {size:2d}: transfer TR-ASR {shown}")
    print(f"sweep curve: {path}")
    return EXIT_OK


def cmd_selftest(args) -> int:
    from . import selftest
    failures, total = selftest.run(verbose=True)
    print(f"selftest: {total - failures}/{total} checks passed")
    return EXIT_OK if failures == 0 else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="otattack",
        description="Optimal-transport guided adversarial attacks on toy dual encoders",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic image-caption dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--n-images", type=int, default=64)
    p.add_argument("--captions-per-image", type=int, default=5)
    p.add_argument("--height", type=int, default=16)
    p.add_argument("--width", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("attack", help="attack every dataset image (white-box report)")
    p.add_argument("--dataset", required=True, help="path to manifest.json")
    p.add_argument("--out", required=True)
    p.add_argument("--source-seed", type=int, default=1)
    _add_attack_flags(p)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("transfer", help="source x target transfer-ASR matrix")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--source-seeds", default="1,2")
    p.add_argument("--target-seeds", default="3,4,5")
    _add_attack_flags(p)
    p.set_defaults(func=cmd_transfer)

    p = sub.add_parser("sweep", help="transfer ASR vs augmented-set size")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--sizes", default="1,3,6,9,12")
    p.add_argument("--target-seed", type=int, default=3)
    _add_attack_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("selftest", help="run the built-in oracle and invariant checks")
    p.set_defaults(func=cmd_selftest)
    return parser


def _apply_config_file(args, argv) -> None:
    """Fill in values from the preset file for flags not given on the
    command line (explicit flags win)."""
    if getattr(args, "config", None) is None:
        return
    presets = load_config_file(args.config)
    passed = {tok.split("=", 1)[0].lstrip("-").replace("-", "_")
              for tok in argv if tok.startswith("--")}
    for key, value in presets.items():
        key = {"lambda": "lam"}.get(key, key)
        if key in passed or key == "lam" and "lambda" in passed:
            continue
        if not hasattr(args, key):
            raise ConfigError(f"unknown config key {key!r}")
        current = getattr(args, key)
        if isinstance(current, bool):
            setattr(args, key, value.lower() in ("1", "true", "yes"))
        elif isinstance(current, int):
            setattr(args, key, int(value))
        elif isinstance(current, float):
            setattr(args, key, float(value))
        else:
            setattr(args, key, value)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _apply_config_file(args, argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except ds.DatasetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATASET_ERROR


if __name__ == "__main__":
    sys.exit(main())
