"""Command-line entry point: ``tabgan {fit,sample,evaluate,accountant}``.

Exit codes: 0 success, 2 bad input (data, schema, bundle, condition or
parameters), 3 training failure, 4 privacy budget too small for one update.

Every command prints a single JSON document on stdout. All randomness derives
from ``--seed``; each module receives ``(seed + crc32(tag)) mod 2**32``.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from importlib import resources
from pathlib import Path

from . import __version__
from .bundle import load_bundle, save_bundle
from .dp import DEFAULT_DELTA, PrivacyLedger
from .errors import BudgetExhaustedBeforeFirstStep, InputError, SchemaError, TabGanError, TrainingError
from .schema import TableSchema, load_csv, write_csv
from .trainer import GanTrainer, TrainConfig, sample

EXIT_OK, EXIT_INPUT, EXIT_TRAINING, EXIT_BUDGET = 0, 2, 3, 4

# flag name -> TrainConfig field
_TRAIN_FLAGS = {
    "epochs": "epochs", "batch": "batch_size", "n_critic": "n_critic", "dp": "dp_enabled",
    "sigma": "sigma", "eps_target": "eps_target", "delta": "delta", "seed": "seed",
    "w_info": "w_info", "w_down": "w_down", "w_gen": "w_gen", "k_max": "k_max", "dtype": "dtype",
}


def published_schema(name: str) -> dict:
    """Load one of the JSON schemas shipped with the package (``evaluate_report``, ``accountant``, ``fit_summary``)."""
    text = resources.files("tabgan").joinpath("schemas", f"{name}.schema.json").read_text()
    return json.loads(text)


def _emit(doc: dict) -> None:
    json.dump(doc, sys.stdout, indent=2, allow_nan=False)
    sys.stdout.write("\n")


def train_config(args: argparse.Namespace) -> TrainConfig:
    """Defaults, overridden by ``--config`` JSON, overridden by explicit flags."""
    values: dict = {}
    if args.config:
        try:
            loaded = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise InputError("config file must hold a JSON object")
        unknown = set(loaded) - set(TrainConfig.__dataclass_fields__)
        if unknown:
            raise InputError(f"unknown config keys: {sorted(unknown)}")
        values.update(loaded)
    for flag, name in _TRAIN_FLAGS.items():
        v = getattr(args, flag, None)
        if v is not None:
            values[name] = v
    try:
        return TrainConfig(**values)
    except TypeError as exc:
        raise InputError(str(exc)) from exc


def _load(args, path_attr: str = "data"):
    schema = TableSchema.from_json(args.schema)
    return schema, load_csv(getattr(args, path_attr), schema)


def cmd_fit(args) -> int:
    cfg = train_config(args)
    _, data = _load(args)
    log_path = args.log or str(Path(args.bundle).with_suffix(".losses.ndjson"))
    cfg.log_path = log_path
    trainer = GanTrainer(data, cfg).fit()
    bundle = trainer.bundle()
    bundle.config["log_path"] = None  # keep the bundle independent of where the log went
    save_bundle(bundle, args.bundle)
    eps = delta = None
    if trainer.ledger is not None:
        eps, delta = trainer.ledger.report()
        print(f"privacy spent: eps={eps:.6g} delta={delta:g}", file=sys.stderr)
    _emit({"bundle": str(args.bundle), "loss_log": log_path, "generator_steps": trainer.steps_done,
           "critic_updates": trainer.critic_updates, "epsilon": eps, "delta": delta})
    return EXIT_OK


def parse_condition(text: str | None):
    if text is None:
        return None
    column, sep, value = text.partition("=")
    if not sep or not column:
        raise InputError(f"condition must look like column=value, got {text!r}")
    return column, value


def cmd_sample(args) -> int:
    bundle = load_bundle(args.bundle)
    cond = parse_condition(args.condition)
    if cond is not None and cond[1].startswith("#"):
        try:
            cond = (cond[0], int(cond[1][1:]))
        except ValueError:
            raise InputError(f"option index in {args.condition!r} is not an integer") from None
    data = sample(bundle, args.n, seed=args.seed if args.seed is not None else 0, condition=cond)
    write_csv(data, args.out)
    _emit({"out": str(args.out), "rows": data.row_count, "condition": args.condition})
    return EXIT_OK


def evaluate_report(real, synth, test=None, *, similarity: bool = True, privacy: bool = True,
                    utility: bool = True, privacy_rows: int | None = 2000, seed: int = 0) -> dict:
    from .metrics import privacy_report, similarity_report
    from .utility import utility_diff

    report = {"rows": {"real": real.row_count, "synthetic": synth.row_count,
                       "test": None if test is None else test.row_count},
              "similarity": None, "privacy": None, "utility": None}
    if similarity:
        report["similarity"] = similarity_report(real, synth).to_dict()
    if privacy:
        report["privacy"] = privacy_report(real, synth, max_rows=privacy_rows, seed=seed).to_dict()
    if utility and test is not None and real.schema.target is not None:
        report["utility"] = utility_diff(real, synth, test, seed=seed).to_dict()
    return report


def cmd_evaluate(args) -> int:
    schema, real = _load(args)
    synth = load_csv(args.synthetic, schema)
    test = load_csv(args.test, schema) if args.test else None
    seed = args.seed if args.seed is not None else 0
    report = evaluate_report(real, synth, test, similarity=not args.no_similarity,
                             privacy=not args.no_privacy, utility=not args.no_utility,
                             privacy_rows=args.privacy_rows or None, seed=seed)
    if args.figures:
        from .metrics import corr_diff
        from .plots import render_report_figures

        _, real_m, synth_m = corr_diff(real, synth, return_matrices=True)
        report["figures"] = render_report_figures(real, synth, real_m, synth_m, args.figures)
    if args.features_out:
        if test is None:
            raise InputError("--features-out needs --test")
        from .utility import export_features

        report["feature_files"] = export_features(real, synth, test, args.features_out)
    if args.out:
        Path(args.out).write_text(json.dumps(report, indent=2, allow_nan=False) + "\n")
    _emit(report)
    return EXIT_OK


def cmd_accountant(args) -> int:
    if (args.steps is None) == (args.eps_target is None):
        raise InputError("give exactly one of --steps or --eps-target")
    try:
        ledger = PrivacyLedger(args.sigma, args.batch, args.n_rows, args.delta)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    doc = {"sigma": args.sigma, "batch_size": args.batch, "n_rows": args.n_rows, "delta": args.delta,
           "q": ledger.q}
    if args.steps is not None:
        if args.steps < 0:
            raise InputError("--steps must be non-negative")
        steps = args.steps
    else:
        steps = ledger.max_steps(args.eps_target)
        doc.update(eps_target=args.eps_target, max_steps=steps)
    eps, lam = ledger.epsilon(steps)
    doc.update(steps=steps, epsilon=eps, best_lambda=lam)
    _emit(doc)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tabgan", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def data_args(sp, data_required=True):
        sp.add_argument("--data", required=data_required, help="real data CSV")
        sp.add_argument("--schema", required=True, help="schema JSON")

    fit = sub.add_parser("fit", help="train a model and write a bundle")
    data_args(fit)
    fit.add_argument("--bundle", required=True, help="output bundle path")
    fit.add_argument("--config", help="JSON file with training settings")
    fit.add_argument("--log", help="loss log (NDJSON); default <bundle>.losses.ndjson")
    fit.add_argument("--epochs", type=int)
    fit.add_argument("--batch", type=int)
    fit.add_argument("--n-critic", dest="n_critic", type=int)
    fit.add_argument("--dp", action="store_true", default=None, help="privatize critic updates")
    fit.add_argument("--sigma", type=float, help="DP noise multiplier")
    fit.add_argument("--eps-target", dest="eps_target", type=float)
    fit.add_argument("--delta", type=float, help=f"DP delta (default {DEFAULT_DELTA:g})")
    fit.add_argument("--w-info", dest="w_info", type=float)
    fit.add_argument("--w-down", dest="w_down", type=float)
    fit.add_argument("--w-gen", dest="w_gen", type=float)
    fit.add_argument("--k-max", dest="k_max", type=int)
    fit.add_argument("--dtype", choices=("float32", "float64"))
    fit.add_argument("--seed", type=int)
    fit.set_defaults(func=cmd_fit)

    smp = sub.add_parser("sample", help="generate rows from a bundle")
    smp.add_argument("--bundle", required=True)
    smp.add_argument("--n", type=int, required=True)
    smp.add_argument("--out", required=True, help="output CSV")
    smp.add_argument("--condition", help="column=value; value is a class label or #index")
    smp.add_argument("--seed", type=int)
    smp.set_defaults(func=cmd_sample)

    ev = sub.add_parser("evaluate", help="compare synthetic with real data")
    data_args(ev)
    ev.add_argument("--synthetic", required=True, help="synthetic CSV")
    ev.add_argument("--test", help="held-out real CSV for ML utility")
    ev.add_argument("--out", help="also write the JSON report here")
    ev.add_argument("--figures", help="directory for figures and association-matrix CSVs")
    ev.add_argument("--features-out", dest="features_out",
                    help="directory for model-ready feature CSVs (real train, synthetic train, real test)")
    ev.add_argument("--privacy-rows", type=int, default=2000,
                    help="subsample both sides to this many rows for DCR/NNDR (0 = all)")
    ev.add_argument("--no-similarity", action="store_true")
    ev.add_argument("--no-privacy", action="store_true")
    ev.add_argument("--no-utility", action="store_true")
    ev.add_argument("--seed", type=int)
    ev.set_defaults(func=cmd_evaluate)

    acc = sub.add_parser("accountant", help="privacy ledger arithmetic")
    acc.add_argument("--sigma", type=float, required=True)
    acc.add_argument("--batch", type=int, required=True)
    acc.add_argument("--n-rows", dest="n_rows", type=int, required=True)
    acc.add_argument("--delta", type=float, default=DEFAULT_DELTA)
    acc.add_argument("--steps", type=int)
    acc.add_argument("--eps-target", dest="eps_target", type=float)
    acc.set_defaults(func=cmd_accountant)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except BudgetExhaustedBeforeFirstStep as exc:
        print(f"BudgetExhaustedBeforeFirstStep: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except TrainingError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_TRAINING
    except (InputError, SchemaError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except TabGanError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
