"""``fairlens`` command line.

Each subcommand reads and writes files so the pipeline phases compose:
``ingest``/``synth`` -> ``train`` -> ``seeds`` -> ``generate`` -> ``eval``,
with ``run`` doing everything from one config file.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 runtime error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from fairlens import __version__
from fairlens.campaign import (CampaignConfig, CampaignError, ConfigError, apply_settings, config_to_text, emit_report,
                               load_config, load_dataset, run_campaign)
from fairlens.data import DataError, SchemaError, load_schema, preprocess_bin, read_raw, schema_to_text, split, write_csv
from fairlens.models.base import SchemaMismatch

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_RUNTIME = 0, 2, 3, 4
THREADS_ENV = "FAIRLENS_THREADS"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _threads(args) -> int:
    if args.threads is not None:
        n = args.threads
    else:
        env = os.environ.get(THREADS_ENV, "1")
        try:
            n = int(env)
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    if n < 1:
        raise ConfigError("thread count must be at least 1")
    return n


def _dataset(args):
    ds = load_dataset(args.data, getattr(args, "schema", None))
    prot = _protected(args)
    if prot:
        ds = ds.with_schema(ds.schema.with_protected(prot))
    return ds


def _protected(args) -> tuple[str, ...]:
    text = getattr(args, "protected", None)
    return tuple(p.strip() for p in text.split(",") if p.strip()) if text else ()


def _write(path, text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _kv(pairs) -> dict:
    out = {}
    for p in pairs or ():
        if "=" not in p:
            raise ConfigError(f"expected key=value, got {p!r}")
        k, v = p.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _model_params(pairs) -> dict:
    return apply_settings({}, [(f"model.{k}", v) for k, v in _kv(pairs).items()]).get("model_params", {})


def _load_model(path):
    from fairlens.models import load_model
    try:
        return load_model(path)
    except (OSError, KeyError, json.JSONDecodeError) as e:
        raise DataError(f"cannot read model {path}: {e}") from None


def _split(ds, args):
    from fairlens.rng import derive_seed
    return split(ds, args.train_fraction, derive_seed(args.seed, "split"))


# ------------------------------------------------------------ subcommands

def cmd_synth(args) -> int:
    from fairlens.datasets import make_synthetic
    ds = make_synthetic(args.attributes, args.rows, args.seed, args.bias, args.domain_size)
    write_csv(ds, args.out)
    if args.schema_out:
        Path(args.schema_out).write_text(schema_to_text(ds.schema), encoding="utf-8")
    print(f"wrote {len(ds)} rows over {ds.schema.n_attributes} attributes to {args.out}")
    return EXIT_OK


def cmd_ingest(args) -> int:
    from fairlens.datasets import builtin_binning, raw_path
    if args.raw is None:
        binning = builtin_binning(args.builtin)
        raw = raw_path(args.builtin)
    else:
        if args.schema is None:
            raise ConfigError("--raw needs --schema")
        binning, raw = load_schema(args.schema), args.raw
    ds = preprocess_bin(read_raw(raw, binning), binning)
    write_csv(ds, args.out)
    if args.schema_out:
        Path(args.schema_out).write_text(schema_to_text(ds.schema), encoding="utf-8")
    print(f"wrote {len(ds)} encoded rows to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    from fairlens.models import f1_score, save_model, train
    from fairlens.rng import derive_seed
    from fairlens.models import make_config
    try:
        config = make_config(args.kind, _model_params(args.param))
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from None
    ds = _dataset(args)
    tr, te = _split(ds, args)
    model = train(args.kind, tr, config, derive_seed(args.seed, "train"))
    save_model(model, args.out)
    print(json.dumps({"kind": args.kind, "f1_test": f1_score(model, te), "train_rows": len(tr),
                      "test_rows": len(te), "fingerprint": ds.schema.fingerprint()}))
    return EXIT_OK


def cmd_seeds(args) -> int:
    from fairlens.discrimination import idi_rate
    from fairlens.seeding import ShapConfig, make_seeds
    ds = _dataset(args)
    model = _load_model(args.model)
    model.check_dataset(ds)
    prot = _protected(args) or tuple(ds.schema.protected_names)
    s = make_seeds(args.strategy, model, ds, args.budget, args.seed, prot, k=args.k,
                   dbscan=(args.eps, args.min_pts), shap_cfg=ShapConfig(args.shap_mode, args.background))
    s.save(args.out)
    rate, _ = idi_rate(model, s.seeds, prot)
    print(json.dumps({"strategy": s.strategy, "seeds": len(s), "init_rate": rate, "fill": s.fill_count,
                      "timing": s.timing}))
    return EXIT_OK


def cmd_generate(args) -> int:
    from fairlens.discrimination import write_jsonl
    from fairlens.generation import GenBudget, run_engine
    from fairlens.seeding import SeedSet
    model = _load_model(args.model)
    seeds = SeedSet.load(args.seeds)
    prot = _protected(args) or tuple(model.schema.protected_names)
    res = run_engine(args.engine, model, seeds, prot, GenBudget.parse(args.budget), args.seed)
    _write(args.out, json.dumps(res.to_dict(), indent=1) + "\n")
    if args.jsonl:
        write_jsonl(res.idis, args.jsonl)
    if args.out not in (None, "-"):
        print(json.dumps({"total": res.total, "global": res.per_phase[0], "local": res.per_phase[1],
                          "explored": res.explored}))
    return EXIT_OK


def cmd_explain(args) -> int:
    from fairlens.shapley import explain, select_background
    ds = _dataset(args)
    model = _load_model(args.model)
    model.check_dataset(ds)
    if args.instance:
        X = np.array([[int(v) for v in args.instance.split(",")]], dtype=np.int64)
    else:
        X = np.array([json.loads(line)["instance"] for line in Path(args.instances).read_text().splitlines()
                      if line.strip()], dtype=np.int64)
    ds.schema.validate_rows(X)
    bg = select_background(ds, args.background, args.seed)
    out = [explain(model, x, bg, args.mode, args.coalitions, args.seed).to_dict(ds.schema.names) for x in X]
    _write(args.out, json.dumps(out, indent=1) + "\n")
    return EXIT_OK


def cmd_eval(args) -> int:
    from fairlens.evalharness import ArmConfig, head_to_head
    from fairlens.generation import GenBudget
    ds = _dataset(args)
    model = _load_model(args.model)
    model.check_dataset(ds)
    prot = _protected(args) or tuple(ds.schema.protected_names)
    tr, te = _split(ds, args)
    arms = []
    for text in (args.config_a, args.config_b):
        strategy, _, engine = text.partition(":")
        arms.append(ArmConfig(strategy, engine or "aequitas"))
    a, b = head_to_head(arms[0], arms[1], model, tr, te, prot, GenBudget.parse(args.budget), args.seed,
                        args.epochs, args.from_scratch, full_ds=ds)
    _write(args.out, json.dumps([a.to_dict(), b.to_dict()], indent=1) + "\n")
    if args.csv:
        header = "dataset,protected,test_cases,remaining_before,remaining_a,remaining_b,f1_before,f1_a,f1_b\n"
        row = (f"{ds.schema.name},{'+'.join(prot)},{len(a.test_cases)},{a.remaining_before},"
               f"{a.remaining_after},{b.remaining_after},{a.f1_before},{a.f1_after},{b.f1_after}\n")
        Path(args.csv).write_text(header + row, encoding="utf-8")
    return EXIT_OK


def cmd_compare(args) -> int:
    from fairlens.generation import GenBudget, compare_engines, comparison_csv
    ds = _dataset(args)
    model = _load_model(args.model)
    model.check_dataset(ds)
    prot = _protected(args) or tuple(ds.schema.protected_names)
    configs = []
    for item in args.configs.split(","):
        strategy, _, engine = item.strip().partition(":")
        configs.append((strategy, engine or "aequitas"))
    rows = compare_engines(configs, model, ds, prot, GenBudget.parse(args.budget), args.trials, args.seed)
    _write(args.out, comparison_csv(rows, ds.schema.name, prot))
    return EXIT_OK


def cmd_run(args) -> int:
    overrides = list(_kv(args.set).items())
    cfg = load_config(args.config, overrides) if args.config else CampaignConfig.from_dict(
        apply_settings({}, overrides))
    if args.print_config:
        sys.stdout.write(config_to_text(cfg))
        return EXIT_OK
    report = run_campaign(cfg, _threads(args))
    if args.out:
        emit_report(report, "json", args.out)
    else:
        sys.stdout.write(report.to_json())
    if args.csv:
        emit_report(report, "csv", args.csv)
    return EXIT_OK


# ------------------------------------------------------------ parser

def _common_data(p, with_split=False):
    p.add_argument("--data", required=True, help="built-in dataset name or encoded CSV path")
    p.add_argument("--schema", help="schema file for a CSV dataset")
    p.add_argument("--protected", help="comma-separated protected attributes (default: schema flags)")
    if with_split:
        p.add_argument("--train-fraction", type=float, default=0.6)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fairlens", description="Individual-discrimination testing for tabular classifiers.")
    parser.add_argument("--version", action="version", version=f"fairlens {__version__}")
    parser.add_argument("--threads", type=int, default=None,
                        help=f"worker cap (default from ${THREADS_ENV}, else 1); results do not depend on it")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="write a planted-bias synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--schema-out")
    p.add_argument("--rows", type=int, default=2000)
    p.add_argument("--attributes", type=int, default=8)
    p.add_argument("--domain-size", type=int, default=10)
    p.add_argument("--bias", type=float, default=1.5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="bin a raw CSV into an integer dataset")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--raw", help="raw CSV file (needs --schema)")
    src.add_argument("--builtin", choices=("census", "compas", "bank"), help="vendored raw file")
    p.add_argument("--schema")
    p.add_argument("--out", required=True)
    p.add_argument("--schema-out")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train", help="train a classifier and save it as JSON")
    _common_data(p, with_split=True)
    p.add_argument("--kind", choices=("LR", "SVM", "DT", "MLP"), default="MLP")
    p.add_argument("--param", action="append", metavar="KEY=VALUE", help="hyper-parameter override")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("seeds", help="select initial seeds")
    _common_data(p)
    p.add_argument("--model", required=True)
    p.add_argument("--strategy", choices=("random", "cluster", "iand"), default="iand")
    p.add_argument("--budget", type=int, default=100)
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--eps", type=float, default=0.09)
    p.add_argument("--min-pts", type=int, default=10)
    p.add_argument("--shap-mode", choices=("auto", "exact", "sampled"), default="auto")
    p.add_argument("--background", type=int, default=25)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_seeds)

    p = sub.add_parser("generate", help="generate IDIs from a seed file")
    p.add_argument("--engine", choices=("aequitas", "adf"), default="aequitas")
    p.add_argument("--model", required=True)
    p.add_argument("--seeds", required=True)
    p.add_argument("--protected")
    p.add_argument("--budget", default="100,100", help="G,L or S,G,L")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="-")
    p.add_argument("--jsonl", help="also write the IDI records as JSON lines")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("explain", help="Shapley values for instances")
    _common_data(p)
    p.add_argument("--model", required=True)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--instance", help="comma-separated integer instance")
    g.add_argument("--instances", help="JSON-lines file of records with an 'instance' field")
    p.add_argument("--mode", choices=("auto", "exact", "sampled"), default="auto")
    p.add_argument("--background", type=int, default=25)
    p.add_argument("--coalitions", type=int, default=512)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("eval", help="retrain head-to-head and count remaining IDIs")
    _common_data(p, with_split=True)
    p.add_argument("--model", required=True)
    p.add_argument("--config-a", default="iand:aequitas", help="strategy:engine")
    p.add_argument("--config-b", default="random:aequitas", help="strategy:engine")
    p.add_argument("--budget", default="100,100")
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--from-scratch", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="-")
    p.add_argument("--csv")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="repeat seeding+generation per configuration")
    _common_data(p)
    p.add_argument("--model", required=True)
    p.add_argument("--configs", default="random:aequitas,iand:aequitas", help="comma list of strategy:engine")
    p.add_argument("--budget", default="100,100")
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("run", help="run a full campaign from a config file")
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
    p.add_argument("--out", help="JSON report path (default stdout)")
    p.add_argument("--csv", help="also write the CSV report")
    p.add_argument("--print-config", action="store_true", help="print the resolved config and exit")
    p.set_defaults(func=cmd_run)
    return parser


def _exit_code(err: BaseException) -> int:
    if isinstance(err, CampaignError):
        err = err.cause
    if isinstance(err, ConfigError):
        return EXIT_CONFIG
    if isinstance(err, (DataError, SchemaError, SchemaMismatch, FileNotFoundError)):
        return EXIT_DATA
    return EXIT_RUNTIME


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        _threads(args)
        return args.func(args)
    except SystemExit as e:  # --help / --version
        return int(e.code or 0)
    except Exception as e:  # noqa: BLE001 - mapped to documented exit codes
        code = _exit_code(e)
        print(f"fairlens: error: {e}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
