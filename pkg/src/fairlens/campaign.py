"""End-to-end campaigns: data, model, seeds, generation and retraining in one run.

A campaign compares a seeding strategy against a baseline strategy under one
engine.  Every random choice comes from ``rng.derive_seed(master_seed, phase,
trial)``, so a config plus its master seed reproduces the report exactly;
wall-clock times are kept in a separate block that the canonical form omits.

Config files are plain ``key = value`` lines (``#`` starts a comment).  Keys
are the ``CampaignConfig`` field names; lists are comma separated, ``budget``
accepts ``S,G,L`` and ``model.<name>`` sets a model hyper-parameter.
"""
from __future__ import annotations

import configparser
import csv
import io
import json
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from fairlens import __version__
from fairlens.cluster import DBSCAN_EPS, DBSCAN_MIN_PTS
from fairlens.data import DataError, Dataset, load_csv, load_schema, split
from fairlens.discrimination import DEFAULT_CAP, idi_rate
from fairlens.evalharness import RETRAIN_EPOCHS, retrain_arms, voting_models
from fairlens.generation import ENGINES, GenBudget, run_engine
from fairlens.models import KINDS, f1_score, make_config, train
from fairlens.rng import derive_seed
from fairlens.seeding import STRATEGIES, ShapConfig, make_seeds
from fairlens.shapley import DEFAULT_BACKGROUND

REPORT_FORMAT = "fairlens-report"
REPORT_COLUMNS = (
    "dataset", "protected", "model", "engine", "strategy", "baseline", "trial",
    "seed_limit", "global_limit", "local_limit",
    "init_rate_strategy", "init_rate_baseline",
    "total_strategy", "total_baseline",
    "test_cases", "remaining_before", "remaining_strategy", "remaining_baseline",
    "f1_before", "f1_strategy", "f1_baseline",
)


class ConfigError(ValueError):
    pass


class CampaignError(RuntimeError):
    """A failure inside one pipeline phase; ``cause`` keeps the original error."""

    def __init__(self, phase: str, cause: BaseException):
        super().__init__(f"[{phase}] {type(cause).__name__}: {cause}")
        self.phase = phase
        self.cause = cause


@dataclass
class CampaignConfig:
    dataset: str = "census"
    schema: str | None = None
    protected: tuple[str, ...] = ("sex",)
    model: str = "MLP"
    model_params: dict = field(default_factory=dict)
    strategy: str = "iand"
    baseline: str = "random"
    engine: str = "aequitas"
    seed_limit: int = 100
    global_limit: int = 100
    local_limit: int = 100
    dbscan_eps: float = DBSCAN_EPS
    dbscan_min_pts: int = DBSCAN_MIN_PTS
    shap_mode: str = "auto"
    shap_background: int = DEFAULT_BACKGROUND
    cluster_k: int = 4
    trials: int = 1
    master_seed: int = 0
    train_fraction: float = 0.6
    retrain_epochs: int = RETRAIN_EPOCHS
    from_scratch: bool = False
    retrain_learning_rate: float | None = None
    evaluate: bool = True
    cap: int = DEFAULT_CAP

    def __post_init__(self):
        self.protected = tuple(self.protected)
        self.validate()

    def validate(self) -> None:
        if self.model not in KINDS:
            raise ConfigError(f"model must be one of {sorted(KINDS)}, got {self.model!r}")
        for key in ("strategy", "baseline"):
            if getattr(self, key) not in STRATEGIES:
                raise ConfigError(f"{key} must be one of {STRATEGIES}, got {getattr(self, key)!r}")
        if self.engine not in ENGINES:
            raise ConfigError(f"engine must be one of {sorted(ENGINES)}, got {self.engine!r}")
        if self.engine == "adf" and self.model != "MLP":
            raise ConfigError("the adf engine needs model = MLP")
        if not self.protected:
            raise ConfigError("protected must name at least one attribute")
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if not 0 < self.train_fraction < 1:
            raise ConfigError("train_fraction must lie strictly between 0 and 1")
        try:
            self.budget
            make_config(self.model, self.model_params)
        except (TypeError, ValueError) as e:
            raise ConfigError(str(e)) from None

    @property
    def budget(self) -> GenBudget:
        return GenBudget(self.seed_limit, self.global_limit, self.local_limit)

    @property
    def shap(self) -> ShapConfig:
        return ShapConfig(self.shap_mode, self.shap_background)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["protected"] = list(self.protected)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CampaignConfig":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        return cls(**d)


_FIELD_TYPES = {f.name: f.type for f in fields(CampaignConfig)}


def _coerce(key: str, text: str):
    kind = str(_FIELD_TYPES[key])
    text = text.strip()
    if key == "protected":
        return tuple(p.strip() for p in text.split(",") if p.strip())
    if "None" in kind and text.lower() in ("", "none"):
        return None
    if kind.startswith("bool"):
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key} expects a boolean, got {text!r}")
    try:
        if kind.startswith("int"):
            return int(text)
        if kind.startswith("float"):
            return float(text)
    except ValueError:
        raise ConfigError(f"{key} expects a number, got {text!r}") from None
    return text


def _param_value(text: str):
    text = text.strip()
    if "," in text:
        return [_param_value(p) for p in text.split(",")]
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


def apply_settings(values: dict, items) -> dict:
    """Fold ``(key, text)`` pairs into a dict of config values."""
    for key, text in items:
        key = key.strip()
        if key.startswith("model."):
            values.setdefault("model_params", {})[key[len("model."):]] = _param_value(text)
        elif key == "budget":
            parts = [p.strip() for p in text.split(",")]
            if len(parts) not in (2, 3):
                raise ConfigError("budget expects S,G,L or G,L")
            if len(parts) == 2:
                parts = [parts[0]] + parts
            values["seed_limit"], values["global_limit"], values["local_limit"] = (int(p) for p in parts)
        elif key in _FIELD_TYPES:
            values[key] = _coerce(key, text)
        else:
            raise ConfigError(f"unknown config key {key!r}")
    return values


def parse_config_text(text: str, overrides=()) -> CampaignConfig:
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#",), inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        parser.read_string("[campaign]\n" + text)
    except configparser.Error as e:
        raise ConfigError(f"bad config file: {e}") from None
    values = apply_settings({}, parser.items("campaign"))
    values = apply_settings(values, overrides)
    return CampaignConfig.from_dict(values)


def load_config(path, overrides=()) -> CampaignConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    return parse_config_text(text, overrides)


def config_to_text(cfg: CampaignConfig) -> str:
    lines = []
    for f in fields(CampaignConfig):
        v = getattr(cfg, f.name)
        if f.name == "model_params":
            lines += [f"model.{k} = {','.join(map(str, x)) if isinstance(x, (list, tuple)) else x}" for k, x in v.items()]
        elif f.name == "protected":
            lines.append(f"protected = {','.join(v)}")
        elif v is None:
            lines.append(f"{f.name} = none")
        else:
            lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"


def load_dataset(name: str, schema_path: str | None = None) -> Dataset:
    """A built-in dataset by name, or an encoded CSV read against a schema file."""
    from fairlens.datasets import BUILTIN, benchmark_dataset

    if schema_path is None:
        if name in BUILTIN or name == "bank":
            return benchmark_dataset(name)
        raise DataError(f"{name!r} is not a built-in dataset; give a schema file for CSV input")
    return load_csv(name, load_schema(schema_path).schema)


@dataclass
class CampaignReport:
    data: dict
    timing: dict = field(default_factory=dict)

    def canonical(self) -> str:
        return json.dumps(self.data, sort_keys=True, indent=1) + "\n"

    def to_json(self) -> str:
        return json.dumps({"report": self.data, "timing": self.timing}, sort_keys=True, indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "CampaignReport":
        d = json.loads(text)
        if d.get("report", {}).get("format") != REPORT_FORMAT:
            raise ValueError("not a fairlens report")
        return cls(d["report"], d.get("timing", {}))

    def rows(self) -> list[dict]:
        cfg = self.data["config"]
        base = {"dataset": cfg["dataset"], "protected": "+".join(cfg["protected"]), "model": cfg["model"],
                "engine": cfg["engine"], "strategy": cfg["strategy"], "baseline": cfg["baseline"],
                "seed_limit": cfg["seed_limit"], "global_limit": cfg["global_limit"], "local_limit": cfg["local_limit"]}
        out = [{**base, "trial": t["trial"], **_flat(t)} for t in self.data["trials"]]
        out.append({**base, "trial": "mean", **self.data["summary"]})
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, REPORT_COLUMNS, lineterminator="\n", extrasaction="ignore")
        w.writeheader()
        for row in self.rows():
            w.writerow({k: row.get(k, "") for k in REPORT_COLUMNS})
        return buf.getvalue()


def _flat(trial: dict) -> dict:
    s, b = trial["arms"]["strategy"], trial["arms"]["baseline"]
    row = {"init_rate_strategy": s["init_rate"], "init_rate_baseline": b["init_rate"],
           "total_strategy": s["total"], "total_baseline": b["total"]}
    ev = trial.get("eval")
    if ev:
        row.update(test_cases=ev["test_cases"], remaining_before=ev["remaining_before"],
                   remaining_strategy=s["remaining_after"], remaining_baseline=b["remaining_after"],
                   f1_before=ev["f1_before"], f1_strategy=s["f1_after"], f1_baseline=b["f1_after"])
    return row


def emit_report(report: CampaignReport, fmt: str, path) -> Path:
    if fmt not in ("json", "csv"):
        raise ValueError(f"format must be json or csv, got {fmt!r}")
    path = Path(path)
    text = report.to_json() if fmt == "json" else report.to_csv()
    path.write_text(text, encoding="utf-8")
    return path


def load_report(path) -> CampaignReport:
    return CampaignReport.from_json(Path(path).read_text(encoding="utf-8"))


class _Phase:
    """Context manager that times a phase and tags any error with its name."""

    def __init__(self, name: str, timing: dict):
        self.name, self.timing = name, timing

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        self.timing[self.name] = time.perf_counter() - self.t0
        if exc is not None and not isinstance(exc, CampaignError):
            raise CampaignError(self.name, exc) from exc
        return False


def _trial(cfg: CampaignConfig, t: int, ds, tr, te, model, voters) -> tuple[dict, dict]:
    timing: dict = {}
    master = cfg.master_seed
    arms = {"strategy": cfg.strategy, "baseline": cfg.baseline}
    seed_kw = {"k": cfg.cluster_k, "dbscan": (cfg.dbscan_eps, cfg.dbscan_min_pts), "shap_cfg": cfg.shap}
    out = {"trial": t, "arms": {}}
    results = []
    for role, strategy in arms.items():
        with _Phase(f"seeds.{role}", timing):
            seeds = make_seeds(strategy, model, ds, cfg.seed_limit, derive_seed(master, "seeds", t), cfg.protected, **seed_kw)
            rate, _ = idi_rate(model, seeds.seeds, cfg.protected, cfg.cap)
        with _Phase(f"generate.{role}", timing):
            res = run_engine(cfg.engine, model, seeds, cfg.protected, cfg.budget, derive_seed(master, "generate", t),
                             cap=cfg.cap)
        results.append(res)
        diag = {k: v for k, v in seeds.diagnostics.items() if isinstance(v, (int, float, str))}
        out["arms"][role] = {"strategy": strategy, "seeds": len(seeds), "init_rate": rate, "fill": seeds.fill_count,
                             "seed_diagnostics": diag, "total": res.total, "init": res.init_count,
                             "global": res.per_phase[0], "local": res.per_phase[1], "explored": res.explored}
        if "chiral_training" in seeds.timing:
            timing[f"seeds.{role}.chiral_training"] = seeds.timing["chiral_training"]
    if cfg.evaluate:
        with _Phase("eval", timing):
            outs = retrain_arms(model, tr, te, results, tuple(arms), cfg.protected, voters, cfg.retrain_epochs,
                                derive_seed(master, "retrain", t), cfg.from_scratch, cfg.retrain_learning_rate)
        out["eval"] = {"test_cases": int(len(outs[0].test_cases)), "remaining_before": outs[0].remaining_before,
                       "f1_before": outs[0].f1_before}
        for role, o in zip(arms, outs):
            out["arms"][role].update(added=o.added, remaining_after=o.remaining_after, f1_after=o.f1_after)
    return out, timing


def _summary(trials: list[dict]) -> dict:
    def mean(f):
        return statistics.fmean(f(t) for t in trials)

    s = {"init_rate_strategy": mean(lambda t: t["arms"]["strategy"]["init_rate"]),
         "init_rate_baseline": mean(lambda t: t["arms"]["baseline"]["init_rate"]),
         "total_strategy": mean(lambda t: t["arms"]["strategy"]["total"]),
         "total_baseline": mean(lambda t: t["arms"]["baseline"]["total"])}
    if "eval" in trials[0]:
        s.update(test_cases=mean(lambda t: t["eval"]["test_cases"]),
                 remaining_before=mean(lambda t: t["eval"]["remaining_before"]),
                 remaining_strategy=mean(lambda t: t["arms"]["strategy"]["remaining_after"]),
                 remaining_baseline=mean(lambda t: t["arms"]["baseline"]["remaining_after"]),
                 f1_before=mean(lambda t: t["eval"]["f1_before"]),
                 f1_strategy=mean(lambda t: t["arms"]["strategy"]["f1_after"]),
                 f1_baseline=mean(lambda t: t["arms"]["baseline"]["f1_after"]))
    return s


def run_campaign(cfg: CampaignConfig, threads: int = 1) -> CampaignReport:
    """Run every trial of ``cfg``; trials may run on up to ``threads`` workers without changing results."""
    timing: dict = {}
    master = cfg.master_seed
    with _Phase("data", timing):
        ds = load_dataset(cfg.dataset, cfg.schema)
        ds = ds.with_schema(ds.schema.with_protected(cfg.protected))
    with _Phase("split", timing):
        tr, te = split(ds, cfg.train_fraction, derive_seed(master, "split"))
    with _Phase("train", timing):
        model = train(cfg.model, tr, cfg.model_params, derive_seed(master, "train"))
        f1 = f1_score(model, te)
    voters = None
    if cfg.evaluate:
        with _Phase("voters", timing):
            voters = voting_models(model, tr, derive_seed(master, "voters"))
    workers = max(1, min(int(threads), cfg.trials))
    if workers == 1:
        done = [_trial(cfg, t, ds, tr, te, model, voters) for t in range(cfg.trials)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            done = list(pool.map(lambda t: _trial(cfg, t, ds, tr, te, model, voters), range(cfg.trials)))
    trials = [d[0] for d in done]
    timing["trials"] = [d[1] for d in done]
    data = {
        "format": REPORT_FORMAT,
        "tool_version": __version__,
        "config": cfg.to_dict(),
        "schema_fingerprint": ds.schema.fingerprint(),
        "dataset": {"name": ds.schema.name, "rows": len(ds), "train_rows": len(tr), "test_rows": len(te)},
        "model": {"kind": model.kind, "f1_test": f1},
        "trials": trials,
        "summary": _summary(trials),
    }
    return CampaignReport(data, timing)


__all__ = ["CampaignConfig", "CampaignReport", "CampaignError", "ConfigError", "run_campaign", "emit_report",
           "load_report", "load_config", "parse_config_text", "config_to_text", "load_dataset", "REPORT_COLUMNS"]
