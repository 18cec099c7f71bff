"""JSON experiment configs, sweep expansion, per-run outputs and summaries.

A config names a dataset, a teacher, a student and the distillation
settings, plus a seed list and optional sweep axes. Every (cell, seed) run
writes ``metrics.csv``, ``metrics.jsonl``, ``student.dfnt`` and
``summary.json`` into its own directory, so runs never share files.
"""

import dataclasses
import itertools
import json
import logging
import math
import os
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import data as data_mod
from . import nets
from . import projector as projector_mod
from .diagnostics import to_csv, to_jsonl
from .errors import ConfigError, SpecError
from .nets import NetworkSpec
from .trainer import DistillConfig, accuracy, pretrain_teacher, run_distillation

log = logging.getLogger(__name__)

SCHEMA = "dforge/experiment-v1"
MAX_RUNS = 512
SWEEP_AXES = ("mode", "q", "projector_depth", "projector_width", "activation", "alpha")


@dataclass(frozen=True)
class BlobsData:
    kind: str = "blobs"
    classes: int = 10
    n_per_class: int = 100
    input_dim: int = 8
    spread: float = 1.0
    separation: float = 5.0
    modes_per_class: int = 1
    standardize: bool = True
    seed: int = None  # None: follow the run seed

    def load(self, run_seed, base_dir):
        seed = run_seed if self.seed is None else self.seed
        train, test = data_mod.make_blobs(
            self.classes, self.n_per_class, self.input_dim, self.spread, seed,
            separation=self.separation, modes_per_class=self.modes_per_class,
        )
        return data_mod.standardize(train, test) if self.standardize else (train, test)


@dataclass(frozen=True)
class IdxData:
    kind: str
    train_images: str
    train_labels: str
    test_images: str
    test_labels: str
    classes: int = None
    limit_train: int = None
    limit_test: int = None

    def load(self, run_seed, base_dir):
        def path(p):
            p = Path(p)
            return p if p.is_absolute() else Path(base_dir) / p

        train = data_mod.load_idx(path(self.train_images), path(self.train_labels), "train", self.classes)
        test = data_mod.load_idx(path(self.test_images), path(self.test_labels), "test", self.classes)
        classes = max(train.classes, test.classes)
        out = []
        for ds, limit in ((train, self.limit_train), (test, self.limit_test)):
            n = len(ds) if limit is None else min(limit, len(ds))
            out.append(data_mod.Dataset(ds.inputs[:, :n], ds.labels[:n], classes, ds.split, ds.provenance))
        return tuple(out)


@dataclass(frozen=True)
class TeacherSection:
    hidden: tuple
    feature_dim: int
    pool: int = 4
    activation: str = "relu"
    conv: dict = None
    epochs: int = 30
    batch_size: int = 64
    lr: float = 0.05
    lr_decay: float = 0.1
    decay_epochs: tuple = ()
    momentum: float = 0.9
    weight_decay: float = 5e-4

    def spec(self, input_dim, classes):
        return NetworkSpec(input_dim, self.hidden, self.feature_dim, classes, self.activation, self.pool, self.conv)

    def train_config(self, seed):
        return DistillConfig(
            epochs=self.epochs, batch_size=self.batch_size, lr=self.lr, lr_decay=self.lr_decay,
            decay_epochs=self.decay_epochs, momentum=self.momentum, weight_decay=self.weight_decay,
            seed=seed, mode="student-only",
        )


@dataclass(frozen=True)
class StudentSection:
    hidden: tuple
    feature_dim: int
    activation: str = "relu"
    conv: dict = None

    def spec(self, input_dim, classes):
        return NetworkSpec(input_dim, self.hidden, self.feature_dim, classes, self.activation, 1, self.conv)


@dataclass
class ExperimentConfig:
    name: str
    dataset: object
    teacher: TeacherSection
    student: StudentSection
    distill: dict
    seeds: list
    sweep: dict = field(default_factory=dict)
    cells: list = field(default_factory=list)
    dump_projectors: bool = False
    base_dir: str = "."

    def base_distill(self, seed, **overrides):
        return DistillConfig(**{**self.distill, **overrides, "seed": seed})

    def expand(self, use_sweep=True):
        """Ordered list of ``(cell_id, overrides)``."""
        out = []
        if use_sweep and self.sweep:
            axes = [a for a in SWEEP_AXES if a in self.sweep]
            for combo in itertools.product(*(self.sweep[a] for a in axes)):
                out.append(dict(zip(axes, combo)))
        if use_sweep:
            out.extend(dict(c) for c in self.cells)
        if not out:
            out.append({})
        seen, cells = set(), []
        for overrides in out:
            cid = cell_id(overrides)
            if cid not in seen:
                seen.add(cid)
                cells.append((cid, overrides))
        return cells


def cell_id(overrides):
    if not overrides:
        return "base"
    return "_".join(f"{k}-{overrides[k]}" for k in SWEEP_AXES if k in overrides)


def _section(cls, raw, where, exclude=()):
    if not isinstance(raw, dict):
        raise ConfigError(f"{where}: expected an object")
    allowed = {f.name for f in dataclasses.fields(cls)} - set(exclude)
    for key in raw:
        if key not in allowed:
            raise ConfigError(f"{where}.{key}: unknown field")
    required = [
        f.name for f in dataclasses.fields(cls)
        if f.name in allowed
        and f.default is dataclasses.MISSING
        and f.default_factory is dataclasses.MISSING
    ]
    for key in required:
        if key not in raw:
            raise ConfigError(f"{where}.{key}: required field missing")
    kwargs = {k: tuple(v) if isinstance(v, list) and k != "conv" else v for k, v in raw.items()}
    try:
        return cls(**kwargs)
    except (ConfigError, TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


TOP_LEVEL = {"schema", "name", "dataset", "teacher", "student", "distill", "seeds", "sweep", "cells", "dump_projectors"}


def parse_config(raw, base_dir="."):
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    for key in raw:
        if key not in TOP_LEVEL:
            raise ConfigError(f"{key}: unknown field")
    if raw.get("schema") != SCHEMA:
        raise ConfigError(f"schema: expected {SCHEMA!r}, got {raw.get('schema')!r}")
    for key in ("name", "dataset", "teacher", "student", "seeds"):
        if key not in raw:
            raise ConfigError(f"{key}: required field missing")

    ds_raw = raw["dataset"]
    kind = ds_raw.get("kind") if isinstance(ds_raw, dict) else None
    if kind == "blobs":
        dataset = _section(BlobsData, ds_raw, "dataset")
    elif kind == "idx":
        dataset = _section(IdxData, ds_raw, "dataset")
    else:
        raise ConfigError(f"dataset.kind: expected 'blobs' or 'idx', got {kind!r}")
    teacher = _section(TeacherSection, raw["teacher"], "teacher")
    student = _section(StudentSection, raw["student"], "student")

    distill = dict(raw.get("distill", {}))
    _section(DistillConfig, distill, "distill", exclude=("seed",))

    seeds = raw["seeds"]
    if not isinstance(seeds, list) or not seeds:
        raise ConfigError("seeds: must be a non-empty list of integers")
    if not all(isinstance(s, int) and not isinstance(s, bool) for s in seeds):
        raise ConfigError("seeds: must contain integers only")

    sweep = raw.get("sweep", {})
    if not isinstance(sweep, dict):
        raise ConfigError("sweep: expected an object")
    for axis, values in sweep.items():
        if axis not in SWEEP_AXES:
            raise ConfigError(f"sweep.{axis}: unknown sweep axis; allowed {list(SWEEP_AXES)}")
        if not isinstance(values, list) or not values:
            raise ConfigError(f"sweep.{axis}: must be a non-empty list")
    cells = raw.get("cells", [])
    if not isinstance(cells, list):
        raise ConfigError("cells: expected a list of objects")
    for i, cell in enumerate(cells):
        if not isinstance(cell, dict):
            raise ConfigError(f"cells[{i}]: expected an object")
        for axis in cell:
            if axis not in SWEEP_AXES:
                raise ConfigError(f"cells[{i}].{axis}: unknown sweep axis")

    cfg = ExperimentConfig(
        name=str(raw["name"]), dataset=dataset, teacher=teacher, student=student,
        distill=distill, seeds=list(seeds), sweep=dict(sweep), cells=list(cells),
        dump_projectors=bool(raw.get("dump_projectors", False)), base_dir=str(base_dir),
    )
    n_runs = len(cfg.expand()) * len(cfg.seeds)
    if n_runs > MAX_RUNS:
        raise ConfigError(f"sweep expands to {n_runs} runs, above the {MAX_RUNS}-run guard")
    # validate every cell against the distillation schema up front
    for cid, overrides in cfg.expand():
        try:
            cfg.base_distill(cfg.seeds[0], **overrides)
        except ConfigError as exc:
            raise ConfigError(f"sweep cell {cid}: {exc}") from None
    return cfg


def recipe_names():
    return sorted(p.name[:-5] for p in resources.files("dforge.recipes").iterdir() if p.name.endswith(".json"))


def load_config(path_or_name):
    """Load a config file, or a shipped recipe by bare name."""
    path = Path(path_or_name)
    if not path.exists() and path_or_name in recipe_names():
        text = resources.files("dforge.recipes").joinpath(f"{path_or_name}.json").read_text()
        return parse_config(json.loads(text), base_dir=".")
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path_or_name}: {exc}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path_or_name} is not valid JSON: {exc}") from None
    return parse_config(raw, base_dir=path.parent)


def _clean(v):
    if isinstance(v, float) and math.isnan(v):
        return None
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    if isinstance(v, np.generic):
        return v.item()
    return v


def _write_json(path, obj):
    Path(path).write_text(json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n")


def teacher_path(out, seed):
    return Path(out) / "teachers" / f"seed-{seed}" / "teacher.dfnt"


def pretrain_one(cfg, seed, out):
    """Train and checkpoint the teacher for ``seed``; returns its path."""
    train, test = cfg.dataset.load(seed, cfg.base_dir)
    spec = cfg.teacher.spec(train.input_dim, train.classes)
    path = teacher_path(out, seed)
    path.parent.mkdir(parents=True, exist_ok=True)
    history = []
    teacher = pretrain_teacher(spec, (train, test), cfg.teacher.train_config(seed), checkpoint=path, history=history)
    _write_json(path.parent / "history.json", history)
    _write_json(path.parent / "summary.json", {
        "name": cfg.name, "role": "teacher", "seed": seed,
        "train_acc": accuracy(teacher, train), "test_acc": accuracy(teacher, test),
    })
    return path


def run_one(cfg, cid, overrides, seed, out):
    """One distillation run; returns the summary dict."""
    train, test = cfg.dataset.load(seed, cfg.base_dir)
    teacher = nets.load(teacher_path(out, seed))
    dcfg = cfg.base_distill(seed, **overrides)
    student_spec = cfg.student.spec(train.input_dim, train.classes)
    result = run_distillation(teacher, student_spec, (train, test), dcfg)
    run_dir = Path(out) / cid / f"seed-{seed}"
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "metrics.csv").write_text(to_csv(result.records))
    (run_dir / "metrics.jsonl").write_text(to_jsonl(result.records))
    nets.save(result.student, run_dir / "student.dfnt")
    if cfg.dump_projectors and result.projectors is not None:
        projector_mod.save(result.projectors, run_dir / "projectors.dfpj")
    last = result.records[-1]
    summary = {
        "name": cfg.name,
        "cell": cid,
        "overrides": overrides,
        "seed": seed,
        "mode": dcfg.mode,
        "epochs": dcfg.epochs,
        "final_test_acc": last.test_acc,
        "best_test_acc": max(r.test_acc for r in result.records),
        "final_train_acc": last.train_acc,
        "final_mda": last.mda,
        "final_mbc": last.mbc,
        "final_diversity": last.diversity,
        "initial_diversity": result.records[0].diversity,
        "teacher_test_acc": accuracy(teacher, test),
    }
    _write_json(run_dir / "summary.json", summary)
    return summary


def _run_job(args):
    cfg, cid, overrides, seed, out = args
    try:
        return cid, seed, run_one(cfg, cid, overrides, seed, out), None
    except Exception as exc:  # report and keep the sweep going
        return cid, seed, None, f"{type(exc).__name__}: {exc}\n{traceback.format_exc()}"


def effective_jobs(jobs):
    if os.environ.get("DFORGE_DETERMINISTIC") == "1":
        return 1
    return max(1, int(jobs))


def run(cfg, out, seeds=None, jobs=1, use_sweep=True, teachers_only=False, stream=sys.stderr):
    """Execute every cell x seed. Returns the process exit code."""
    if seeds is not None:
        if not seeds:
            raise ConfigError("seeds: empty seed list")
        cfg = dataclasses.replace(cfg, seeds=list(seeds))
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    failures = []
    ready = []
    for seed in cfg.seeds:
        try:
            pretrain_one(cfg, seed, out)
            ready.append(seed)
        except Exception as exc:
            failures.append({"cell": "teacher", "seed": seed, "error": f"{type(exc).__name__}: {exc}"})
    if not teachers_only:
        jobs_list = [(cfg, cid, ov, seed, out) for cid, ov in cfg.expand(use_sweep) for seed in ready]
        n = effective_jobs(jobs)
        if n == 1:
            results = map(_run_job, jobs_list)
        else:
            pool = ProcessPoolExecutor(max_workers=n)
            results = pool.map(_run_job, jobs_list)
        for cid, seed, summary, err in results:
            if err is not None:
                failures.append({"cell": cid, "seed": seed, "error": err})
                print(f"FAILED {cid} seed={seed}: {err.splitlines()[0]}", file=stream)
            else:
                print(f"done {cid} seed={seed} test_acc={summary['final_test_acc']:.4f}", file=stream)
        if n != 1:
            pool.shutdown()
    if failures:
        _write_json(out / "errors.json", failures)
        print(f"{len(failures)} run(s) failed; see {out / 'errors.json'}", file=stream)
        return 1
    return 0


SUMMARY_FIELDS = (
    "name", "cell", "n", "acc_median", "acc_iqr", "best_acc_median",
    "mda_median", "mbc_median", "diversity_median",
)


def _find_summaries(path):
    path = Path(path)
    direct = path / "summary.json"
    if direct.is_file():
        found = [direct]
    else:
        found = sorted(p for p in path.rglob("summary.json") if "teachers" not in p.parts)
    return [p for p in found if json.loads(p.read_text()).get("role") != "teacher"]


def _median(values):
    vals = [v for v in values if v is not None and not (isinstance(v, float) and math.isnan(v))]
    return float(np.median(vals)) if vals else float("nan")


def summarize(paths):
    """Aggregate run summaries. Returns ``(csv_text, absent_paths)``."""
    groups = {}
    absent = []
    for p in paths:
        found = _find_summaries(p) if Path(p).exists() else []
        if not found:
            absent.append(str(p))
            continue
        for f in found:
            s = json.loads(f.read_text())
            groups.setdefault((s["name"], s["cell"]), []).append(s)
    lines = [",".join(SUMMARY_FIELDS)]
    for (name, cid) in sorted(groups):
        runs = groups[(name, cid)]
        accs = [r["final_test_acc"] for r in runs]
        q25, q75 = np.percentile(accs, [25, 75])
        divs = [float(np.mean(r["final_diversity"])) if r.get("final_diversity") else None for r in runs]
        row = [
            name, cid, str(len(runs)),
            _num(_median(accs)), _num(q75 - q25),
            _num(_median([r["best_test_acc"] for r in runs])),
            _num(_median([r["final_mda"] for r in runs])),
            _num(_median([r["final_mbc"] for r in runs])),
            _num(_median(divs)),
        ]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n", absent


def _num(v):
    v = float(v)
    return "nan" if math.isnan(v) else repr(v)
