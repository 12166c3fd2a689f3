"""Config-driven experiment pipelines comparing transfer-training methods.

A run is a pure function of (config, seed): sub-seeds for corpus
generation, splitting, initialization and shuffling are derived from
the run seed by hashing stage names, so a config plus a seed pins every
number in the emitted results.  Wall-clock time goes to the run log
only, never into results files, keeping those byte-reproducible.

Methods
-------
baseline      train on the target language's own data only
manual-map    relabel source data through hand-written phone maps, pool,
              train, fine-tune
phone-map     same, with phone maps learned from confusion counts
senone-map    relabel source data through learned senone maps (finest)
mtdnn-masked  shared-trunk multi-head training with per-frame loss
              masking, then prune to the target head and fine-tune
mtdnn-mapped  multi-head training with mapped targets on all heads,
              then prune and fine-tune
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import (
    MultiCorpus,
    SynthSpec,
    generate_synthetic,
    load_corpus,
    pool_and_relabel,
    save_corpus,
    save_ground_truth_maps,
    split_corpus,
)
from .data import FrameSet
from .errors import ConfigError, EmptyDataError, MissingBaselineError
from .mapping import (
    LabelMap,
    MapSet,
    accumulate_confusion,
    all_pairs_senone_maps,
    identity_map,
    load_manual_map,
    load_map_set,
    phone_map,
    realign_with_phone_map,
    save_map_set,
    senone_map,
)
from .multitask import (
    MTEpochStats,
    MTTrainConfig,
    MultiHeadNetwork,
    init_multihead,
    load_multihead,
    prune,
    save_multihead,
    train_multihead,
)
from .nnet import (
    EpochStats,
    Network,
    TrainConfig,
    finetune,
    init_network,
    load_network,
    predict_batch,
    save_network,
    train,
)

METHODS = ("baseline", "manual-map", "phone-map", "senone-map", "mtdnn-masked", "mtdnn-mapped")
MAP_METHODS = ("manual-map", "phone-map", "senone-map")
MT_METHODS = ("mtdnn-masked", "mtdnn-mapped")

CONFIG_VERSION = 1
ROW_FORMAT = "polymap-result-row"
REPORT_FORMAT = "polymap-report"

_DEFAULT_SPLIT = {"train": 0.8, "dev": 0.1, "test": 0.1}
_DEFAULT_HIDDEN = [64, 64, 64, 64]


def derive_seed(base_seed: int, label: str) -> int:
    """Stable sub-seed for a named pipeline stage."""
    digest = hashlib.sha256(f"{base_seed}:{label}".encode()).digest()
    return int.from_bytes(digest[:8], "big") % (2**63)


@dataclass
class RunPaths:
    """Artifact layout under one experiment's output directory."""

    root: Path

    def __post_init__(self) -> None:
        self.root = Path(self.root)

    @property
    def corpus(self) -> Path:
        return self.root / "corpus.npz"

    @property
    def truth_dir(self) -> Path:
        return self.root / "truth"

    @property
    def models_dir(self) -> Path:
        return self.root / "models"

    @property
    def baseline_model(self) -> Path:
        return self.models_dir / "baseline.npz"

    def mapper_model(self, language: str) -> Path:
        return self.models_dir / f"mapper_{language}.npz"

    @property
    def maps_dir(self) -> Path:
        return self.root / "maps"

    @property
    def pooled_model(self) -> Path:
        return self.models_dir / "pooled.npz"

    @property
    def mtdnn_model(self) -> Path:
        return self.models_dir / "mtdnn.npz"

    @property
    def pruned_model(self) -> Path:
        return self.models_dir / "pruned.npz"

    @property
    def final_model(self) -> Path:
        return self.models_dir / "final.npz"

    @property
    def rows_dir(self) -> Path:
        return self.root / "rows"

    def row(self, method: str, seed: int) -> Path:
        return self.rows_dir / f"{method}_seed{seed}.json"

    @property
    def logs_dir(self) -> Path:
        return self.root / "logs"

    def log(self, method: str, seed: int) -> Path:
        return self.logs_dir / f"{method}_seed{seed}.log"

    @property
    def report_text(self) -> Path:
        return self.root / "report.txt"

    @property
    def report_json(self) -> Path:
        return self.root / "report.json"


@dataclass
class ExperimentConfig:
    """Everything a run needs; see README for the JSON schema."""

    method: str
    target: str
    output_dir: Path
    sources: list[str] = field(default_factory=list)
    seed: int = 0
    corpus_path: Path | None = None
    synth: SynthSpec | None = None
    split_fractions: dict[str, float] = field(default_factory=lambda: dict(_DEFAULT_SPLIT))
    hidden_dims: list[int] = field(default_factory=lambda: list(_DEFAULT_HIDDEN))
    train: TrainConfig = field(default_factory=TrainConfig)
    mt_train: MTTrainConfig = field(default_factory=MTTrainConfig)
    finetune_epochs: int = 5
    finetune_lr: float = 0.0008
    manual_maps: dict[str, Path] = field(default_factory=dict)

    def validate(self) -> None:
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if not self.target:
            raise ConfigError("target language must be set")
        if self.target in self.sources:
            raise ConfigError(f"target {self.target!r} must not appear in sources")
        if len(set(self.sources)) != len(self.sources):
            raise ConfigError(f"duplicate source languages in {self.sources}")
        if self.method != "baseline" and not self.sources:
            raise ConfigError(f"method {self.method!r} needs at least one source language")
        if self.method == "manual-map":
            missing = [s for s in self.sources if s not in self.manual_maps]
            if missing:
                raise ConfigError(f"manual-map needs a map file for source(s) {missing}")
        if (self.corpus_path is None) == (self.synth is None):
            raise ConfigError("exactly one of corpus path or synth spec must be given")
        if set(self.split_fractions) != {"train", "dev", "test"}:
            raise ConfigError(
                f"split fractions need keys train/dev/test, got {sorted(self.split_fractions)}"
            )
        values = list(self.split_fractions.values())
        if any(v < 0 for v in values) or abs(sum(values) - 1.0) > 1e-9:
            raise ConfigError(f"split fractions must be non-negative and sum to 1, got {values}")
        if any(int(d) < 1 for d in self.hidden_dims):
            raise ConfigError(f"hidden dims must all be >= 1, got {self.hidden_dims}")
        if self.finetune_epochs < 0:
            raise ConfigError(f"finetune epochs must be >= 0, got {self.finetune_epochs}")
        if self.finetune_lr <= 0:
            raise ConfigError(f"finetune lr must be positive, got {self.finetune_lr}")


def _check_keys(raw: dict, allowed: set[str], context: str) -> None:
    unknown = sorted(set(raw) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown} in {context}")


def _train_config_from(raw: dict, defaults: TrainConfig, context: str) -> TrainConfig:
    _check_keys(raw, {"initial_lr", "epochs", "batch_size", "halve_every_epoch"}, context)
    return dataclasses.replace(defaults, **raw)


def _mt_config_from(raw: dict, context: str) -> MTTrainConfig:
    _check_keys(raw, {"initial_lr", "epochs", "batch_size", "halve_every_epoch"}, context)
    return dataclasses.replace(MTTrainConfig(), **raw)


def _synth_from(raw: dict, context: str) -> SynthSpec:
    allowed = {f.name for f in dataclasses.fields(SynthSpec)}
    _check_keys(raw, allowed, context)
    if "seed" not in raw:
        raw = {**raw, "seed": None}
    return SynthSpec(**raw)


def experiment_config_from_dict(raw: dict, base_dir: Path | str = ".") -> ExperimentConfig:
    """Build and fully validate a config before any compute happens."""
    base_dir = Path(base_dir)
    _check_keys(
        raw,
        {
            "version", "method", "target", "sources", "seed", "output_dir", "corpus",
            "split", "hidden_dims", "train", "mt_train", "finetune", "manual_maps",
        },
        "config",
    )
    if raw.get("version", CONFIG_VERSION) != CONFIG_VERSION:
        raise ConfigError(f"unsupported config version {raw.get('version')!r}")
    for key in ("method", "target", "output_dir"):
        if key not in raw:
            raise ConfigError(f"config is missing required key {key!r}")
    corpus = raw.get("corpus")
    if not isinstance(corpus, dict) or not corpus:
        raise ConfigError("config needs a 'corpus' object with 'path' or 'synth'")
    _check_keys(corpus, {"path", "synth"}, "corpus")
    corpus_path = None
    synth = None
    if "path" in corpus:
        corpus_path = base_dir / corpus["path"]
    if "synth" in corpus:
        synth = _synth_from(corpus["synth"], "corpus.synth")

    finetune_raw = raw.get("finetune", {})
    _check_keys(finetune_raw, {"epochs", "lr"}, "finetune")

    cfg = ExperimentConfig(
        method=raw["method"],
        target=raw["target"],
        output_dir=base_dir / raw["output_dir"],
        sources=list(raw.get("sources", [])),
        seed=int(raw.get("seed", 0)),
        corpus_path=corpus_path,
        synth=synth,
        split_fractions=dict(raw.get("split", _DEFAULT_SPLIT)),
        hidden_dims=[int(d) for d in raw.get("hidden_dims", _DEFAULT_HIDDEN)],
        train=_train_config_from(raw.get("train", {}), TrainConfig(), "train"),
        mt_train=_mt_config_from(raw.get("mt_train", {}), "mt_train"),
        finetune_epochs=int(finetune_raw.get("epochs", 5)),
        finetune_lr=float(finetune_raw.get("lr", 0.0008)),
        manual_maps={
            lang: base_dir / p for lang, p in raw.get("manual_maps", {}).items()
        },
    )
    cfg.validate()
    return cfg


def load_experiment_config(path: str | Path, seed: int | None = None) -> ExperimentConfig:
    path = Path(path)
    raw = json.loads(path.read_text())
    cfg = experiment_config_from_dict(raw, path.resolve().parent)
    if seed is not None:
        cfg = dataclasses.replace(cfg, seed=int(seed))
    return cfg


def config_hash(cfg: ExperimentConfig) -> str:
    """Hash of the experiment definition (seed and output paths excluded)."""
    payload = {
        "method": cfg.method,
        "target": cfg.target,
        "sources": cfg.sources,
        "corpus_path": str(cfg.corpus_path) if cfg.corpus_path else None,
        "synth": dataclasses.asdict(cfg.synth) if cfg.synth else None,
        "split": {k: cfg.split_fractions[k] for k in sorted(cfg.split_fractions)},
        "hidden_dims": cfg.hidden_dims,
        "train": dataclasses.asdict(cfg.train),
        "mt_train": dataclasses.asdict(cfg.mt_train),
        "finetune": {"epochs": cfg.finetune_epochs, "lr": cfg.finetune_lr},
        "manual_maps": {k: str(v) for k, v in sorted(cfg.manual_maps.items())},
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


def prepare_corpus(cfg: ExperimentConfig, cached_path: Path | None = None) -> MultiCorpus:
    """Load or generate the corpus and make sure it carries split tags."""
    if cached_path is not None and Path(cached_path).exists():
        corpus = load_corpus(cached_path)
    elif cfg.corpus_path is not None:
        corpus = load_corpus(cfg.corpus_path)
    else:
        spec = cfg.synth
        assert spec is not None
        if spec.seed is None:
            spec = dataclasses.replace(spec, seed=derive_seed(cfg.seed, "corpus"))
        corpus = generate_synthetic(spec)
    missing = [l for l in (cfg.target, *cfg.sources) if l not in corpus.languages]
    if missing:
        raise ConfigError(f"corpus has no language(s) {missing}; it has {corpus.languages}")
    if not corpus.splits:
        corpus = split_corpus(corpus, cfg.split_fractions, derive_seed(cfg.seed, "split"))
    return corpus


def frame_error_rate(net: Network, frames: FrameSet) -> float:
    """Percentage of frames whose predicted label differs from the reference."""
    if len(frames) == 0:
        raise EmptyDataError("cannot compute a frame error rate on zero frames")
    preds = predict_batch(net, frames.features)
    return 100.0 * float(np.mean(preds != frames.labels))


def _arch(corpus: MultiCorpus, cfg: ExperimentConfig, language: str) -> list[int]:
    return [corpus.feature_dim, *cfg.hidden_dims, corpus.senone_inventories[language].size]


def _write_train_log(path: Path, history: list) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = []
    for stats in history:
        if isinstance(stats, MTEpochStats):
            per_lang = " ".join(
                f"loss[{lang}]={loss:.6f}" for lang, loss in sorted(stats.per_language.items())
            )
            lines.append(f"epoch={stats.epoch} lr={stats.lr:.6g} {per_lang}")
        else:
            lines.append(f"epoch={stats.epoch} lr={stats.lr:.6g} loss={stats.mean_loss:.6f}")
    path.write_text("\n".join(lines) + "\n" if lines else "")


def train_language_net(
    corpus: MultiCorpus, cfg: ExperimentConfig, language: str, stage: str
) -> tuple[Network, list[EpochStats]]:
    """Train a per-language classifier with the baseline recipe."""
    net = init_network(_arch(corpus, cfg, language), derive_seed(cfg.seed, f"init:{stage}"))
    tcfg = dataclasses.replace(
        cfg.train, shuffle_seed=derive_seed(cfg.seed, f"shuffle:{stage}")
    )
    return train(net, corpus.subset(language, "train"), tcfg)


def build_source_maps(
    corpus: MultiCorpus, cfg: ExperimentConfig, mapper: Network
) -> dict[str, LabelMap]:
    """One (source -> target) map per source language, per the method."""
    maps: dict[str, LabelMap] = {}
    for source in cfg.sources:
        if cfg.method == "manual-map":
            maps[source] = load_manual_map(
                cfg.manual_maps[source],
                corpus.phone_inventories[source],
                corpus.phone_inventories[cfg.target],
            )
            continue
        counts = accumulate_confusion(
            mapper,
            corpus.subset(source, "train"),
            corpus.senone_inventories[cfg.target],
            corpus.senone_inventories[source],
        )
        if cfg.method == "senone-map":
            maps[source] = senone_map(counts)
        else:
            maps[source] = phone_map(
                counts, corpus.g_tables[source], corpus.g_tables[cfg.target]
            )
    return maps


def build_pooled_frames(
    corpus: MultiCorpus,
    cfg: ExperimentConfig,
    mapper: Network,
    maps: dict[str, LabelMap],
) -> FrameSet:
    """Pool relabeled source training data with the target training data.

    Senone maps relabel directly.  Phone-level maps (learned or manual)
    cannot produce senone labels on their own, so source frames are
    realigned within their mapped phone first and pooled unchanged.
    """
    target_train = corpus.subset(cfg.target, "train")
    pairs = []
    for source in cfg.sources:
        frames = corpus.subset(source, "train")
        label_map = maps[source]
        if label_map.source_inventory.kind == "phone":
            realigned = realign_with_phone_map(
                mapper, frames, label_map,
                corpus.g_tables[source], corpus.g_tables[cfg.target],
            )
            pairs.append((realigned, identity_map(corpus.senone_inventories[cfg.target])))
        else:
            pairs.append((frames, label_map))
    return pool_and_relabel(pairs, target_train)


# ---------------------------------------------------------------------------
# stages (each one also backs a CLI subcommand)


def stage_synth(cfg: ExperimentConfig, corpus: MultiCorpus | None = None) -> Path:
    """Materialize the corpus plus the generator's answer-key map files."""
    paths = RunPaths(cfg.output_dir)
    if corpus is None:
        corpus = prepare_corpus(cfg)
    save_corpus(corpus, paths.corpus)
    save_ground_truth_maps(corpus, paths.truth_dir)
    return paths.corpus


def stage_train_baseline(
    cfg: ExperimentConfig, corpus: MultiCorpus | None = None
) -> tuple[Network, Path]:
    paths = RunPaths(cfg.output_dir)
    if corpus is None:
        corpus = prepare_corpus(cfg, paths.corpus)
    net, history = train_language_net(corpus, cfg, cfg.target, "baseline")
    save_network(net, paths.baseline_model)
    _write_train_log(paths.logs_dir / "baseline_train.log", history)
    return net, paths.baseline_model


def stage_build_map(cfg: ExperimentConfig, corpus: MultiCorpus | None = None) -> Path:
    """Build and persist the method's maps; returns the manifest path."""
    paths = RunPaths(cfg.output_dir)
    if corpus is None:
        corpus = prepare_corpus(cfg, paths.corpus)
    if cfg.method == "mtdnn-mapped":
        languages = [cfg.target, *cfg.sources]
        nets: dict[str, Network] = {}
        for lang in languages:
            net, history = train_language_net(corpus, cfg, lang, f"mapper:{lang}")
            save_network(net, paths.mapper_model(lang))
            _write_train_log(paths.logs_dir / f"mapper_{lang}_train.log", history)
            nets[lang] = net
        map_set = all_pairs_senone_maps(
            nets,
            {lang: corpus.subset(lang, "train") for lang in languages},
            {lang: corpus.senone_inventories[lang] for lang in languages},
        )
    elif cfg.method in MAP_METHODS:
        if not paths.baseline_model.exists():
            raise ConfigError(
                f"{paths.baseline_model} not found; run train-baseline before build-map"
            )
        mapper = load_network(paths.baseline_model)
        maps = build_source_maps(corpus, cfg, mapper)
        map_set = MapSet({(src, cfg.target): m for src, m in maps.items()})
    else:
        raise ConfigError(f"method {cfg.method!r} does not build maps")
    return save_map_set(map_set, paths.maps_dir)


def stage_pool_train(
    cfg: ExperimentConfig, corpus: MultiCorpus | None = None
) -> tuple[Network, Path]:
    """Train a fresh network on pooled, relabeled data."""
    if cfg.method not in MAP_METHODS:
        raise ConfigError(f"pool-train applies to {MAP_METHODS}, not {cfg.method!r}")
    paths = RunPaths(cfg.output_dir)
    if corpus is None:
        corpus = prepare_corpus(cfg, paths.corpus)
    mapper = load_network(paths.baseline_model)
    map_set = load_map_set(paths.maps_dir)
    maps = {src: map_set.get(src, cfg.target) for src in cfg.sources}
    pooled = build_pooled_frames(corpus, cfg, mapper, maps)
    net = init_network(_arch(corpus, cfg, cfg.target), derive_seed(cfg.seed, "init:pooled"))
    tcfg = dataclasses.replace(cfg.train, shuffle_seed=derive_seed(cfg.seed, "shuffle:pooled"))
    trained, history = train(net, pooled, tcfg)
    save_network(trained, paths.pooled_model)
    _write_train_log(paths.logs_dir / "pooled_train.log", history)
    return trained, paths.pooled_model


def stage_mt_train(
    cfg: ExperimentConfig, corpus: MultiCorpus | None = None
) -> tuple[MultiHeadNetwork, Path]:
    if cfg.method not in MT_METHODS:
        raise ConfigError(f"mt-train applies to {MT_METHODS}, not {cfg.method!r}")
    paths = RunPaths(cfg.output_dir)
    if corpus is None:
        corpus = prepare_corpus(cfg, paths.corpus)
    languages = [cfg.target, *cfg.sources]
    map_set = None
    mode = "masked"
    if cfg.method == "mtdnn-mapped":
        mode = "mapped"
        map_set = load_map_set(paths.maps_dir)
    net = init_multihead(
        [corpus.feature_dim, *cfg.hidden_dims],
        [corpus.senone_inventories[lang].size for lang in languages],
        languages,
        derive_seed(cfg.seed, "init:mtdnn"),
    )
    mt_cfg = dataclasses.replace(
        cfg.mt_train, loss_mode=mode, shuffle_seed=derive_seed(cfg.seed, "shuffle:mtdnn")
    )
    frames = {lang: corpus.subset(lang, "train") for lang in languages}
    trained, history = train_multihead(net, frames, mt_cfg, map_set)
    save_multihead(trained, paths.mtdnn_model)
    _write_train_log(paths.logs_dir / "mtdnn_train.log", history)
    return trained, paths.mtdnn_model


def stage_prune(cfg: ExperimentConfig) -> tuple[Network, Path]:
    paths = RunPaths(cfg.output_dir)
    net = prune(load_multihead(paths.mtdnn_model), cfg.target)
    save_network(net, paths.pruned_model)
    return net, paths.pruned_model


def stage_finetune(
    cfg: ExperimentConfig,
    corpus: MultiCorpus | None = None,
    model_path: Path | None = None,
) -> tuple[Network, Path]:
    """Fine-tune a model on target training data at a constant rate."""
    paths = RunPaths(cfg.output_dir)
    if corpus is None:
        corpus = prepare_corpus(cfg, paths.corpus)
    if model_path is None:
        model_path = paths.pruned_model if paths.pruned_model.exists() else paths.pooled_model
    net = load_network(model_path)
    tuned, history = finetune(
        net,
        corpus.subset(cfg.target, "train"),
        epochs=cfg.finetune_epochs,
        lr=cfg.finetune_lr,
        batch_size=cfg.train.batch_size,
        shuffle_seed=derive_seed(cfg.seed, "shuffle:finetune"),
    )
    save_network(tuned, paths.final_model)
    _write_train_log(paths.logs_dir / "finetune.log", history)
    return tuned, paths.final_model


def stage_evaluate(
    cfg: ExperimentConfig,
    corpus: MultiCorpus | None = None,
    model_path: Path | None = None,
    split: str = "test",
) -> float:
    paths = RunPaths(cfg.output_dir)
    if corpus is None:
        corpus = prepare_corpus(cfg, paths.corpus)
    net = load_network(model_path or paths.final_model)
    return frame_error_rate(net, corpus.subset(cfg.target, split))


# ---------------------------------------------------------------------------
# results


@dataclass(frozen=True)
class ResultRow:
    method: str
    target: str
    sources: tuple[str, ...]
    seed: int
    config_hash: str
    dev_frame_error: float
    test_frame_error: float


def row_to_dict(row: ResultRow) -> dict:
    return {
        "format": ROW_FORMAT,
        "version": 1,
        "method": row.method,
        "target": row.target,
        "sources": list(row.sources),
        "seed": row.seed,
        "config_hash": row.config_hash,
        "dev_frame_error": row.dev_frame_error,
        "test_frame_error": row.test_frame_error,
    }


def row_from_dict(raw: dict) -> ResultRow:
    if raw.get("format") != ROW_FORMAT:
        raise ConfigError(f"not a {ROW_FORMAT} payload")
    return ResultRow(
        method=raw["method"],
        target=raw["target"],
        sources=tuple(raw["sources"]),
        seed=int(raw["seed"]),
        config_hash=raw["config_hash"],
        dev_frame_error=float(raw["dev_frame_error"]),
        test_frame_error=float(raw["test_frame_error"]),
    )


def write_row(row: ResultRow, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(row_to_dict(row), sort_keys=True, indent=2) + "\n")


def read_row(path: str | Path) -> ResultRow:
    return row_from_dict(json.loads(Path(path).read_text()))


def relative_improvement(baseline: float, value: float) -> float:
    """Percentage improvement of ``value`` over ``baseline`` (higher is better)."""
    if baseline == 0.0:
        return 0.0
    return 100.0 * (baseline - value) / baseline


def _table_payload(rows: list[ResultRow], metadata: dict | None) -> dict:
    by_method: dict[str, list[ResultRow]] = {}
    for row in rows:
        by_method.setdefault(row.method, []).append(row)
    if "baseline" not in by_method:
        raise MissingBaselineError("results contain no baseline row to compare against")
    ordered = [m for m in METHODS if m in by_method]
    ordered += sorted(m for m in by_method if m not in METHODS)
    payload_rows = []
    for method in ordered:
        group = by_method[method]
        payload_rows.append(
            {
                "method": method,
                "seeds": sorted(r.seed for r in group),
                "dev_frame_error": float(np.mean([r.dev_frame_error for r in group])),
                "test_frame_error": float(np.mean([r.test_frame_error for r in group])),
            }
        )
    return {
        "format": REPORT_FORMAT,
        "version": 1,
        "metadata": metadata or {},
        "rows": payload_rows,
    }


def render_table(payload: dict) -> str:
    """Aligned text table; improvements vs baseline shown in parentheses."""
    if payload.get("format") != REPORT_FORMAT:
        raise ConfigError(f"not a {REPORT_FORMAT} payload")
    rows = payload["rows"]
    baseline = next((r for r in rows if r["method"] == "baseline"), None)
    if baseline is None:
        raise MissingBaselineError("results contain no baseline row to compare against")

    def cell(value: float, base: float, is_baseline: bool) -> str:
        if is_baseline:
            return f"{value:.2f} (NA)"
        return f"{value:.2f} ({relative_improvement(base, value):.2f})"

    lines = [f"{'method':<14} {'seeds':>5}  {'dev_fer':<16} {'test_fer':<16}"]
    for row in rows:
        is_base = row["method"] == "baseline"
        lines.append(
            f"{row['method']:<14} {len(row['seeds']):>5}  "
            f"{cell(row['dev_frame_error'], baseline['dev_frame_error'], is_base):<16} "
            f"{cell(row['test_frame_error'], baseline['test_frame_error'], is_base):<16}"
        )
    return "\n".join(lines)


def emit_table(rows: list[ResultRow], metadata: dict | None = None) -> tuple[str, dict]:
    """Text table plus the machine-readable payload carrying the same numbers."""
    payload = _table_payload(rows, metadata)
    return render_table(payload), payload


def write_report(rows: list[ResultRow], out_dir: Path, metadata: dict | None = None) -> str:
    paths = RunPaths(out_dir)
    text, payload = emit_table(rows, metadata)
    paths.report_text.parent.mkdir(parents=True, exist_ok=True)
    paths.report_text.write_text(text + "\n")
    paths.report_json.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    return text


# ---------------------------------------------------------------------------
# the full pipeline


def run_experiment(cfg: ExperimentConfig) -> ResultRow:
    """Execute the configured method end to end and persist its artifacts."""
    cfg.validate()
    started = time.monotonic()
    paths = RunPaths(cfg.output_dir)
    corpus = prepare_corpus(cfg, paths.corpus)

    if cfg.method == "baseline":
        net, _ = stage_train_baseline(cfg, corpus)
        save_network(net, paths.final_model)
        final = net
    elif cfg.method in MAP_METHODS:
        stage_train_baseline(cfg, corpus)
        stage_build_map(cfg, corpus)
        _, pooled_path = stage_pool_train(cfg, corpus)
        final, _ = stage_finetune(cfg, corpus, model_path=pooled_path)
    else:
        if cfg.method == "mtdnn-mapped":
            stage_build_map(cfg, corpus)
        stage_mt_train(cfg, corpus)
        _, pruned_path = stage_prune(cfg)
        final, _ = stage_finetune(cfg, corpus, model_path=pruned_path)

    dev = frame_error_rate(final, corpus.subset(cfg.target, "dev"))
    test = frame_error_rate(final, corpus.subset(cfg.target, "test"))
    row = ResultRow(
        method=cfg.method,
        target=cfg.target,
        sources=tuple(cfg.sources),
        seed=cfg.seed,
        config_hash=config_hash(cfg),
        dev_frame_error=dev,
        test_frame_error=test,
    )
    write_row(row, paths.row(cfg.method, cfg.seed))
    elapsed = time.monotonic() - started
    log_path = paths.log(cfg.method, cfg.seed)
    log_path.parent.mkdir(parents=True, exist_ok=True)
    log_path.write_text(
        f"method={cfg.method} seed={cfg.seed} config_hash={config_hash(cfg)}\n"
        f"dev_frame_error={dev!r} test_frame_error={test!r}\n"
        f"runtime_seconds={elapsed:.3f}\n"
    )
    return row
