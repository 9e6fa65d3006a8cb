"""Benchmark runner: MLP vs. classical transformer vs. probabilistic transformer.

For every seed a scenario is generated, the three models are trained on it,
and each is scored on the clean test targets by mean squared error and by
mean distance of its predictions to the constraint set.  Results go to CSV
files plus a couple of SVG figures.
"""

from __future__ import annotations

import csv
import json
import os
import zlib
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, ConvergenceError, GeodesicBallError, TrainingDivergedError
from .model import classical_attention_predict, predict_frechet, predict_measure, predict_mode
from .scenarios import SCENARIOS, default_noise, make_scenario
from .training import (
    TrainConfig,
    setup_particles,
    train_baseline_mlp,
    train_classical_transformer,
    train_probabilistic_transformer,
)

MODELS = ("mlp", "transformer", "p-transformer")
READOUTS = ("mean", "frechet", "frechet-local", "mode")
DEFAULT_LAMBDAS = tuple(round(0.1 * i, 1) for i in range(11))
METRICS_HEADER = ("scenario", "model", "seed", "mse", "d_k", "mse_ratio")

# how the probabilistic transformer's measure is collapsed to a point
DEFAULT_READOUT = {
    "sphere": "frechet-local",
    "square": "mean",
    "disk": "mean",
    "rose": "mode",
    "variety": "mode",
}

# failures that cost a seed rather than the whole run
SEED_FAILURES = (TrainingDivergedError, ConvergenceError, GeodesicBallError)


@dataclass
class ExperimentConfig:
    scenario: str = "sphere"
    seeds: list = field(default_factory=lambda: [0])
    train_size: int = 900
    test_size: int = 100
    noise_std: float | None = None  # None: 0 for sphere/convex, sqrt(0.1) for curves
    models: dict = field(default_factory=dict)  # model name -> TrainConfig
    lambdas: list = field(default_factory=lambda: list(DEFAULT_LAMBDAS))
    output_dir: str = "results"
    readout: str | None = None  # None: per-scenario default

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}; expected one of {SCENARIOS}")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        self.seeds = [int(s) for s in self.seeds]
        if self.train_size < 1 or self.test_size < 1:
            raise ConfigError("train_size and test_size must be at least 1")
        if any(not 0.0 <= lam <= 1.0 for lam in self.lambdas):
            raise ConfigError("lambda values must lie in [0, 1]")
        self.lambdas = [float(lam) for lam in self.lambdas]
        unknown = set(self.models) - set(MODELS)
        if unknown:
            raise ConfigError(f"unknown model names {sorted(unknown)}; expected {MODELS}")
        self.models = {
            name: (cfg if isinstance(cfg, TrainConfig) else TrainConfig(**cfg))
            for name, cfg in self.models.items()
        }
        if self.readout is None:
            self.readout = DEFAULT_READOUT[self.scenario]
        if self.readout not in READOUTS:
            raise ConfigError(f"unknown readout {self.readout!r}; expected one of {READOUTS}")
        if self.noise_std is None:
            self.noise_std = default_noise(self.scenario)
        if self.noise_std < 0:
            raise ConfigError("noise_std must be non-negative")

    def train_config(self, name) -> TrainConfig:
        return self.models.get(name, TrainConfig())

    def to_dict(self):
        return {
            "scenario": self.scenario,
            "seeds": list(self.seeds),
            "train_size": self.train_size,
            "test_size": self.test_size,
            "noise_std": self.noise_std,
            "models": {name: self.train_config(name).to_dict() for name in MODELS},
            "lambdas": list(self.lambdas),
            "output_dir": self.output_dir,
            "readout": self.readout,
        }

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ConfigError("experiment config must be a JSON object")
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config fields {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:  # e.g. a bad TrainConfig field
            raise ConfigError(str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as f:
            d = json.load(f)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    return ExperimentConfig.from_dict(d)


def preset_config(scenario, seeds=None) -> ExperimentConfig:
    """Settings used by the acceptance suite.

    The sphere runs train every layer.  The planar runs randomise the hidden
    weights and train only the output layer of every model.
    """
    if scenario == "sphere":
        common = dict(epochs=40)
        return ExperimentConfig(
            scenario, list(range(20)) if seeds is None else seeds, train_size=1000,
            models={name: dict(common) for name in MODELS},
        )
    common = dict(epochs=300, hidden_mode="frozen-random", optimizer={"lr": 0.01})
    return ExperimentConfig(
        scenario, list(range(5)) if seeds is None else seeds, train_size=900,
        models={name: dict(common) for name in MODELS},
    )


@dataclass
class MetricsRow:
    scenario: str
    model: str
    seed: int
    mse: float
    d_k: float
    mse_ratio: float = float("nan")
    support_d_k: float = float("nan")  # worst atom of any predicted measure (attention models)
    failed: bool = False
    error: str = ""

    def csv_fields(self):
        return [self.scenario, self.model, self.seed, repr(float(self.mse)), repr(float(self.d_k)),
                repr(float(self.mse_ratio))]


def derive_seed(seed, label) -> int:
    """Independent integer seed for one (seed, label) stream."""
    return int(np.random.SeedSequence([int(seed), zlib.crc32(label.encode())]).generate_state(1)[0])


def _stream(model_name):
    # Both attention models draw from one stream, so they share particles and
    # initial weights and differ only in how they are fitted and read out.
    return "mlp" if model_name == "mlp" else "attention"


def combined_score(mse, d_k, lam):
    """``lam * mse + (1 - lam) * d_k``."""
    if not 0.0 <= lam <= 1.0:
        raise ConfigError(f"lambda must lie in [0, 1], got {lam}")
    return lam * mse + (1.0 - lam) * d_k


def readout_predictions(model, X, readout):
    if readout == "mean":
        return classical_attention_predict(model, X)
    if readout == "mode":
        return np.array([predict_mode(model, x) for x in X])
    localized = readout == "frechet-local"
    return np.array([predict_frechet(model, x, localized=localized) for x in X])


def support_distance(model, X):
    """Largest distance to K over all atoms of all predicted measures."""
    worst = 0.0
    for x in X:
        worst = max(worst, float(np.max(model.constraint_set.distance(predict_measure(model, x).atoms))))
    return worst


def _scenario_for(cfg: ExperimentConfig, seed):
    rng = np.random.default_rng(derive_seed(seed, "scenario:" + cfg.scenario))
    return make_scenario(cfg.scenario, rng, cfg.train_size, cfg.test_size, cfg.noise_std)


def _score(scenario, preds):
    mse = float(np.mean(np.sum((preds - scenario.test_y) ** 2, axis=1)))
    d_k = float(np.mean(scenario.constraint_set.distance(preds)))
    return mse, d_k


def run_seed(cfg: ExperimentConfig, seed) -> list[MetricsRow]:
    sc = _scenario_for(cfg, seed)
    data = (sc.train_x, sc.train_y)
    rows = []
    for name in MODELS:
        tcfg = replace(cfg.train_config(name), seed=derive_seed(seed, _stream(name)))
        try:
            if name == "mlp":
                model, _ = train_baseline_mlp(data, tcfg)
                preds, support = model.predict(sc.test_x), float("nan")
            elif name == "transformer":
                model, _ = train_classical_transformer(data, sc.particle_source, tcfg)
                preds, support = classical_attention_predict(model, sc.test_x), support_distance(model, sc.test_x)
            else:
                model, _ = train_probabilistic_transformer(data, sc.particle_source, tcfg)
                preds = readout_predictions(model, sc.test_x, cfg.readout)
                support = support_distance(model, sc.test_x)
            mse, d_k = _score(sc, preds)
            rows.append(MetricsRow(cfg.scenario, name, seed, mse, d_k, support_d_k=support))
        except SEED_FAILURES as exc:
            rows.append(MetricsRow(cfg.scenario, name, seed, float("nan"), float("nan"), failed=True,
                                   error=f"{type(exc).__name__}: {exc}"))
    base = rows[0].mse
    for row in rows:
        if not row.failed and base > 0:
            row.mse_ratio = row.mse / base
    return rows


def run_benchmark(cfg: ExperimentConfig, progress=None) -> list[MetricsRow]:
    """Train and score all three models for every seed in ``cfg``.

    ``progress`` is an optional callable receiving each seed's rows.
    """
    rows = []
    for seed in cfg.seeds:
        seed_rows = run_seed(cfg, seed)
        rows.extend(seed_rows)
        if progress is not None:
            progress(seed_rows)
    return rows


def failed_seed_fraction(rows) -> float:
    seeds = {r.seed for r in rows}
    bad = {r.seed for r in rows if r.failed}
    return len(bad) / len(seeds) if seeds else 0.0


def summarize(rows):
    """Per-model mean and standard deviation over the successful seeds."""
    out = []
    for name in MODELS:
        mine = [r for r in rows if r.model == name]
        if not mine:
            continue
        ok = [r for r in mine if not r.failed]
        entry = {"scenario": mine[0].scenario, "model": name, "n_ok": len(ok), "n_failed": len(mine) - len(ok)}
        for key in ("mse", "d_k", "mse_ratio"):
            vals = np.array([getattr(r, key) for r in ok], float)
            entry[key + "_mean"] = float(np.mean(vals)) if len(vals) else float("nan")
            entry[key + "_std"] = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
        out.append(entry)
    return out


def frontier(summary, lambdas):
    """Long-format rows ``(lambda, model, score)`` from the seed-averaged metrics."""
    return [
        (lam, s["model"], combined_score(s["mse_mean"], s["d_k_mean"], lam))
        for lam in lambdas
        for s in summary
    ]


def write_metrics(path, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(METRICS_HEADER)
        for r in rows:
            w.writerow(r.csv_fields())


def read_metrics(path) -> list[MetricsRow]:
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if tuple(reader.fieldnames or ()) != METRICS_HEADER:
            raise ConfigError(f"{path}: expected header {','.join(METRICS_HEADER)}")
        rows = []
        for d in reader:
            mse = float(d["mse"])
            rows.append(MetricsRow(d["scenario"], d["model"], int(d["seed"]), mse, float(d["d_k"]),
                                   float(d["mse_ratio"]), failed=bool(np.isnan(mse))))
        return rows


def write_summary(path, summary):
    keys = ["scenario", "model", "n_ok", "n_failed", "mse_mean", "mse_std", "d_k_mean", "d_k_std",
            "mse_ratio_mean", "mse_ratio_std"]
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(keys)
        for s in summary:
            w.writerow([repr(s[k]) if isinstance(s[k], float) else s[k] for k in keys])


def write_frontier(path, points):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["lambda", "model", "score"])
        for lam, name, score in points:
            w.writerow([repr(lam), name, repr(float(score))])


# -- figures -----------------------------------------------------------------

def _save_svg(fig, path):
    import matplotlib

    with matplotlib.rc_context({"svg.hashsalt": "probtrans", "svg.fonttype": "path"}):
        fig.savefig(path, format="svg", metadata={"Date": None})


def plot_frontier(points, path):
    from matplotlib.figure import Figure

    fig = Figure(figsize=(5, 4))
    ax = fig.add_subplot()
    for name in MODELS:
        pts = [(lam, s) for lam, n, s in points if n == name]
        if pts:
            lam, score = zip(*pts)
            ax.plot(lam, score, marker="o", label=name)
    ax.set_xlabel("lambda (weight on MSE)")
    ax.set_ylabel("lambda * MSE + (1 - lambda) * d_K")
    ax.legend()
    _save_svg(fig, path)


def plot_particles(particles, targets, path, title=""):
    from matplotlib.figure import Figure

    fig = Figure(figsize=(5, 5))
    ax = fig.add_subplot()
    ax.scatter(targets[:, 0], targets[:, 1], s=6, c="tab:blue", alpha=0.5, label="training targets")
    ax.scatter(particles[:, 0], particles[:, 1], s=14, c="tab:red", marker="x", label="particles")
    ax.set_aspect("equal")
    ax.set_title(title)
    ax.legend()
    _save_svg(fig, path)


def scenario_particles(cfg: ExperimentConfig, seed):
    """Rebuild the scenario and the probabilistic transformer's particles for one seed.

    Particle selection is the first thing the trainer draws from its RNG, so
    this reproduces the particles of :func:`run_seed` without training.
    """
    sc = _scenario_for(cfg, seed)
    tcfg = cfg.train_config("p-transformer")
    rng = np.random.default_rng(derive_seed(seed, _stream("p-transformer")))
    _, particles = setup_particles(sc.particle_source, tcfg, rng)
    return sc, particles


def emit_outputs(rows, cfg: ExperimentConfig, out_dir=None):
    """Write metrics/summary/frontier CSVs and SVG figures; returns the paths written."""
    if not rows:
        raise ValueError("no metrics rows to write")
    out_dir = out_dir or cfg.output_dir
    os.makedirs(out_dir, exist_ok=True)
    paths = {name: os.path.join(out_dir, name) for name in
             ("metrics.csv", "summary.csv", "frontier.csv", "frontier.svg")}
    summary = summarize(rows)
    points = frontier(summary, cfg.lambdas)
    write_metrics(paths["metrics.csv"], rows)
    write_summary(paths["summary.csv"], summary)
    write_frontier(paths["frontier.csv"], points)
    plot_frontier(points, paths["frontier.svg"])
    if cfg.scenario != "sphere":
        sc, particles = scenario_particles(cfg, cfg.seeds[0])
        paths["particles.svg"] = os.path.join(out_dir, "particles.svg")
        plot_particles(particles.flat(), sc.train_y, paths["particles.svg"],
                       f"{cfg.scenario}, seed {cfg.seeds[0]}")
    return paths
