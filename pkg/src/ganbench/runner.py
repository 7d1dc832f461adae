"""Run a (dataset x variant) grid: load, train, sample, score, and write outputs.

Seeding: every grid cell derives its own seed from the master seed and the
CRC-32 of the dataset id and variant name, so cells are independent of the
order in which they run. The latent noise used to *score* the variants of a
dataset is drawn once per dataset from a stream that does not depend on the
variant; its SHA-256 is written to the ``noise_sha`` report column.
"""
import os
import time
import zlib
import hashlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import __version__
from . import datasets as D
from . import metrics as M
from . import zoo
from .config import DatasetConfig, ExperimentConfig
from .report import MetricReport, PlotSeries, ReportRow, emit_plot_data, emit_report

KL_SMOOTHING = 1e-10
_SCORING_STREAM = 0x5C0
_SUBSAMPLE_STREAM = 0x5B5


def _crc(text: str) -> int:
    return zlib.crc32(text.encode("utf-8"))


def cell_seed(master: int, dataset_id: str, variant: str) -> int:
    ss = np.random.SeedSequence([master, _crc(dataset_id), _crc(variant)])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def scoring_rng(master: int, dataset_id: str, stream: int = _SCORING_STREAM) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([master, _crc(dataset_id), stream]))


@dataclass
class PreparedDataset:
    id: str
    shape: str
    train: D.Dataset
    norm_state: D.NormState
    real_score: np.ndarray
    score_labels: Optional[np.ndarray]
    kde_column: int
    notes: Dict[str, str] = field(default_factory=dict)


def load_dataset(dc: DatasetConfig) -> Tuple[D.Dataset, Dict[str, str]]:
    notes = {}
    if dc.kind == "csv":
        ds = D.load_tabular(dc.path, delimiter=dc.delimiter, header=dc.header,
                            label_column=dc.label_column)
    elif dc.kind == "tensor":
        ds = D.load_tensor_dataset(dc.path, dc.labels_path)
    elif dc.kind == "kdd99":
        ds = D.preprocess_kdd99(D.load_kdd99(dc.path))
        notes[f"kdd99_columns.{dc.id}"] = ",".join(ds.column_names)
    elif dc.kind == "kdd99_synth":
        ds = D.preprocess_kdd99(D.synth_kdd99_like(dc.n, dc.seed))
        notes[f"kdd99_columns.{dc.id}"] = ",".join(ds.column_names)
    else:
        spec = D.MixtureSpec(dc.means, [np.full(len(dc.means[0]), s * s) for s in dc.stds], dc.weights)
        ds = D.synth_gaussian_mixture(spec, dc.n, dc.seed, labeled=dc.labeled)
    if dc.labels_path is not None and dc.kind == "csv":
        lab = D.read_tensor(dc.labels_path).astype(np.int64).ravel()
        ds = replace(ds, labels=lab)
    ds = ds.continuous()
    if dc.decimate > 1:
        ds = D.decimate(ds, dc.decimate)
        notes[f"decimate.{dc.id}"] = str(dc.decimate)
    return ds, notes


def prepare_dataset(dc: DatasetConfig, cfg: ExperimentConfig) -> PreparedDataset:
    ds, notes = load_dataset(dc)
    shape = "x".join(str(s) for s in ds.original_shape)
    train, _ = D.train_test_split(ds, dc.train_fraction, seed=cell_seed(cfg.seed, dc.id, "split"))
    normed, state = D.normalize(train)
    n_score = min(train.data.shape[0], cfg.metrics.sample_size)
    rng = scoring_rng(cfg.seed, dc.id, _SUBSAMPLE_STREAM)
    idx = np.arange(train.data.shape[0])
    if n_score < idx.size:
        idx = np.sort(rng.choice(idx, n_score, replace=False))
    real = train.data[idx] if cfg.metrics.space == "raw" else normed.data[idx]
    labels = train.labels[idx] if train.labels is not None else None

    names = train.column_names
    want = cfg.plots.kde_column
    if want is None and D.KDD99_PLOT_COLUMN in names and dc.kind in ("kdd99", "kdd99_synth"):
        want = D.KDD99_PLOT_COLUMN
    if want is not None and want not in names:
        raise D.DatasetError(f"plots.kde_column {want!r} is not a column of dataset {dc.id}")
    kde_col = names.index(want) if want is not None else 0
    return PreparedDataset(dc.id, shape, normed, state, real, labels, kde_col, notes)


@dataclass
class CellResult:
    row: ReportRow
    generated: Optional[np.ndarray] = None
    history: Optional[zoo.TrainHistory] = None
    checkpoint: Optional[bytes] = None


def _score_noise(cfg: ExperimentConfig, prep: PreparedDataset, latent_dim: int) -> np.ndarray:
    return scoring_rng(cfg.seed, prep.id).standard_normal((prep.real_score.shape[0], latent_dim))


def _hist_metrics(real: np.ndarray, fake: np.ndarray, bins: int) -> Tuple[float, float]:
    """Per-column histogram KL(real || generated) and JSD, averaged over columns."""
    kls, jsds = [], []
    for j in range(real.shape[1]):
        hp, hq = M.histograms(real[:, j], fake[:, j], bins)
        jsds.append(M.jsd(hp, hq))
        q = (hq.probs + KL_SMOOTHING) / (1.0 + KL_SMOOTHING * hq.probs.size)
        kls.append(M.kl_divergence(hp, q))
    return float(np.mean(kls)), float(np.mean(jsds))


def run_cell(cfg: ExperimentConfig, prep: PreparedDataset, variant: zoo.GanVariant) -> CellResult:
    row = ReportRow(prep.id, prep.shape, variant.value)
    try:
        seed = cell_seed(cfg.seed, prep.id, variant.value)
        tc = cfg.train_config(variant, seed)
        labels = prep.train.labels
        if variant in zoo.LABELED_VARIANTS and labels is None:
            raise ValueError(f"{variant.value} needs a labeled dataset")
        n_classes = int(labels.max()) + 1 if (labels is not None and variant in zoo.LABELED_VARIANTS) else None
        bundle = zoo.build_model(variant, prep.train.data.shape[1], n_classes, tc.latent_dim,
                                 cfg.architecture(), seed=seed)
        bundle, history = zoo.train(bundle, prep.train.data,
                                    labels if variant in zoo.LABELED_VARIANTS else None, tc)
        noise = _score_noise(cfg, prep, tc.latent_dim)
        row.noise_sha = hashlib.sha256(noise.tobytes()).hexdigest()[:16]
        gen_labels = None
        if variant in zoo.CODED_VARIANTS:
            if variant in zoo.LABELED_VARIANTS:
                gen_labels = prep.score_labels
            else:
                gen_labels = scoring_rng(cfg.seed, prep.id).integers(0, bundle.n_classes, noise.shape[0])
        fake = zoo.generate(bundle, noise.shape[0], labels=gen_labels, noise=noise)
        if cfg.metrics.space == "raw":
            fake = D.invert_minmax(fake, prep.norm_state)
        real = prep.real_score
        row.mmd = M.mmd_squared(real, fake, cfg.metrics.bandwidth, unbiased=cfg.metrics.unbiased)
        row.emd = M.emd(real, fake)
        if cfg.metrics.kl_jsd:
            row.kl, row.jsd = _hist_metrics(real, fake, cfg.metrics.bins)
        if cfg.metrics.critic_emd:
            row.critic_emd = M.critic_emd(real, fake, steps=cfg.metrics.critic_steps, seed=seed)
        values = [v for v in (row.mmd, row.emd, row.kl, row.jsd, row.critic_emd) if v is not None]
        if not all(np.isfinite(values)):
            raise FloatingPointError("a metric came out non-finite")
        return CellResult(row, fake, history, zoo.checkpoint_bytes(bundle, tc))
    except Exception as exc:  # one failed cell must not abort its siblings
        row.status = "failed"
        row.mmd = row.emd = row.kl = row.jsd = row.critic_emd = None
        row.error = f"{type(exc).__name__}: {exc}"
        history = getattr(exc, "history", None)
        return CellResult(row, history=history)


def _failed_rows(dc: DatasetConfig, variants, exc: Exception) -> List[CellResult]:
    msg = f"{type(exc).__name__}: {exc}"
    return [CellResult(ReportRow(dc.id, "", v.value, "failed", error=msg)) for v in variants]


def _kde_series(prep: PreparedDataset, cells: List[CellResult], n_points: int) -> PlotSeries:
    j = prep.kde_column
    name = prep.train.column_names[j]
    real = prep.real_score[:, j]
    curves = {"real": real}
    for c in cells:
        if c.generated is not None:
            curves[f"generated-{c.row.variant}"] = c.generated[:, j]
    pooled = np.concatenate(list(curves.values()))
    h = float(M.silverman_bandwidth(pooled)[0])
    grid = np.linspace(pooled.min() - 3 * h, pooled.max() + 3 * h, n_points)
    cols = {k: M.kde(v, grid) for k, v in curves.items()}
    return PlotSeries("kde-curve", f"kde_{prep.id}_{name}.csv", "x", grid, cols)


def _qq_series(prep: PreparedDataset, cell: CellResult, q: int) -> PlotSeries:
    j = prep.kde_column
    pts = M.qq_points(prep.real_score[:, j], cell.generated[:, j], q)
    lo, hi = float(pts.min()), float(pts.max())
    ref = [("reference", lo, lo), ("reference", hi, hi)]
    return PlotSeries("qq-points", f"qq_{prep.id}_{cell.row.variant}.csv", "real", pts[:, 0],
                      {"generated": pts[:, 1]}, ref)


def _loss_series(prep: PreparedDataset, cell: CellResult) -> PlotSeries:
    h = cell.history
    return PlotSeries("loss-history", f"loss_{prep.id}_{cell.row.variant}.csv", "epoch",
                      np.arange(len(h)), {"d_loss": np.asarray(h.d_loss), "g_loss": np.asarray(h.g_loss),
                                          "d_real": np.asarray(h.d_real)})


def _run_cell_job(args):
    cfg, prep, variant = args
    return run_cell(cfg, prep, variant)


@dataclass
class RunResult:
    report: MetricReport
    series: List[PlotSeries]
    checkpoints: Dict[str, bytes]

    @property
    def exit_code(self) -> int:
        return 2 if self.report.failed else 0


def run_experiment(cfg: ExperimentConfig, workers: Optional[int] = None) -> RunResult:
    """Train and score every (dataset, variant) cell of ``cfg``.

    Rows come back in (dataset order of the config, variant order of the
    config) regardless of ``workers``. A dataset that fails to load yields a
    failure row for each requested variant.
    """
    started = time.perf_counter()
    workers = workers or cfg.workers
    provenance = {
        "config_sha256": cfg.source_hash,
        "seed": str(cfg.seed),
        "ganbench_version": __version__,
        "variants": ",".join(v.value for v in cfg.variants),
        "metric_space": cfg.metrics.space,
        "mmd_bandwidth": "median" if cfg.metrics.bandwidth is None else repr(cfg.metrics.bandwidth),
        "mmd_estimator": "unbiased" if cfg.metrics.unbiased else "biased",
        "emd_reduction": "mean over columns of exact 1-D distances",
    }
    preps: Dict[str, PreparedDataset] = {}
    results: Dict[Tuple[str, str], CellResult] = {}
    jobs = []
    for dc in cfg.datasets:
        try:
            prep = prepare_dataset(dc, cfg)
        except Exception as exc:
            for cell in _failed_rows(dc, cfg.variants, exc):
                results[(dc.id, cell.row.variant)] = cell
            continue
        preps[dc.id] = prep
        provenance.update(prep.notes)
        jobs += [(cfg, prep, v) for v in cfg.variants]

    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run_cell_job, jobs))
    else:
        outcomes = [_run_cell_job(j) for j in jobs]
    for (_, prep, v), cell in zip(jobs, outcomes):
        results[(prep.id, v.value)] = cell

    rows, series, checkpoints = [], [], {}
    for dc in cfg.datasets:
        cells = [results[(dc.id, v.value)] for v in cfg.variants]
        rows += [c.row for c in cells]
        prep = preps.get(dc.id)
        if prep is None:
            continue
        for c in cells:
            if c.checkpoint is not None:
                checkpoints[f"checkpoint_{dc.id}_{c.row.variant}.bin"] = c.checkpoint
        if cfg.plots.enabled:
            ok = [c for c in cells if c.generated is not None]
            series.append(_kde_series(prep, ok, cfg.plots.kde_points))
            series += [_qq_series(prep, c, cfg.plots.qq_points) for c in ok]
            series += [_loss_series(prep, c) for c in cells if c.history is not None and len(c.history)]
    provenance["wall_clock_seconds"] = f"{time.perf_counter() - started:.3f}"
    return RunResult(MetricReport(rows, provenance), series, checkpoints)


def write_outputs(result: RunResult, out_dir) -> List[str]:
    paths = emit_report(result.report, out_dir)
    paths += emit_plot_data(result.series, out_dir)
    for name, blob in result.checkpoints.items():
        path = os.path.join(out_dir, name)
        with open(path, "wb") as fh:
            fh.write(blob)
        paths.append(path)
    return paths
