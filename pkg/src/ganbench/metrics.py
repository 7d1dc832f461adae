"""Distribution-comparison metrics between real and generated samples.

All functions take plain arrays. Matrices are ``(rows, columns)``; 1-D input
is treated as a single column.
"""
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.spatial.distance import cdist, pdist
from scipy.special import rel_entr

from . import tensor as T
from .nn import MlpSpec, Mlp, RMSprop, clip_weights

LOG2 = float(np.log(2.0))
MEDIAN_SUBSAMPLE = 2000


def _as_matrix(x, name: str) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise ValueError(f"{name} must be a vector or a matrix, got {a.ndim} axes")
    if a.shape[0] == 0:
        raise ValueError(f"{name} is empty")
    if not np.isfinite(a).all():
        raise ValueError(f"{name} contains non-finite values")
    return a


def _same_columns(p: np.ndarray, q: np.ndarray):
    if p.shape[1] != q.shape[1]:
        raise ValueError(f"column counts differ: {p.shape[1]} vs {q.shape[1]}")


@dataclass(frozen=True)
class Histogram:
    """Probabilities over shared bins, e.g. from :func:`histograms`."""

    probs: np.ndarray
    edges: Optional[np.ndarray] = None

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        if p.ndim != 1 or p.size == 0:
            raise ValueError("histogram must be a non-empty vector")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
            raise ValueError("histogram probabilities must be non-negative and sum to 1")
        object.__setattr__(self, "probs", p)


def _pair(p, q) -> Tuple[np.ndarray, np.ndarray]:
    hp = p if isinstance(p, Histogram) else Histogram(p)
    hq = q if isinstance(q, Histogram) else Histogram(q)
    if hp.probs.shape != hq.probs.shape:
        raise ValueError(f"histograms have different bin counts: {hp.probs.size} vs {hq.probs.size}")
    if hp.edges is not None and hq.edges is not None and not np.array_equal(hp.edges, hq.edges):
        raise ValueError("histograms are defined over different bins")
    return hp.probs, hq.probs


def histograms(real, fake, bins: int = 50) -> Tuple[Histogram, Histogram]:
    """Bin two 1-D samples on a common grid spanning both."""
    a = np.asarray(real, dtype=np.float64).ravel()
    b = np.asarray(fake, dtype=np.float64).ravel()
    lo, hi = min(a.min(), b.min()), max(a.max(), b.max())
    if hi == lo:
        hi = lo + 1.0
    edges = np.linspace(lo, hi, bins + 1)
    ha = np.histogram(a, edges)[0].astype(np.float64)
    hb = np.histogram(b, edges)[0].astype(np.float64)
    return Histogram(ha / ha.sum(), edges), Histogram(hb / hb.sum(), edges)


def kl_divergence(p, q) -> float:
    """``sum p log(p/q)`` in nats, with ``0 log 0 = 0``.

    Raises ``ValueError`` when ``q`` has zero mass on a bin where ``p`` does
    not, since the divergence is then infinite.
    """
    p, q = _pair(p, q)
    if np.any((q == 0) & (p > 0)):
        raise ValueError("q has zero mass where p is positive; KL divergence is undefined")
    return float(rel_entr(p, q).sum())


def jsd(p, q) -> float:
    """Jensen-Shannon divergence in nats, bounded by ``log 2``."""
    p, q = _pair(p, q)
    m = 0.5 * (p + q)
    return float(0.5 * rel_entr(p, m).sum() + 0.5 * rel_entr(q, m).sum())


def silverman_bandwidth(x) -> np.ndarray:
    """Per-column ``0.9 * min(std, IQR/1.349) * n^(-1/5)``.

    Falls back to whichever spread is non-zero, then to 1.0 for a constant column.
    """
    x = _as_matrix(x, "sample")
    n = x.shape[0]
    std = x.std(axis=0, ddof=1) if n > 1 else np.zeros(x.shape[1])
    q75, q25 = np.percentile(x, [75, 25], axis=0)
    iqr = (q75 - q25) / 1.349
    spread = np.where((std > 0) & (iqr > 0), np.minimum(std, iqr), np.maximum(std, iqr))
    spread = np.where(spread > 0, spread, 1.0)
    return 0.9 * spread * n ** (-0.2)


def kde(samples, points, bandwidth=None) -> np.ndarray:
    """Gaussian product-kernel density estimate evaluated at ``points``.

    ``f(x) = 1/(n * prod h) * sum_i prod_j phi((x_j - s_ij) / h_j)``, so the
    estimate integrates to one. ``bandwidth`` is a scalar or one value per
    column; the default is :func:`silverman_bandwidth`.
    """
    s = _as_matrix(samples, "samples")
    p = _as_matrix(points, "points")
    _same_columns(s, p)
    h = silverman_bandwidth(s) if bandwidth is None else np.broadcast_to(
        np.asarray(bandwidth, dtype=np.float64), (s.shape[1],))
    if np.any(h <= 0):
        raise ValueError("bandwidth must be positive")
    d2 = cdist(p / h, s / h, "sqeuclidean")
    norm = s.shape[0] * np.prod(h) * (2.0 * np.pi) ** (s.shape[1] / 2.0)
    return np.exp(-0.5 * d2).sum(axis=1) / norm


def emd(real, fake) -> float:
    """Exact 1-D earth mover's distance per column, averaged over columns.

    Equal row counts are required; the optimal 1-D coupling then pairs the
    sorted samples.
    """
    a = _as_matrix(real, "real")
    b = _as_matrix(fake, "fake")
    _same_columns(a, b)
    if a.shape[0] != b.shape[0]:
        raise ValueError(f"emd needs equal sample counts, got {a.shape[0]} and {b.shape[0]}")
    return float(np.abs(np.sort(a, axis=0) - np.sort(b, axis=0)).mean(axis=0).mean())


class CriticDivergedError(FloatingPointError):
    """Critic training produced a non-finite value; ``history`` holds the batch gaps so far."""

    def __init__(self, message: str, history):
        super().__init__(message)
        self.history = list(history)


def critic_emd(real, fake, hidden=(64, 64), steps: int = 2000, lr: float = 5e-4,
               clip: float = 0.01, batch_size: int = 64, seed: int = 0,
               lipschitz_normalize: bool = False) -> float:
    """Dual-form earth mover's estimate from a weight-clipped critic.

    Trains an MLP critic ``F`` by RMSprop to maximize
    ``mean F(real) - mean F(fake)`` with every weight clipped to
    ``[-clip, clip]`` after each step, then returns that difference on the full
    samples. Clipping bounds the critic's Lipschitz constant well below one
    for small ``clip``, so the raw value under-estimates the exact distance.
    ``lipschitz_normalize=True`` divides by the critic's empirical Lipschitz
    constant along the pooled sample instead, giving an estimate on the scale
    of :func:`emd`.
    """
    a = _as_matrix(real, "real")
    b = _as_matrix(fake, "fake")
    _same_columns(a, b)
    if clip <= 0 or steps < 0 or batch_size < 1:
        raise ValueError("critic config needs clip > 0, steps >= 0, batch_size >= 1")
    rng = np.random.default_rng(seed)
    spec = MlpSpec(a.shape[1], tuple((w, "relu") for w in hidden), (1, "linear"),
                   int(rng.integers(2 ** 31)))
    net = Mlp(spec, prefix="critic.")
    clip_weights(net.params, clip)
    opt = RMSprop(net.params, lr=lr)
    history = []
    try:
        for _ in range(steps):
            xa = a[rng.integers(0, a.shape[0], batch_size)]
            xb = b[rng.integers(0, b.shape[0], batch_size)]
            gap = T.mean(net(xa)) - T.mean(net(xb))
            opt.step(T.backward(gap, net.params), "ascend")
            clip_weights(net.params, clip)
            history.append(gap.item())
        with T.no_grad():
            fa = net(a).data.ravel()
            fb = net(b).data.ravel()
    except T.NonFiniteError as exc:
        raise CriticDivergedError(f"critic training diverged: {exc}", history) from exc
    value = float(fa.mean() - fb.mean())
    if lipschitz_normalize:
        lip = _empirical_lipschitz(np.vstack([a, b]), np.concatenate([fa, fb]))
        value = value / lip if lip > 0 else 0.0
    return value


def _empirical_lipschitz(x: np.ndarray, f: np.ndarray) -> float:
    """Largest ``|f(x_i) - f(x_j)| / ||x_i - x_j||`` over neighbouring pooled points.

    Exact for 1-D inputs (slopes between sorted neighbours bound every
    secant); for wider inputs it uses pairs along each column's ordering.
    """
    best = 0.0
    for j in range(x.shape[1]):
        order = np.argsort(x[:, j], kind="stable")
        xs, fs = x[order], f[order]
        dist = np.linalg.norm(np.diff(xs, axis=0), axis=1)
        keep = dist > 1e-12
        if keep.any():
            best = max(best, float((np.abs(np.diff(fs))[keep] / dist[keep]).max()))
    return best


def median_bandwidth(x, y, max_rows: int = MEDIAN_SUBSAMPLE, seed: int = 0) -> float:
    """Median pairwise Euclidean distance of the pooled sample (subsampled above ``max_rows``)."""
    pooled = np.vstack([_as_matrix(x, "x"), _as_matrix(y, "y")])
    if pooled.shape[0] > max_rows:
        idx = np.random.default_rng(seed).choice(pooled.shape[0], max_rows, replace=False)
        pooled = pooled[np.sort(idx)]
    med = float(np.median(pdist(pooled))) if pooled.shape[0] > 1 else 0.0
    if med <= 0:
        raise ValueError("median heuristic bandwidth is 0 (most pooled rows coincide); "
                         "pass an explicit bandwidth")
    return med


def mmd_squared(x, y, bandwidth=None, unbiased: bool = False, seed: int = 0) -> float:
    """Squared maximum mean discrepancy with a Gaussian kernel ``exp(-||a-b||^2 / (2 s^2))``.

    The default is the biased V-statistic (never negative, zero for identical
    samples). ``unbiased=True`` drops the diagonal terms. ``bandwidth`` is the
    kernel width ``s``; ``None`` uses :func:`median_bandwidth`.
    """
    a = _as_matrix(x, "x")
    b = _as_matrix(y, "y")
    _same_columns(a, b)
    s = median_bandwidth(a, b, seed=seed) if bandwidth is None else float(bandwidth)
    if s <= 0:
        raise ValueError("bandwidth must be positive")
    gamma = 0.5 / (s * s)
    kxx = np.exp(-gamma * cdist(a, a, "sqeuclidean"))
    kyy = np.exp(-gamma * cdist(b, b, "sqeuclidean"))
    kxy = np.exp(-gamma * cdist(a, b, "sqeuclidean"))
    m, n = a.shape[0], b.shape[0]
    if unbiased:
        if m < 2 or n < 2:
            raise ValueError("unbiased MMD needs at least two rows per sample")
        txx = (kxx.sum() - np.trace(kxx)) / (m * (m - 1))
        tyy = (kyy.sum() - np.trace(kyy)) / (n * (n - 1))
        return float(txx + tyy - 2.0 * kxy.mean())
    return float(max(kxx.mean() + kyy.mean() - 2.0 * kxy.mean(), 0.0))


def qq_points(real, fake, q: int = 100) -> np.ndarray:
    """``(q, 2)`` array of matching quantiles at probabilities ``i/(q+1)``, ``i = 1..q``."""
    a = np.asarray(real, dtype=np.float64).ravel()
    b = np.asarray(fake, dtype=np.float64).ravel()
    if a.size == 0 or b.size == 0:
        raise ValueError("qq_points needs non-empty samples")
    if q < 2:
        raise ValueError("q must be at least 2")
    probs = np.arange(1, q + 1) / (q + 1.0)
    return np.column_stack([np.quantile(a, probs), np.quantile(b, probs)])
