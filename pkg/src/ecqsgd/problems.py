"""Training problems with exact optima: quadratics, regression, classification.

The quadratic testbed stores per-sample terms as low-rank factors plus a
nonnegative ridge, so each sample's curvature matrix is positive
semidefinite by construction and the aggregate objective is

    f(w) = 1/2 w^T A w + b^T w,   A = sum_i A_i,  b = sum_i b_i,

with closed-form optimum ``w* = -A^{-1} b``. Datasets (squared loss or
log-loss) follow the usual mean-loss convention instead. In both cases a
worker's mini-batch gradient is the batch mean of per-sample gradients,
scaled such that averaging across all workers is an unbiased estimate of the
full gradient.
"""

from __future__ import annotations

import enum
import logging
import os
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

logger = logging.getLogger(__name__)

__all__ = [
    "Task",
    "QuadraticProblem",
    "Dataset",
    "gen_quadratic",
    "gen_regression",
    "gen_classification",
    "load_libsvm",
    "save_libsvm",
    "gradient",
    "loss",
    "optimum",
    "make_shards",
]

DATASET_CACHE_VERSION = 1


class Task(enum.Enum):
    SQUARED_LOSS = "squared"
    LOG_LOSS = "log"


def make_shards(n: int, p_workers: int) -> list[np.ndarray]:
    """Split sample indices across workers; shard sizes differ by at most 1."""
    if not 1 <= p_workers <= n:
        raise ValueError("need n >= P >= 1")
    return [np.asarray(s) for s in np.array_split(np.arange(n), p_workers)]


@dataclass
class QuadraticProblem:
    """Strongly convex quadratic split into per-sample PSD terms.

    Sample i contributes ``A_i = F_i F_i^T + ridge_i * I`` (``F_i`` is
    ``factors[i]``, shape (d, k)) and the linear term ``b_samples[i]``.
    """

    factors: np.ndarray  # (n, d, k)
    ridges: np.ndarray  # (n,)
    b_samples: np.ndarray  # (n, d)
    shards: list[np.ndarray]
    A: np.ndarray
    b: np.ndarray
    w_star: np.ndarray
    a1: float
    a2: float

    def __post_init__(self) -> None:
        if self.a1 <= 0:
            raise ValueError("smallest singular value a1 must be positive")

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    @property
    def n_samples(self) -> int:
        return self.factors.shape[0]

    @classmethod
    def from_samples(
        cls,
        a_matrices: list[np.ndarray],
        b_vectors: list[np.ndarray],
        p_workers: int = 1,
    ) -> "QuadraticProblem":
        """Build from explicit per-sample (A_i, b_i) pairs; A_i must be PSD."""
        n = len(a_matrices)
        d = a_matrices[0].shape[0]
        factors = np.zeros((n, d, d))
        for i, a_i in enumerate(a_matrices):
            a_i = np.asarray(a_i, dtype=np.float64)
            if not np.allclose(a_i, a_i.T, atol=1e-12):
                raise ValueError(f"sample {i}: matrix not symmetric")
            vals, vecs = np.linalg.eigh(a_i)
            if vals.min() < -1e-10 * max(1.0, vals.max()):
                raise ValueError(f"sample {i}: matrix not positive semidefinite")
            factors[i] = vecs * np.sqrt(np.clip(vals, 0.0, None))
        b_samples = np.asarray(b_vectors, dtype=np.float64)
        a_total = sum(np.asarray(a, dtype=np.float64) for a in a_matrices)
        a_total = (a_total + a_total.T) / 2.0
        b_total = b_samples.sum(axis=0)
        eigs = np.linalg.eigvalsh(a_total)
        return cls(
            factors=factors,
            ridges=np.zeros(n),
            b_samples=b_samples,
            shards=make_shards(n, p_workers),
            A=a_total,
            b=b_total,
            w_star=np.linalg.solve(a_total, -b_total),
            a1=float(eigs[0]),
            a2=float(eigs[-1]),
        )

    def loss(self, w: np.ndarray) -> float:
        return float(0.5 * w @ self.A @ w + self.b @ w)

    def batch_gradient(self, w: np.ndarray, indices: np.ndarray) -> np.ndarray:
        """Batch mean of per-sample gradients ``n * (A_i w + b_i)``."""
        f_batch = self.factors[indices]  # (B, d, k)
        proj = np.einsum("bdk,d->bk", f_batch, w)
        quad = np.einsum("bdk,bk->bd", f_batch, proj)
        ridge_mean = float(self.ridges[indices].mean())
        n = self.n_samples
        return n * (
            quad.mean(axis=0) + ridge_mean * w + self.b_samples[indices].mean(axis=0)
        )

    def full_gradient(self, w: np.ndarray) -> np.ndarray:
        return self.A @ w + self.b

    def distance_sq_to_opt(self, w: np.ndarray) -> float:
        diff = w - self.w_star
        return float(diff @ diff)

    def test_loss(self, w: np.ndarray) -> float:
        return float("nan")


def gen_quadratic(
    d: int,
    n: int,
    p_workers: int,
    seed: int,
    conditioning: tuple[float, float] = (1.0, 25.0),
    grad_noise: float = 1.0,
) -> QuadraticProblem:
    """Sample a quadratic whose aggregate spectrum lies inside ``conditioning``.

    Per-sample curvature is a rank-one Gaussian factor with a linearly
    ramped per-coordinate variance profile, rescaled so the top aggregate
    eigenvalue hits a2; a uniform per-sample ridge pins the bottom at a1.
    ``grad_noise`` sets the per-sample gradient noise level used by the
    mini-batch sampling model.
    """
    a1_target, a2_target = conditioning
    if not 0 < a1_target < a2_target:
        raise ValueError("conditioning must satisfy 0 < a1 < a2")
    rng = np.random.default_rng(seed)
    profile = np.linspace(0.0, 1.0, d) if d > 1 else np.ones(1)
    g = rng.normal(size=(n, d)) * np.sqrt(profile)
    m = g.T @ g / d
    mu = np.linalg.eigvalsh(m)
    if mu[-1] <= 0:
        raise ValueError("degenerate sample covariance; increase n")
    c = (a2_target - a1_target) / mu[-1]
    factors = (np.sqrt(c / d) * g)[:, :, None]
    ridges = np.full(n, a1_target / n)
    b_base = rng.normal(size=d)
    b_samples = b_base / n + (grad_noise / n) * rng.normal(size=(n, d))
    b_total = b_samples.sum(axis=0)
    a_total = c * m + a1_target * np.eye(d)
    a_total = (a_total + a_total.T) / 2.0
    eigs = np.linalg.eigvalsh(a_total)
    return QuadraticProblem(
        factors=factors,
        ridges=ridges,
        b_samples=b_samples,
        shards=make_shards(n, p_workers),
        A=a_total,
        b=b_total,
        w_star=np.linalg.solve(a_total, -b_total),
        a1=float(eigs[0]),
        a2=float(eigs[-1]),
    )


@dataclass
class Dataset:
    """Feature matrix plus targets, sharded across workers.

    ``reference_opt`` is the solution used for distance-to-optimum metrics;
    it is filled in lazily by :func:`optimum` (normal equations for squared
    loss, a long full-precision gradient-descent run for log-loss) and left
    unset when nobody asks.
    """

    features: np.ndarray | sp.csr_matrix
    targets: np.ndarray
    task: Task
    shards: list[np.ndarray]
    test_features: np.ndarray | sp.csr_matrix | None = None
    test_targets: np.ndarray | None = None
    reference_opt: np.ndarray | None = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    def _loss_on(self, x, y: np.ndarray, w: np.ndarray) -> float:
        z = np.asarray(x @ w).ravel()
        if self.task is Task.SQUARED_LOSS:
            resid = z - y
            return float(0.5 * np.mean(resid * resid))
        return float(np.mean(np.logaddexp(0.0, z) - y * z))

    def loss(self, w: np.ndarray) -> float:
        return self._loss_on(self.features, self.targets, w)

    def test_loss(self, w: np.ndarray) -> float:
        if self.test_features is None or self.test_targets is None:
            return float("nan")
        return self._loss_on(self.test_features, self.test_targets, w)

    def batch_gradient(self, w: np.ndarray, indices: np.ndarray) -> np.ndarray:
        rows = self.features[indices]
        z = np.asarray(rows @ w).ravel()
        if self.task is Task.SQUARED_LOSS:
            resid = z - self.targets[indices]
        else:
            resid = expit(z) - self.targets[indices]
        return np.asarray(rows.T @ resid).ravel() / len(indices)

    def full_gradient(self, w: np.ndarray) -> np.ndarray:
        return self.batch_gradient(w, np.arange(self.n_samples))

    def distance_sq_to_opt(self, w: np.ndarray) -> float:
        if self.reference_opt is None:
            return float("nan")
        diff = w - self.reference_opt
        return float(diff @ diff)


def gen_regression(
    d: int,
    n: int,
    noise_sigma: float,
    seed: int,
    p_workers: int = 1,
) -> tuple[Dataset, np.ndarray]:
    """Gaussian features with targets ``x @ w_true`` plus i.i.d. noise."""
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, d))
    w_true = rng.normal(size=d) / np.sqrt(d)
    y = x @ w_true + noise_sigma * rng.normal(size=n)
    ds = Dataset(
        features=x, targets=y, task=Task.SQUARED_LOSS, shards=make_shards(n, p_workers)
    )
    return ds, w_true


def _sparse_top_curvature(x, n: int, iters: int = 60) -> float:
    """Largest eigenvalue of X^T X / n via power iteration."""
    rng = np.random.default_rng(0)
    v = rng.normal(size=x.shape[1])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        u = np.asarray(x.T @ np.asarray(x @ v).ravel()).ravel() / n
        lam = float(np.linalg.norm(u))
        if lam == 0.0:
            return 0.0
        v = u / lam
    return lam


def gen_classification(
    d: int,
    n: int,
    seed: int,
    density: float = 0.13,
    scale_spread: float = 1.75,
    n_test: int = 0,
    p_workers: int = 1,
) -> tuple[Dataset, np.ndarray]:
    """Sparse binary-classification data with heavy-tailed feature scales.

    Per-feature magnitudes follow a log-normal with log-std ``scale_spread``,
    mimicking high-dimensional tabular data whose gradient mass concentrates
    on a few coordinates. Features are globally rescaled so the top logistic
    curvature is about 1/4, and labels are Bernoulli with logistic
    probabilities calibrated to a moderate margin.
    """
    rng = np.random.default_rng(seed)
    total = n + n_test
    x = sp.random(
        total, d, density=density, format="csr", dtype=np.float64,
        random_state=rng, data_rvs=rng.standard_normal,
    )
    col_scale = rng.lognormal(mean=0.0, sigma=scale_spread, size=d)
    x = (x @ sp.diags(col_scale)).tocsr()
    lam = _sparse_top_curvature(x, total)
    if lam > 0:
        x = (x / np.sqrt(lam)).tocsr()
    w_true = rng.normal(size=d)
    z = np.asarray(x @ w_true).ravel()
    z_std = float(np.std(z))
    margin = 2.5 / z_std if z_std > 0 else 1.0
    y = (rng.random(total) < expit(margin * z)).astype(np.float64)
    ds = Dataset(
        features=x[:n],
        targets=y[:n],
        task=Task.LOG_LOSS,
        shards=make_shards(n, p_workers),
        test_features=x[n:] if n_test else None,
        test_targets=y[n:] if n_test else None,
    )
    return ds, margin * w_true


def load_libsvm(
    path: str | os.PathLike,
    task: Task | None = None,
    n_features: int | None = None,
    p_workers: int = 1,
    cache: bool = False,
) -> Dataset:
    """Parse a LibSVM-format text file (``label idx:val ...``, 1-based).

    Classification labels {-1, +1} are mapped to {0, 1}; the task is
    inferred from the label set when not given. With ``cache=True`` a
    versioned ``.npz`` sidecar is written and reused while the source file
    is unchanged.
    """
    path = os.fspath(path)
    cached = _load_cache(path) if cache else None
    if cached is not None:
        labels, data, indices, indptr, d = cached
    else:
        labels, data, indices, indptr, d = _parse_libsvm(path)
        if cache:
            _store_cache(path, labels, data, indices, indptr, d)
    if n_features is not None:
        if n_features < d:
            raise ValueError(f"n_features={n_features} below max index {d}")
        d = n_features
    n = len(labels)
    x = sp.csr_matrix((data, indices, indptr), shape=(n, d))
    y = np.asarray(labels)
    if task is None:
        task = Task.LOG_LOSS if set(np.unique(y)) <= {-1.0, 0.0, 1.0} else Task.SQUARED_LOSS
    if task is Task.LOG_LOSS:
        uniq = set(np.unique(y))
        if not uniq <= {-1.0, 0.0, 1.0}:
            raise ValueError(f"classification labels must be binary, got {sorted(uniq)}")
        y = np.where(y == -1.0, 0.0, y)
    return Dataset(features=x, targets=y, task=task, shards=make_shards(n, p_workers))


def _parse_libsvm(path: str):
    labels: list[float] = []
    data: list[float] = []
    indices: list[int] = []
    indptr: list[int] = [0]
    d = 0
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            try:
                labels.append(float(parts[0]))
                for pair in parts[1:]:
                    idx_text, val_text = pair.split(":", 1)
                    idx = int(idx_text)
                    if idx < 1:
                        raise ValueError("feature indices are 1-based")
                    indices.append(idx - 1)
                    data.append(float(val_text))
                    d = max(d, idx)
            except (ValueError, IndexError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed line: {exc}") from None
            indptr.append(len(indices))
    if not labels:
        raise ValueError(f"{path}: no samples found")
    return (
        np.asarray(labels),
        np.asarray(data),
        np.asarray(indices, dtype=np.int64),
        np.asarray(indptr, dtype=np.int64),
        d,
    )


def _cache_path(path: str) -> str:
    return path + ".npz"


def _load_cache(path: str):
    cpath = _cache_path(path)
    if not os.path.exists(cpath):
        return None
    st = os.stat(path)
    with np.load(cpath) as z:
        if (
            int(z["version"]) != DATASET_CACHE_VERSION
            or int(z["src_size"]) != st.st_size
            or int(z["src_mtime_ns"]) != st.st_mtime_ns
        ):
            return None
        return z["labels"], z["data"], z["indices"], z["indptr"], int(z["d"])


def _store_cache(path, labels, data, indices, indptr, d) -> None:
    st = os.stat(path)
    np.savez(
        _cache_path(path),
        version=DATASET_CACHE_VERSION,
        src_size=st.st_size,
        src_mtime_ns=st.st_mtime_ns,
        labels=labels,
        data=data,
        indices=indices,
        indptr=indptr,
        d=d,
    )


def save_libsvm(dataset_or_parts, path: str | os.PathLike, test: bool = False) -> None:
    """Write features/targets in LibSVM text form (exact float round-trip)."""
    if isinstance(dataset_or_parts, Dataset):
        ds = dataset_or_parts
        if test:
            x, y = ds.test_features, ds.test_targets
            if x is None:
                raise ValueError("dataset has no test split")
        else:
            x, y = ds.features, ds.targets
        task = ds.task
    else:
        x, y, task = dataset_or_parts
    x = sp.csr_matrix(x)
    with open(os.fspath(path), "w", encoding="ascii") as fh:
        for i in range(x.shape[0]):
            if task is Task.LOG_LOSS:
                label = "+1" if y[i] == 1.0 else "-1"
            else:
                label = repr(float(y[i]))
            row = x.getrow(i)
            pairs = " ".join(
                f"{j + 1}:{repr(float(v))}" for j, v in zip(row.indices, row.data)
            )
            fh.write(f"{label} {pairs}".rstrip() + "\n")


def gradient(w: np.ndarray, batch_indices: np.ndarray, problem) -> np.ndarray:
    """Mini-batch gradient whose cross-worker average is unbiased."""
    if len(batch_indices) == 0:
        raise ValueError("batch must be non-empty")
    return problem.batch_gradient(np.asarray(w, dtype=np.float64), batch_indices)


def loss(w: np.ndarray, problem) -> float:
    return problem.loss(np.asarray(w, dtype=np.float64))


def optimum(problem, gd_iterations: int = 100_000):
    """Reference optimum: exact for quadratics, computed for datasets.

    Squared loss solves the normal equations; log-loss runs a long
    full-precision gradient descent and caches the result on the dataset.
    """
    if isinstance(problem, QuadraticProblem):
        return problem.w_star
    ds: Dataset = problem
    if ds.reference_opt is not None:
        return ds.reference_opt
    x, y = ds.features, ds.targets
    n = ds.n_samples
    if ds.task is Task.SQUARED_LOSS:
        gram = (x.T @ x).toarray() if sp.issparse(x) else x.T @ x
        cond = np.linalg.cond(gram)
        if cond > 1e12:
            logger.warning("normal equations ill-conditioned (cond=%.3e)", cond)
        w_ref = np.linalg.solve(gram, np.asarray(x.T @ y).ravel())
    else:
        lip = 0.25 * _sparse_top_curvature(x, n) + 1e-12
        step = 1.0 / lip
        w_ref = np.zeros(ds.dim)
        for _ in range(gd_iterations):
            w_ref = w_ref - step * ds.full_gradient(w_ref)
    ds.reference_opt = w_ref
    return w_ref
