"""Deterministic P-worker data-parallel SGD with pluggable gradient codecs.

Each iteration, every worker samples a mini-batch from its shard, optionally
compensates the gradient with its accumulated quantization error, quantizes,
and emits an encoded message. A single authoritative parameter vector is
updated from the dequantized average, which keeps all (implicit) replicas
bit-identical by construction. Messages pass through the real encode/decode
path so the bit counters reflect exactly what would cross the wire.

The run is a pure function of (config, problem): every random draw comes
from a counter-based stream keyed by (seed, worker, iteration), so thread
count and scheduling cannot change any output byte.
"""

from __future__ import annotations

import enum
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from . import codec as wire
from .feedback import FeedbackConfig, FeedbackState, compensate, update_error
from .quantizer import NormKind, QuantScheme, dequantize, quantize, quantize_onebit
from .rng import RngStream

logger = logging.getLogger(__name__)

__all__ = [
    "CodecKind",
    "TrainerConfig",
    "WorkerState",
    "StepTrace",
    "MetricsLog",
    "RunState",
    "worker_step",
    "aggregate",
    "apply_update",
    "run_experiment",
    "run_with_state",
    "effective_scheme",
    "stability_lambda",
    "save_run_state",
    "load_run_state",
]

DIVERGENCE_LOSS = 1e12


class CodecKind(enum.Enum):
    FP32 = "fp32"
    QSGD = "qsgd"
    ECQ = "ecq"
    ONEBIT = "onebit"
    TERNARY = "ternary"

    @property
    def uses_feedback(self) -> bool:
        return self in (CodecKind.ECQ, CodecKind.ONEBIT)


@dataclass(frozen=True)
class TrainerConfig:
    eta: float
    p_workers: int
    batch_size: int
    iterations: int
    codec: CodecKind
    scheme: QuantScheme
    feedback: FeedbackConfig
    seed: int

    def __post_init__(self) -> None:
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if self.p_workers < 1 or self.batch_size < 1 or self.iterations < 1:
            raise ValueError("p_workers, batch_size and iterations must be >= 1")


@dataclass(frozen=True)
class WorkerState:
    worker_id: int
    feedback: FeedbackState


@dataclass(frozen=True)
class StepTrace:
    """Observability record for one worker step (testing hook)."""

    iteration: int
    worker_id: int
    message: bytes
    gradient: np.ndarray
    compensated: np.ndarray
    transmitted: np.ndarray
    h_after: np.ndarray


@dataclass
class MetricsLog:
    """Per-iteration run record; row t reflects the state after update t."""

    iteration: np.ndarray
    train_loss: np.ndarray
    test_loss: np.ndarray
    dist_sq_to_opt: np.ndarray
    bits_plain_cum: np.ndarray
    bits_entropy_cum: np.ndarray
    h_norm_sq_mean: np.ndarray
    status: str
    stability_lambda: float

    COLUMNS = (
        "iteration",
        "train_loss",
        "test_loss",
        "dist_sq_to_opt",
        "bits_plain_cum",
        "bits_entropy_cum",
        "h_norm_sq_mean",
    )

    def __len__(self) -> int:
        return len(self.iteration)


@dataclass
class RunState:
    """Checkpoint of a run at an iteration boundary; h is persisted verbatim."""

    w: np.ndarray
    h_stack: np.ndarray  # (P, d)
    iteration: int
    bits_plain_cum: int
    bits_entropy_cum: float


def effective_scheme(cfg: TrainerConfig, dim: int) -> QuantScheme:
    """The quantizer configuration actually applied by this codec.

    Stochastic ternary is the s=1 / l-inf special case of the uniform
    quantizer, so that codec only overrides those two fields.
    """
    scheme = cfg.scheme
    if cfg.codec is CodecKind.TERNARY:
        scheme = QuantScheme(s=1, norm_kind=NormKind.LINF, bucket_size=scheme.bucket_size)
    return scheme


def stability_lambda(cfg: TrainerConfig, dim: int) -> float:
    """Error-feedback stability constant alpha^2 * gamma + (beta - alpha)^2."""
    scheme = effective_scheme(cfg, dim)
    d_b = min(scheme.bucket_size, dim)
    gamma = min(d_b / scheme.s**2, np.sqrt(d_b) / scheme.s)
    a, b = cfg.feedback.alpha, cfg.feedback.beta
    return a * a * gamma + (b - a) ** 2


def worker_step(
    worker: WorkerState,
    w: np.ndarray,
    problem,
    cfg: TrainerConfig,
    t: int,
    trace_hook: Callable[[StepTrace], None] | None = None,
) -> tuple[bytes, WorkerState]:
    """One worker's iteration: sample, compensate, quantize, emit, update h.

    The error state is advanced with the transmitted gradient exactly as the
    receivers reconstruct it (binary32 scales), so sender and receivers agree
    bit for bit on what was sent.
    """
    stream = RngStream(cfg.seed, worker.worker_id, t)
    shard = problem.shards[worker.worker_id]
    batch = shard[stream.index_draws(cfg.batch_size, len(shard))]
    g = problem.batch_gradient(w, batch)

    if cfg.codec is CodecKind.FP32:
        msg = wire.encode_fp32(g)
        g_tilde = wire.decode_fp32(msg)
        v = g
        new_worker = worker
    elif cfg.codec in (CodecKind.QSGD, CodecKind.TERNARY):
        qv = quantize(g, effective_scheme(cfg, g.shape[0]), stream)
        msg = wire.encode(qv)
        g_tilde = dequantize(wire.decode(msg))
        v = g
        new_worker = worker
    elif cfg.codec is CodecKind.ECQ:
        v = compensate(g, worker.feedback, cfg.feedback)
        qv = quantize(v, effective_scheme(cfg, g.shape[0]), stream)
        msg = wire.encode(qv)
        g_tilde = dequantize(wire.decode(msg))
        new_worker = replace(
            worker, feedback=update_error(worker.feedback, g, g_tilde, cfg.feedback)
        )
    elif cfg.codec is CodecKind.ONEBIT:
        v = compensate(g, worker.feedback, cfg.feedback)
        ob = quantize_onebit(v, min(cfg.scheme.bucket_size, g.shape[0]))
        msg = wire.encode_onebit(ob)
        g_tilde = wire.payload_dequantize(wire.decode_onebit(msg))
        new_worker = replace(
            worker, feedback=update_error(worker.feedback, g, g_tilde, cfg.feedback)
        )
    else:  # pragma: no cover
        raise ValueError(f"unknown codec {cfg.codec}")

    if trace_hook is not None:
        trace_hook(
            StepTrace(
                iteration=t,
                worker_id=worker.worker_id,
                message=msg,
                gradient=g,
                compensated=v,
                transmitted=g_tilde,
                h_after=new_worker.feedback.h,
            )
        )
    return msg, new_worker


def aggregate(messages: list[bytes]) -> np.ndarray:
    """Decode, dequantize and average messages in worker-index order."""
    vectors = [wire.payload_dequantize(wire.decode_any(m)) for m in messages]
    dims = {v.shape[0] for v in vectors}
    if len(dims) != 1:
        raise ValueError(f"dimension mismatch across messages: {sorted(dims)}")
    return np.mean(np.stack(vectors), axis=0)


def apply_update(w: np.ndarray, g_global: np.ndarray, eta: float) -> np.ndarray:
    if w.shape != g_global.shape:
        raise ValueError("dimension mismatch between parameters and gradient")
    if eta <= 0:
        raise ValueError("eta must be positive")
    return w - eta * g_global


def default_thread_count() -> int:
    return max(1, int(os.environ.get("ECQSGD_THREADS", "1")))


def run_experiment(
    cfg: TrainerConfig,
    problem,
    n_threads: int | None = None,
    trace_hook: Callable[[StepTrace], None] | None = None,
    resume: RunState | None = None,
) -> MetricsLog:
    """Run the full training loop; output depends only on (cfg, problem).

    Worker steps within an iteration may run on a thread pool; results are
    joined in worker-index order, so the log is identical for any thread
    count. A non-finite or exploding loss aborts with a truncated log and
    status ``diverged``.
    """
    log, _ = run_with_state(
        cfg, problem, n_threads=n_threads, trace_hook=trace_hook, resume=resume
    )
    return log


def run_with_state(
    cfg: TrainerConfig,
    problem,
    n_threads: int | None = None,
    trace_hook: Callable[[StepTrace], None] | None = None,
    resume: RunState | None = None,
) -> tuple[MetricsLog, RunState]:
    """Like :func:`run_experiment`, also returning the final checkpoint."""
    if n_threads is None:
        n_threads = default_thread_count()
    dim = problem.dim
    lam = stability_lambda(cfg, dim)
    if cfg.codec is CodecKind.ECQ and lam >= 1.0:
        logger.warning(
            "stability constant %.4f >= 1: error feedback may diverge", lam
        )

    if resume is not None:
        w = resume.w.copy()
        workers = [
            WorkerState(p, FeedbackState(h=resume.h_stack[p].copy(), iteration=resume.iteration))
            for p in range(cfg.p_workers)
        ]
        t_start = resume.iteration
        bits_plain = resume.bits_plain_cum
        bits_entropy = resume.bits_entropy_cum
    else:
        w = np.zeros(dim)
        workers = [WorkerState(p, FeedbackState.zeros(dim)) for p in range(cfg.p_workers)]
        t_start = 0
        bits_plain = 0
        bits_entropy = 0.0

    rows: dict[str, list] = {name: [] for name in MetricsLog.COLUMNS}
    status = "ok"
    pool = ThreadPoolExecutor(max_workers=n_threads) if n_threads > 1 else None
    try:
        for t in range(t_start, cfg.iterations):
            step = lambda wk: worker_step(wk, w, problem, cfg, t, trace_hook)
            if pool is not None:
                results = list(pool.map(step, workers))
            else:
                results = [step(wk) for wk in workers]
            workers = [new_wk for _, new_wk in results]
            payloads = [wire.decode_any(msg) for msg, _ in results]
            for payload in payloads:
                bits_plain += wire.payload_plain_bits(payload)
                bits_entropy += wire.payload_entropy_bits(payload)
            g_global = np.mean(
                np.stack([wire.payload_dequantize(p) for p in payloads]), axis=0
            )
            w = apply_update(w, g_global, cfg.eta)

            train_loss = problem.loss(w)
            rows["iteration"].append(t)
            rows["train_loss"].append(train_loss)
            rows["test_loss"].append(problem.test_loss(w))
            rows["dist_sq_to_opt"].append(problem.distance_sq_to_opt(w))
            rows["bits_plain_cum"].append(bits_plain)
            rows["bits_entropy_cum"].append(bits_entropy)
            rows["h_norm_sq_mean"].append(
                float(np.mean([wk.feedback.h @ wk.feedback.h for wk in workers]))
            )
            if not np.isfinite(train_loss) or train_loss > DIVERGENCE_LOSS:
                status = "diverged"
                logger.warning("divergence detected at iteration %d", t)
                break
    finally:
        if pool is not None:
            pool.shutdown()

    log = MetricsLog(
        iteration=np.asarray(rows["iteration"], dtype=np.int64),
        train_loss=np.asarray(rows["train_loss"]),
        test_loss=np.asarray(rows["test_loss"]),
        dist_sq_to_opt=np.asarray(rows["dist_sq_to_opt"]),
        bits_plain_cum=np.asarray(rows["bits_plain_cum"], dtype=np.int64),
        bits_entropy_cum=np.asarray(rows["bits_entropy_cum"]),
        h_norm_sq_mean=np.asarray(rows["h_norm_sq_mean"]),
        status=status,
        stability_lambda=lam,
    )
    end_state = RunState(
        w=w,
        h_stack=np.stack([wk.feedback.h for wk in workers]),
        iteration=(rows["iteration"][-1] + 1) if rows["iteration"] else t_start,
        bits_plain_cum=bits_plain,
        bits_entropy_cum=bits_entropy,
    )
    return log, end_state


def save_run_state(path: str, state: RunState) -> None:
    np.savez(
        path,
        w=state.w,
        h_stack=state.h_stack,
        iteration=state.iteration,
        bits_plain_cum=state.bits_plain_cum,
        bits_entropy_cum=state.bits_entropy_cum,
    )


def load_run_state(path: str) -> RunState:
    with np.load(path) as z:
        return RunState(
            w=z["w"],
            h_stack=z["h_stack"],
            iteration=int(z["iteration"]),
            bits_plain_cum=int(z["bits_plain_cum"]),
            bits_entropy_cum=float(z["bits_entropy_cum"]),
        )
