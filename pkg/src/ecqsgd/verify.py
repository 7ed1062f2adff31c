"""Empirical verification of the variance and convergence bounds.

Every closed-form bound in :mod:`ecqsgd.analysis` gets an empirical
counterpart here: Monte-Carlo runs of the actual quantizer and trainer whose
measured moments must stay below the analytic curves. Checks return a
structured :class:`CheckResult` so the command-line driver can render a
pass/fail report and exit nonzero on any failure.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, replace

import numpy as np

from .analysis import (
    BoundParams,
    empirical_second_moment,
    error_bound_rhs,
    gamma,
    lambda_of,
    pseudo_error_bounds,
    spectral_H,
    tau_decay_horizon,
    tau_ratio_bound,
    theta,
    theta_bound_coeff,
    variance_bound_ecq,
)
from .feedback import FeedbackConfig, FeedbackState, reconstruct_error_history
from .problems import QuadraticProblem, gen_quadratic
from .quantizer import NormKind, QuantScheme, dequantize, quantize
from .rng import RngStream
from .sim import (
    CodecKind,
    StepTrace,
    TrainerConfig,
    WorkerState,
    apply_update,
    run_experiment,
    worker_step,
)
from . import codec as wire

logger = logging.getLogger(__name__)

__all__ = [
    "CheckResult",
    "RunStats",
    "instrumented_run",
    "check_quantizer_unbiased",
    "check_quantizer_variance",
    "check_error_history_identity",
    "check_qsgd_equivalence",
    "check_error_variance_trajectory",
    "check_error_bound_trajectory",
    "check_suppression_matrix_bound",
    "check_suppression_ratio_decay",
    "check_pseudo_error_scaling",
    "check_feedback_stability",
    "check_convergence_ordering",
    "run_default_checks",
]


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    measured: float | None = None
    bound: float | None = None
    detail: str = ""

    def format_line(self) -> str:
        parts = [f"[{'PASS' if self.passed else 'FAIL'}] {self.name}"]
        if self.measured is not None:
            parts.append(f"measured={self.measured:.6g}")
        if self.bound is not None:
            parts.append(f"bound={self.bound:.6g}")
        if self.detail:
            parts.append(f"({self.detail})")
        return "  ".join(parts)


# ---------------------------------------------------------------------------
# quantizer moment checks


def check_quantizer_unbiased(
    d: int = 64,
    s_values: tuple[int, ...] = (1, 4),
    draws: int = 100_000,
    seed: int = 2024,
    z_limit: float = 4.0,
) -> CheckResult:
    """Per-coordinate Monte-Carlo mean of the quantizer must match the input
    within ``z_limit`` standard errors."""
    worst = 0.0
    gen = np.random.default_rng(seed)
    for s in s_values:
        v = gen.normal(size=d)
        scheme = QuantScheme(s=s, norm_kind=NormKind.L2, bucket_size=d)
        stream = RngStream(seed + s)
        acc = np.zeros(d)
        acc_sq = np.zeros(d)
        for _ in range(draws):
            x = dequantize(quantize(v, scheme, stream))
            acc += x
            acc_sq += x * x
        mean = acc / draws
        var = np.maximum(acc_sq / draws - mean * mean, 0.0)
        stderr = np.sqrt(var / draws)
        z = np.abs(mean - v) / np.where(stderr > 0, stderr, np.inf)
        exact = stderr == 0.0
        if np.any(exact) and np.max(np.abs(mean[exact] - v[exact])) > 0:
            return CheckResult(
                "quantizer-unbiased", False, detail=f"deterministic coordinate off (s={s})"
            )
        worst = max(worst, float(np.max(z)))
    return CheckResult(
        "quantizer-unbiased",
        worst <= z_limit,
        measured=worst,
        bound=z_limit,
        detail=f"max |z| over {len(s_values)} schemes, d={d}, {draws} draws",
    )


def check_quantizer_variance(
    n_vectors: int = 100,
    d: int = 64,
    s_values: tuple[int, ...] = (1, 4),
    draws: int = 200,
    seed: int = 7,
    slack: float = 1.05,
) -> CheckResult:
    """Empirical E||Q(v) - v||^2 must stay below gamma(d, s) ||v||^2 * slack."""
    gen = np.random.default_rng(seed)
    worst_ratio = 0.0
    for s in s_values:
        scheme = QuantScheme(s=s, norm_kind=NormKind.L2, bucket_size=d)
        stream = RngStream(seed + 17 * s)
        limit = gamma(d, s)
        for _ in range(n_vectors):
            v = gen.normal(size=d) * gen.lognormal(0.0, 1.0)
            errors = [dequantize(quantize(v, scheme, stream)) - v for _ in range(draws)]
            moment = empirical_second_moment(errors).mean
            worst_ratio = max(worst_ratio, moment / (limit * float(v @ v)))
    return CheckResult(
        "quantizer-variance",
        worst_ratio <= slack,
        measured=worst_ratio,
        bound=slack,
        detail=f"worst empirical/bound ratio over {n_vectors} vectors per scheme",
    )


# ---------------------------------------------------------------------------
# error-feedback recursion checks


def check_error_history_identity(
    settings: tuple[tuple[float, float], ...] = (
        (0.2, 0.9),
        (0.05, 1.0),
        (1.0, 1.0),
        (0.3, 0.5),
        (0.0, 0.7),
    ),
    steps: int = 20,
    d: int = 32,
    seed: int = 11,
    rel_tol: float = 1e-10,
) -> CheckResult:
    """Incrementally maintained h must equal its closed-form reconstruction."""
    from .feedback import compensate, update_error

    gen = np.random.default_rng(seed)
    scheme = QuantScheme(s=4, norm_kind=NormKind.L2, bucket_size=d)
    worst = 0.0
    for alpha, beta in settings:
        cfg = FeedbackConfig(alpha=alpha, beta=beta)
        state = FeedbackState.zeros(d)
        stream = RngStream(seed)
        errors = []
        for _ in range(steps):
            g = gen.normal(size=d)
            v = compensate(g, state, cfg)
            g_tilde = dequantize(wire.decode(wire.encode(quantize(v, scheme, stream))))
            errors.append(g_tilde - v)
            state = update_error(state, g, g_tilde, cfg)
            oracle = reconstruct_error_history(errors, cfg, dim=d)
            scale = max(float(np.linalg.norm(oracle)), 1e-30)
            worst = max(worst, float(np.linalg.norm(state.h - oracle)) / scale)
    return CheckResult(
        "error-history-identity",
        worst <= rel_tol,
        measured=worst,
        bound=rel_tol,
        detail=f"{len(settings)} (alpha, beta) settings, {steps} steps each",
    )


def check_qsgd_equivalence(
    iterations: int = 100,
    d: int = 32,
    seed: int = 5,
) -> CheckResult:
    """Compensation with alpha = 0 must be byte-identical to no compensation."""
    problem = gen_quadratic(d=d, n=128, p_workers=2, seed=seed, conditioning=(1.0, 8.0))
    scheme = QuantScheme(s=4, norm_kind=NormKind.L2, bucket_size=d)
    base = TrainerConfig(
        eta=0.02, p_workers=2, batch_size=8, iterations=iterations,
        codec=CodecKind.QSGD, scheme=scheme,
        feedback=FeedbackConfig(alpha=0.0, beta=1.0), seed=seed,
    )
    ecq0 = replace(base, codec=CodecKind.ECQ, feedback=FeedbackConfig(alpha=0.0, beta=0.7))

    def collect(cfg):
        msgs: list[bytes] = []
        log = run_experiment(
            cfg, problem, n_threads=1, trace_hook=lambda tr: msgs.append(tr.message)
        )
        return msgs, log

    msgs_a, log_a = collect(base)
    msgs_b, log_b = collect(ecq0)
    same_bytes = msgs_a == msgs_b
    same_path = np.array_equal(log_a.train_loss, log_b.train_loss) and np.array_equal(
        log_a.dist_sq_to_opt, log_b.dist_sq_to_opt
    )
    return CheckResult(
        "qsgd-reduction",
        same_bytes and same_path,
        detail=f"{len(msgs_a)} messages compared over {iterations} iterations",
    )


# ---------------------------------------------------------------------------
# instrumented trainer runs


@dataclass
class RunStats:
    """Per-iteration moments recorded from one instrumented training run."""

    dist_sq: np.ndarray  # ||w^(t+1) - w*||^2
    xi_bar_sq: np.ndarray  # ||averaged sampling noise||^2
    eps_bar_sq: np.ndarray  # ||averaged quantization error||^2
    eps_worker_sq: np.ndarray  # mean over workers of ||eps_p||^2
    h_sq_mean: np.ndarray  # mean over workers of ||h_p||^2 (after update)
    g_sq_max: float  # max over (t, p) of ||g_p||^2


def instrumented_run(cfg: TrainerConfig, problem: QuadraticProblem) -> RunStats:
    """Run the training loop recording the moments the bounds talk about."""
    dim = problem.dim
    w = np.zeros(dim)
    workers = [WorkerState(p, FeedbackState.zeros(dim)) for p in range(cfg.p_workers)]
    t_count = cfg.iterations
    stats = RunStats(
        dist_sq=np.empty(t_count),
        xi_bar_sq=np.empty(t_count),
        eps_bar_sq=np.empty(t_count),
        eps_worker_sq=np.empty(t_count),
        h_sq_mean=np.empty(t_count),
        g_sq_max=0.0,
    )
    for t in range(t_count):
        traces: list[StepTrace] = []
        results = [
            worker_step(wk, w, problem, cfg, t, trace_hook=traces.append)
            for wk in workers
        ]
        workers = [wk for _, wk in results]
        g_bar = np.mean([tr.gradient for tr in traces], axis=0)
        eps = [tr.transmitted - tr.compensated for tr in traces]
        stats.xi_bar_sq[t] = float(np.sum((g_bar - problem.full_gradient(w)) ** 2))
        eps_bar = np.mean(eps, axis=0)
        stats.eps_bar_sq[t] = float(eps_bar @ eps_bar)
        stats.eps_worker_sq[t] = float(np.mean([e @ e for e in eps]))
        stats.g_sq_max = max(
            stats.g_sq_max, max(float(tr.gradient @ tr.gradient) for tr in traces)
        )
        stats.h_sq_mean[t] = float(
            np.mean([wk.feedback.h @ wk.feedback.h for wk in workers])
        )
        g_global = np.mean([tr.transmitted for tr in traces], axis=0)
        w = apply_update(w, g_global, cfg.eta)
        stats.dist_sq[t] = problem.distance_sq_to_opt(w)
    return stats


def check_error_variance_trajectory(
    d: int = 256,
    s: int = 4,
    alpha: float = 0.2,
    beta: float = 0.9,
    eta: float = 0.02,
    seeds: int = 100,
    checkpoints: tuple[int, ...] = (1, 10, 100, 1000),
    seed0: int = 400,
) -> CheckResult:
    """Measured E||eps^(t)||^2 must stay below the closed-form curve with B
    set to the empirical max ||g||^2."""
    t_max = max(checkpoints)
    problem = gen_quadratic(d=d, n=1024, p_workers=1, seed=97, conditioning=(1.0, 4.0))
    cfg = TrainerConfig(
        eta=eta, p_workers=1, batch_size=20, iterations=t_max + 1,
        codec=CodecKind.ECQ,
        scheme=QuantScheme(s=s, norm_kind=NormKind.L2, bucket_size=d),
        feedback=FeedbackConfig(alpha=alpha, beta=beta), seed=0,
    )
    runs = [instrumented_run(replace(cfg, seed=seed0 + k), problem) for k in range(seeds)]
    b_emp = max(r.g_sq_max for r in runs)
    params = BoundParams(
        d=d, s=s, B=b_emp, alpha=alpha, beta=beta, eta=eta,
        a1=problem.a1, a2=problem.a2, p_workers=1,
    )
    if params.lam >= 1.0:
        return CheckResult(
            "error-variance-trajectory", False, detail=f"unstable regime (lambda={params.lam:.3f})"
        )
    worst = 0.0
    for t in checkpoints:
        measured = float(np.mean([r.eps_worker_sq[t] for r in runs]))
        limit = variance_bound_ecq(t, params)
        worst = max(worst, measured / limit)
    return CheckResult(
        "error-variance-trajectory",
        worst <= 1.0,
        measured=worst,
        bound=1.0,
        detail=f"worst measured/bound over t in {checkpoints}, {seeds} seeds",
    )


def check_error_bound_trajectory(
    d: int = 16,
    seeds: int = 200,
    t_max: int = 500,
    alpha: float = 0.2,
    beta: float = 0.9,
    s: int = 4,
    eta: float = 0.02,
    p_workers: int = 2,
    seed0: int = 900,
) -> CheckResult:
    """Averaged ||w^(t+1) - w*||^2 must stay below the worst-case expansion
    for every t, with B, sigma^2, R^2 measured from the runs themselves
    (times a 1.1 safety factor)."""
    problem = gen_quadratic(
        d=d, n=512, p_workers=p_workers, seed=41, conditioning=(1.0, 8.0)
    )
    cfg = TrainerConfig(
        eta=eta, p_workers=p_workers, batch_size=5, iterations=t_max + 1,
        codec=CodecKind.ECQ,
        scheme=QuantScheme(s=s, norm_kind=NormKind.L2, bucket_size=d),
        feedback=FeedbackConfig(alpha=alpha, beta=beta), seed=0,
    )
    runs = [instrumented_run(replace(cfg, seed=seed0 + k), problem) for k in range(seeds)]
    dist0 = problem.distance_sq_to_opt(np.zeros(d))
    r_sq = 1.1 * max(dist0, max(float(r.dist_sq.max()) for r in runs))
    sigma_sq = 1.1 * float(np.mean([r.xi_bar_sq for r in runs], axis=0).max())
    b_emp = 1.1 * max(r.g_sq_max for r in runs)
    params = BoundParams(
        d=d, s=s, B=b_emp, alpha=alpha, beta=beta, eta=eta,
        a1=problem.a1, a2=problem.a2, sigma_sq=sigma_sq, R_sq=r_sq,
        p_workers=p_workers,
    )
    if params.lam >= 1.0:
        return CheckResult(
            "error-bound-trajectory", False, detail=f"unstable regime (lambda={params.lam:.3f})"
        )
    h, _ = spectral_H(problem, eta)
    eps_bounds = pseudo_error_bounds(t_max, params)
    lhs = np.mean([r.dist_sq for r in runs], axis=0)
    worst = 0.0
    worst_t = -1
    for t in range(t_max + 1):
        rhs = error_bound_rhs(t, params, h, eps_bounds)
        ratio = lhs[t] / rhs
        if ratio > worst:
            worst, worst_t = ratio, t
    return CheckResult(
        "error-bound-trajectory",
        worst <= 1.0,
        measured=worst,
        bound=1.0,
        detail=f"worst measured/bound ratio at t={worst_t}, {seeds} seeds, t <= {t_max}",
    )


# ---------------------------------------------------------------------------
# suppression-matrix checks


def _suppression_grid(
    params_base: BoundParams, h: np.ndarray, n_points: int
) -> list[tuple[float, float, int]]:
    """(alpha, beta, gap) points where the norm-form suppression bound is a
    rigorous consequence of the order-form bound.

    That is the no-overshoot regime: compensation shrinks each mode's
    multiplier toward zero without flipping its sign, so the suppressed
    matrix stays PSD and its norm is attained at the top mode. Settings
    with beta below the smallest mode contraction 1 - eta a2 qualify for
    every gap; larger beta qualifies for short gaps. Overshooting settings
    (large alpha, long gaps) satisfy only the one-sided order bound and are
    excluded.
    """
    gaps = (1, 2, 3, 5, 8, 13, 21, 34, 50)
    beta_star = 1.0 - params_base.eta * params_base.a1
    h_eigs = np.linalg.eigvalsh((h + h.T) / 2.0)
    betas = (0.70, 0.75, 0.80, 1.0 - params_base.eta * params_base.a2, 0.90, beta_star)
    grid = []
    for alpha in (0.02, 0.05, 0.1, 0.2, 0.3):
        for beta in betas:
            if not 0.0 <= beta <= 1.0 or alpha >= beta:
                continue
            p = replace(params_base, alpha=alpha, beta=beta)
            if p.lam >= 1.0:
                continue
            q = beta - alpha
            for gap in gaps:
                if theta_bound_coeff(gap, 0, p) < 0.0:
                    continue
                # per-mode multiplier: no sign flip on any eigenvalue
                poly = np.ones_like(h_eigs)
                for k in range(gap):
                    poly = h_eigs * poly - alpha * q**k
                if poly.min() < 0.0:
                    continue
                grid.append((alpha, beta, gap))
                if len(grid) == n_points:
                    return grid
    return grid


def check_suppression_matrix_bound(
    d: int = 16,
    eta: float = 0.02,
    n_points: int = 100,
    tol: float = 1e-10,
    seed: int = 23,
) -> CheckResult:
    """||Theta|| must stay below the scalar coefficient times ||H^gap||."""
    problem = gen_quadratic(d=d, n=256, p_workers=1, seed=seed, conditioning=(1.0, 8.0))
    h, h_norm = spectral_H(problem, eta)
    base = BoundParams(
        d=d, s=4, B=1.0, alpha=0.1, beta=1.0, eta=eta, a1=problem.a1, a2=problem.a2
    )
    grid = _suppression_grid(base, h, n_points)
    if len(grid) < n_points:
        return CheckResult(
            "suppression-matrix-bound", False, detail=f"only {len(grid)} grid points found"
        )
    worst_excess = -np.inf
    for alpha, beta, gap in grid:
        p = replace(base, alpha=alpha, beta=beta)
        lhs = float(np.linalg.norm(theta(gap, 0, p, h), 2))
        rhs = theta_bound_coeff(gap, 0, p) * h_norm**gap
        worst_excess = max(worst_excess, lhs - rhs)
    return CheckResult(
        "suppression-matrix-bound",
        worst_excess <= tol,
        measured=worst_excess,
        bound=tol,
        detail=f"max ||Theta|| - coeff*||H^gap|| over {len(grid)} grid points",
    )


def check_suppression_ratio_decay(
    alpha: float = 0.2,
    s: int = 4,
    d: int = 256,
    eta: float = 0.02,
    a1: float = 1.0,
    a2: float = 25.0,
    threshold: float = 1e-2,
) -> CheckResult:
    """With beta = 1 - eta a1, the contribution-ratio bound must decrease
    strictly in the gap and cross ``threshold`` at the computed horizon."""
    beta = 1.0 - eta * a1
    params = BoundParams(d=d, s=s, B=1.0, alpha=alpha, beta=beta, eta=eta, a1=a1, a2=a2)
    if alpha == 0.0:
        ratios = [tau_ratio_bound(gap, 0, params) for gap in range(1, 20)]
        flat = all(abs(r - 1.0) < 1e-12 for r in ratios)
        return CheckResult(
            "suppression-ratio-decay", flat, measured=max(ratios), bound=1.0,
            detail="QSGD baseline (alpha = 0): ratio identically 1",
        )
    if params.lam >= 1.0:
        return CheckResult(
            "suppression-ratio-decay", False, detail=f"unstable regime (lambda={params.lam:.3f})"
        )
    horizon = tau_decay_horizon(params, threshold)
    ratios = np.array([tau_ratio_bound(gap, 0, params) for gap in range(1, horizon + 10)])
    decreasing = bool(np.all(np.diff(ratios) < 0.0))
    below = bool(ratios[horizon - 1] < threshold)
    return CheckResult(
        "suppression-ratio-decay",
        decreasing and below,
        measured=float(ratios[horizon - 1]),
        bound=threshold,
        detail=f"strictly decreasing over {len(ratios)} gaps, horizon={horizon}",
    )


def check_pseudo_error_scaling(
    d: int = 64,
    p_values: tuple[int, ...] = (1, 2, 4, 8),
    seeds: int = 20,
    iterations: int = 200,
    window: int = 100,
    rel_tol: float = 0.20,
    seed0: int = 3000,
) -> CheckResult:
    """E||eps_bar||^2 must equal the per-worker level divided by P (within
    ``rel_tol``), reflecting cross-worker independence of the quantization
    draws."""
    worst = 0.0
    for p in p_values:
        problem = gen_quadratic(d=d, n=1024, p_workers=p, seed=55, conditioning=(1.0, 8.0))
        cfg = TrainerConfig(
            eta=0.02, p_workers=p, batch_size=10, iterations=iterations,
            codec=CodecKind.ECQ,
            scheme=QuantScheme(s=4, norm_kind=NormKind.L2, bucket_size=d),
            feedback=FeedbackConfig(alpha=0.2, beta=0.9), seed=0,
        )
        runs = [
            instrumented_run(replace(cfg, seed=seed0 + k), problem) for k in range(seeds)
        ]
        averaged = float(np.mean([r.eps_bar_sq[-window:] for r in runs]))
        per_worker = float(np.mean([r.eps_worker_sq[-window:] for r in runs]))
        worst = max(worst, abs(p * averaged / per_worker - 1.0))
    return CheckResult(
        "pseudo-error-worker-scaling",
        worst <= rel_tol,
        measured=worst,
        bound=rel_tol,
        detail=f"max deviation of P * E||eps_bar||^2 / E||eps_p||^2 from 1, P in {p_values}",
    )


def check_feedback_stability(
    d: int = 256,
    seeds: int = 20,
    iterations: int = 2000,
    seed0: int = 5000,
) -> CheckResult:
    """Stable settings keep E||h||^2 under its geometric ceiling; an unstable
    setting must grow after iteration 100 or trip divergence detection."""
    problem = gen_quadratic(d=d, n=1024, p_workers=1, seed=77, conditioning=(1.0, 4.0))
    scheme = QuantScheme(s=4, norm_kind=NormKind.L2, bucket_size=d)

    stable_cfg = TrainerConfig(
        eta=0.02, p_workers=1, batch_size=20, iterations=iterations,
        codec=CodecKind.ECQ, scheme=scheme,
        feedback=FeedbackConfig(alpha=0.2, beta=0.9), seed=0,
    )
    runs = [
        instrumented_run(replace(stable_cfg, seed=seed0 + k), problem)
        for k in range(seeds)
    ]
    b_emp = max(r.g_sq_max for r in runs)
    g = gamma(d, scheme.s)
    lam = lambda_of(0.2, 0.9, g)
    ceiling = g * b_emp / (1.0 - lam) * 1.05
    h_mean = np.mean([r.h_sq_mean for r in runs], axis=0)
    stable_ok = bool(h_mean.max() <= ceiling)

    # well inside the unstable regime: lambda = 0.75^2 * 4 + 0.15^2 = 2.27
    alpha_bad = 0.75
    lam_bad = lambda_of(alpha_bad, 0.9, g)
    unstable_cfg = replace(
        stable_cfg, feedback=FeedbackConfig(alpha=alpha_bad, beta=0.9), iterations=400
    )
    bad_logs = [
        run_experiment(replace(unstable_cfg, seed=seed0 + k), problem) for k in range(5)
    ]
    if any(log.status == "diverged" for log in bad_logs):
        unstable_ok = True
        mode = "divergence detected"
    else:
        n = min(len(log) for log in bad_logs)
        h_series = np.mean([log.h_norm_sq_mean[:n] for log in bad_logs], axis=0)
        blocks = h_series[100 : (n // 20) * 20].reshape(-1, 20).mean(axis=1)
        unstable_ok = bool(np.all(np.diff(blocks) > 0))
        mode = "monotone growth after iteration 100"
    return CheckResult(
        "feedback-stability",
        stable_ok and unstable_ok,
        measured=float(h_mean.max()),
        bound=ceiling,
        detail=f"stable lambda={lam:.3f} bounded; unstable lambda={lam_bad:.3f}: {mode}",
    )


def check_convergence_ordering(
    problem_factory,
    seeds: int = 20,
    iterations: int = 1000,
    eta: float = 0.02,
    s: int = 4,
    alpha: float = 0.2,
    beta: float = 0.9,
    p_workers: int = 4,
    batch_size: int = 10,
    min_gap: float = 0.20,
    max_fp32_factor: float = 2.0,
    seed0: int = 7000,
    name: str = "convergence-ordering",
) -> CheckResult:
    """Final distance to optimum must order FP32 <= compensated <= plain
    quantization, with compensation at least ``min_gap`` below plain and
    within ``max_fp32_factor`` of full precision."""
    kinds = (CodecKind.FP32, CodecKind.ECQ, CodecKind.QSGD)
    finals: dict[CodecKind, list[float]] = {kind: [] for kind in kinds}
    for k in range(seeds):
        problem = problem_factory(k)
        scheme = QuantScheme(s=s, norm_kind=NormKind.L2, bucket_size=problem.dim)
        for kind in kinds:
            cfg = TrainerConfig(
                eta=eta, p_workers=p_workers, batch_size=batch_size,
                iterations=iterations, codec=kind, scheme=scheme,
                feedback=FeedbackConfig(alpha=alpha, beta=beta), seed=seed0 + k,
            )
            log = run_experiment(cfg, problem)
            if log.status != "ok":
                return CheckResult(name, False, detail=f"{kind.value} run diverged")
            finals[kind].append(float(log.dist_sq_to_opt[-1]))
    fp32 = float(np.mean(finals[CodecKind.FP32]))
    ecq = float(np.mean(finals[CodecKind.ECQ]))
    qsgd = float(np.mean(finals[CodecKind.QSGD]))
    ordered = fp32 <= ecq <= qsgd
    gap_ok = ecq <= (1.0 - min_gap) * qsgd
    near_fp32 = ecq <= max_fp32_factor * fp32
    return CheckResult(
        name,
        ordered and gap_ok and near_fp32,
        measured=ecq,
        bound=qsgd,
        detail=(
            f"mean final dist^2 fp32={fp32:.4g} ecq={ecq:.4g} qsgd={qsgd:.4g} "
            f"({seeds} seeds, T={iterations})"
        ),
    )


# ---------------------------------------------------------------------------
# driver


def run_default_checks(
    alpha: float = 0.2,
    beta: float = 0.9,
    s: int = 4,
    eta: float = 0.02,
    quick: bool = False,
) -> list[CheckResult]:
    """The bound-verification battery used by the command-line driver."""
    scale = 10 if quick else 1
    checks = [
        check_quantizer_unbiased(draws=100_000 // scale),
        check_quantizer_variance(n_vectors=100 // scale),
        check_error_history_identity(),
        check_qsgd_equivalence(),
        check_error_variance_trajectory(
            alpha=alpha, beta=beta, s=s, eta=eta,
            seeds=100 // scale,
            checkpoints=(1, 10, 100, 1000) if not quick else (1, 10, 100),
        ),
        check_error_bound_trajectory(
            alpha=alpha, beta=beta, s=s, eta=eta,
            seeds=200 // scale, t_max=500 if not quick else 100,
        ),
        check_suppression_matrix_bound(eta=eta),
        check_suppression_ratio_decay(alpha=alpha, s=s, eta=eta),
        check_pseudo_error_scaling(seeds=20 // (2 if quick else 1)),
        check_feedback_stability(seeds=20 // (2 if quick else 1)),
    ]
    return checks
