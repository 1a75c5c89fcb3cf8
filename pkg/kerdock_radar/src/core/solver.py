"""
Sparse recovery: lasso by accelerated proximal gradient with adaptive
restart, support detection, least-squares debiasing and the matched
filter baseline
"""

import logging
import math
from typing import Optional, Tuple, Union

import numpy as np
from scipy.linalg import lstsq, qr, solve_triangular, svdvals
from scipy.sparse.linalg import LinearOperator, cg

from .errors import DimensionError
from .models import DebiasResult, Grid, LassoConfig, MatchedFilterMap, RecoveryResult
from .sensing import Operator, ScaledOperator, operator_norm
from .waveforms import ambiguity_surface

logger = logging.getLogger(__name__)

QR_SUPPORT_LIMIT = 10_000
MAX_BACKTRACKS = 60


def default_lambda(sigma: float, grid: Grid) -> float:
    """lambda = 2 sigma sqrt(2 log(N_tau N_f N_beta))"""
    if sigma < 0:
        raise ValueError(f"sigma must be non-negative, got {sigma}")
    return 2.0 * sigma * math.sqrt(2.0 * math.log(grid.n_cells))


def soft_threshold(x: np.ndarray, threshold: float) -> np.ndarray:
    """Complex shrinkage x * max(0, 1 - threshold / |x|)"""
    magnitude = np.abs(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        factor = np.maximum(0.0, 1.0 - threshold / magnitude)
    factor[magnitude == 0] = 0.0
    return x * factor


def lasso_objective(residual: np.ndarray, x: np.ndarray, lam: float) -> float:
    """1/2 ||r||^2 + lambda ||x||_1 for the residual r = A x - y"""
    return 0.5 * float(np.vdot(residual, residual).real) + lam * float(np.sum(np.abs(x)))


def proximal_step(x: np.ndarray, gradient: np.ndarray, lam: float, step: float) -> np.ndarray:
    """Forward-backward step soft_threshold(x - step * gradient, step * lam)"""
    return soft_threshold(x - step * gradient, step * lam)


def lasso_solve(
    op: Operator,
    y: np.ndarray,
    cfg: LassoConfig,
    lipschitz: Optional[float] = None,
    seed: int = 0,
) -> RecoveryResult:
    """
    Minimize 1/2 ||A x - y||^2 + lambda ||x||_1.

    With cfg.normalize_columns the problem is solved for A D^{-1} and the
    result mapped back through D^{-1}. A step that would raise the
    objective resets the momentum and is replaced by a plain proximal step,
    so the recorded objective never increases.

    Args:
        op: sensing operator (or any operator with forward/adjoint/column_norms)
        y: measurement
        cfg: lambda, tolerances and column normalization flag
        lipschitz: known ||A||^2 of the solved operator; estimated by power iteration otherwise
        seed: seed of the power iteration start

    Returns:
        RecoveryResult with x_lasso filled in
    """
    y = np.asarray(y, dtype=complex)
    if y.shape != (op.shape[0],):
        raise DimensionError(f"Measurement must have length {op.shape[0]}, got shape {y.shape}")

    scales = np.ones(op.shape[1])
    solve_op: Operator = op
    if cfg.normalize_columns:
        norms = op.column_norms()
        scales = np.where(norms > 0, norms, 1.0)
        solve_op = ScaledOperator(op, scales)

    lam = cfg.lam
    if lipschitz is None:
        lipschitz = 1.01 * operator_norm(solve_op, tol=1e-6, max_iters=500, seed=seed) ** 2
    if lipschitz <= 0:
        lipschitz = 1.0

    def data_fit(a_point: np.ndarray) -> float:
        residual = a_point - y
        return 0.5 * float(np.vdot(residual, residual).real)

    def prox_from(point: np.ndarray, a_point: np.ndarray, lip: float) -> Tuple[np.ndarray, np.ndarray, float]:
        gradient = solve_op.adjoint(a_point - y)
        f_point = data_fit(a_point)
        for _ in range(MAX_BACKTRACKS):
            candidate = proximal_step(point, gradient, lam, 1.0 / lip)
            a_candidate = solve_op.forward(candidate)
            if not cfg.backtracking:
                break
            step = candidate - point
            upper = f_point + float(np.vdot(gradient, step).real) + 0.5 * lip * float(np.vdot(step, step).real)
            if data_fit(a_candidate) <= upper + 1e-12 * max(abs(upper), 1.0):
                break
            lip *= 2.0
            logger.debug(f"Backtracking: Lipschitz estimate raised to {lip:.6e}")
        return candidate, a_candidate, lip

    n = op.shape[1]
    x = np.zeros(n, dtype=complex)
    ax = np.zeros(op.shape[0], dtype=complex)
    z, az = x, ax
    t = 1.0
    objective = lasso_objective(ax - y, x, lam)
    history = [objective]
    restarts = 0
    converged = False
    iteration = 0

    for iteration in range(1, cfg.max_iters + 1):
        x_new, ax_new, lipschitz = prox_from(z, az, lipschitz)
        objective_new = lasso_objective(ax_new - y, x_new, lam)
        if objective_new > objective:
            restarts += 1
            t = 1.0
            x_new, ax_new, lipschitz = prox_from(x, ax, lipschitz)
            objective_new = lasso_objective(ax_new - y, x_new, lam)

        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        momentum = (t - 1.0) / t_new
        z = x_new + momentum * (x_new - x)
        az = ax_new + momentum * (ax_new - ax)

        decrease = objective - objective_new
        x, ax, t = x_new, ax_new, t_new
        history.append(objective_new)
        previous, objective = objective, objective_new
        if decrease <= cfg.rel_tol * max(previous, np.finfo(float).tiny):
            converged = True
            break

    gradient = solve_op.adjoint(ax - y)
    worst = float(np.max(np.abs(gradient))) if n else 0.0
    kkt_ratio = worst / lam if lam > 0 else (0.0 if worst == 0.0 else math.inf)

    if not converged:
        logger.warning(f"Lasso did not converge in {cfg.max_iters} iterations (objective {objective:.6e})")
    logger.debug(
        f"Lasso finished after {iteration} iterations, objective {objective:.6e}, "
        f"KKT ratio {kkt_ratio:.4f}, {restarts} restarts"
    )
    return RecoveryResult(
        x_lasso=x / scales,
        iterations=iteration,
        objective=objective,
        converged=converged,
        lam=lam,
        kkt_ratio=kkt_ratio,
        kkt_tol=cfg.kkt_tol,
        restarts=restarts,
        lipschitz=lipschitz,
        objective_history=history,
        column_scales=scales if cfg.normalize_columns else None,
    )


def detect_support(
    x_lasso: np.ndarray, cfg: Union[LassoConfig, float], column_scales: Optional[np.ndarray] = None
) -> np.ndarray:
    """
    Indices with |x| > threshold * max|x|; empty when x is zero.

    With a LassoConfig whose detection_floor is positive, a cell must also
    reach that floor in the column-normalized domain, |x_k| * ||A_k||.
    """
    threshold = cfg.support_threshold if isinstance(cfg, LassoConfig) else float(cfg)
    magnitude = np.abs(x_lasso)
    peak = float(np.max(magnitude)) if magnitude.size else 0.0
    if peak == 0.0:
        return np.zeros(0, dtype=np.int64)
    keep = magnitude > threshold * peak
    if isinstance(cfg, LassoConfig) and cfg.detection_floor > 0:
        scales = np.ones_like(magnitude) if column_scales is None else np.asarray(column_scales, dtype=float)
        keep &= magnitude * scales > cfg.detection_floor
    return np.flatnonzero(keep).astype(np.int64)


def debias(
    op: Operator,
    y: np.ndarray,
    support: np.ndarray,
    qr_limit: int = QR_SUPPORT_LIMIT,
    cg_tol: float = 1e-10,
    rank_tol: float = 1e-8,
) -> DebiasResult:
    """
    Least squares restricted to the support columns: QR up to qr_limit
    columns, conjugate gradient on the normal equations beyond.
    """
    y = np.asarray(y, dtype=complex)
    support = np.asarray(support, dtype=np.int64)
    n = op.shape[1]
    x = np.zeros(n, dtype=complex)
    if support.size == 0:
        return DebiasResult(
            x=x, support=support, residual_norm=float(np.linalg.norm(y)), rank_deficient=False, method="empty"
        )
    if support.size > op.shape[0]:
        raise DimensionError(f"Support of size {support.size} exceeds the {op.shape[0]} measurements")

    converged = True
    if support.size <= qr_limit:
        columns = op.columns(support)
        q, r = qr(columns, mode="economic")
        singular = svdvals(r)
        condition = float(singular[0] / singular[-1]) if singular[-1] > 0 else math.inf
        rank_deficient = bool(singular[-1] < rank_tol * singular[0])
        if rank_deficient:
            logger.warning(
                f"Support columns are numerically rank deficient (condition {condition:.3e}); "
                "the detected support is likely wrong"
            )
            amplitudes = lstsq(columns, y)[0]
            method = "lstsq"
        else:
            amplitudes = solve_triangular(r, q.conj().T @ y)
            method = "qr"
        residual = y - columns @ amplitudes
    else:

        def embed(values: np.ndarray) -> np.ndarray:
            full = np.zeros(n, dtype=complex)
            full[support] = values
            return full

        normal = LinearOperator(
            (support.size, support.size),
            matvec=lambda v: op.adjoint(op.forward(embed(v)))[support],
            dtype=complex,
        )
        rhs = op.adjoint(y)[support]
        amplitudes, info = cg(normal, rhs, rtol=cg_tol, maxiter=10 * support.size)
        rank_deficient = False
        converged = info == 0
        if not converged:
            logger.warning(f"Conjugate gradient debiasing stopped with info={info}")
        condition = math.nan
        method = "cg"
        residual = y - op.forward(embed(amplitudes))

    x[support] = amplitudes
    return DebiasResult(
        x=x,
        support=support,
        residual_norm=float(np.linalg.norm(residual)),
        rank_deficient=rank_deficient,
        method=method,
        condition_number=condition,
        converged=converged,
    )


def recover(
    op: Operator, y: np.ndarray, cfg: LassoConfig, lipschitz: Optional[float] = None, seed: int = 0
) -> RecoveryResult:
    """Debiased lasso: solve, detect the support, re-fit on it"""
    result = lasso_solve(op, y, cfg, lipschitz=lipschitz, seed=seed)
    scales = result.column_scales
    if scales is None and cfg.detection_floor > 0:
        scales = op.column_norms()
    result.support = detect_support(result.x_lasso, cfg, scales)
    debiased = debias(op, y, result.support)
    result.x_debiased = debiased.x
    result.rank_deficient = debiased.rank_deficient
    result.debias_converged = debiased.converged
    result.residual_norm = debiased.residual_norm
    return result


def matched_filter_map(
    waveform: np.ndarray,
    y: np.ndarray,
    n_doppler: Optional[int] = None,
    peak_tol: float = 1e-9,
) -> MatchedFilterMap:
    """|<y, M_f T_tau s>| over the delay-Doppler grid, indexed [delay, doppler]"""
    waveform = np.asarray(waveform, dtype=complex)
    y = np.asarray(y, dtype=complex)
    if waveform.shape != y.shape or waveform.ndim != 1:
        raise DimensionError(f"Waveform and record must be equal-length vectors, got {waveform.shape} and {y.shape}")
    n_doppler = n_doppler or len(waveform)
    surface = np.abs(ambiguity_surface(waveform, y)).T[:, :n_doppler]
    peak = float(np.max(surface))
    argmax = np.unravel_index(int(np.argmax(surface)), surface.shape)
    cells = np.argwhere(surface >= peak * (1.0 - peak_tol)) if peak > 0 else np.argwhere(surface >= 0)
    return MatchedFilterMap(
        surface=surface,
        peak=peak,
        argmax=(int(argmax[0]), int(argmax[1])),
        peak_cells=[(int(d), int(f)) for d, f in cells],
    )
