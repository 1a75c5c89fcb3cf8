"""
Monte-Carlo harness: parallel trial campaigns, sweeps, ROC curves and
empirical checks of the operator-norm, coherence, column-norm and
tail-bound estimates the recovery guarantee rests on.
"""

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, replace
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats

from .config import TrialConfig
from .errors import HypothesisError, KerdockRadarError, MemoryCapError
from .models import BenchmarkReport, RocCurve, TheoryReport, TrialRecord, WaveformSet
from .pipeline import SimulationPipeline, build_waveforms
from .scene_grid import GEOMETRY_STREAM, SOLVER_STREAM, derive_seed, make_grid, sample_geometry
from .sensing import SensingOperator, coherence, column_norms, operator_norm
from .waveforms import MAX_PRIME, next_prime, verify_incoherence

logger = logging.getLogger(__name__)

ProgressCallback = Callable[[float, str], None]

ROC_THRESHOLD_COUNT = 200
ROC_THRESHOLD_FLOOR = 1e-6
CONFIDENCE = 0.95


def _run_trial_worker(cfg: TrialConfig, waveforms: Optional[WaveformSet], trial: int) -> TrialRecord:
    """Module-level so the process pool can pickle it"""
    return SimulationPipeline(cfg, waveforms=waveforms, dense_oracle=getattr(cfg, "dense_oracle", False)).run_trial(
        trial
    )


def run_trials(
    cfg: TrialConfig,
    n_jobs: Optional[int] = None,
    waveforms: Optional[WaveformSet] = None,
    progress_callback: Optional[ProgressCallback] = None,
) -> List[TrialRecord]:
    """
    Run cfg.trials independent trials, in worker processes unless n_jobs is 1.

    Every random draw of trial t is seeded from (cfg.seed, t), so the
    records are identical whatever the worker count. A trial that raises
    becomes a record with success=False.

    Returns:
        Records sorted by trial index
    """
    cfg.validate()
    if waveforms is None:
        waveforms = build_waveforms(cfg)
    trials = list(range(cfg.trials))
    logger.info(f"Running {len(trials)} trials with n_jobs={n_jobs or 'auto'}")
    start_time = time.time()

    if n_jobs == 1:
        pipeline = SimulationPipeline(cfg, waveforms=waveforms, dense_oracle=getattr(cfg, "dense_oracle", False))
        records = pipeline.process_campaign(trials, progress_callback=progress_callback)
    else:
        records = []
        with ProcessPoolExecutor(max_workers=n_jobs) as executor:
            futures = {executor.submit(_run_trial_worker, cfg, waveforms, trial): trial for trial in trials}
            for done, future in enumerate(as_completed(futures), start=1):
                trial = futures[future]
                try:
                    records.append(future.result())
                except Exception as e:
                    logger.error(f"Worker for trial {trial} failed: {e}")
                    records.append(
                        TrialRecord(trial=trial, seed=derive_seed(cfg.seed, trial, GEOMETRY_STREAM), success=False,
                                    sparsity=cfg.sparsity, n_cells=cfg.n_cells, errors=[str(e)])
                    )
                if progress_callback:
                    progress_callback(100.0 * done / len(trials), f"Trial {done}/{len(trials)}")

    records.sort(key=lambda r: r.trial)
    failed = sum(1 for r in records if not r.success)
    if failed:
        logger.warning(f"{failed}/{len(records)} trials failed")
    logger.info(f"Trials completed in {time.time() - start_time:.2f} seconds")
    return records


@dataclass
class SweepPoint:
    """Records and ROC curve at one (sparsity, SNR) setting"""

    sparsity: int
    snr_db: Optional[float]
    records: List[TrialRecord]
    curve: Optional[RocCurve]

    @property
    def exact_recovery_rate(self) -> float:
        done = [r for r in self.records if r.success]
        return sum(r.support_exact for r in done) / len(done) if done else 0.0


def run_sweep(
    cfg: TrialConfig,
    sparsities: Sequence[int],
    snrs: Sequence[Optional[float]],
    n_jobs: Optional[int] = None,
    waveforms: Optional[WaveformSet] = None,
) -> List[SweepPoint]:
    """Campaigns over the sparsity x SNR grid with the same master seed"""
    if waveforms is None:
        waveforms = build_waveforms(cfg)
    points = []
    for sparsity in sparsities:
        for snr in snrs:
            point_cfg = replace(cfg, sparsity=int(sparsity), snr_db=snr)
            logger.info(f"Sweep point S={sparsity}, SNR={snr} dB")
            records = run_trials(point_cfg, n_jobs=n_jobs, waveforms=waveforms)
            try:
                curve = roc(records, label=f"S={sparsity}, SNR={snr}")
            except KerdockRadarError as e:
                logger.warning(f"No ROC at S={sparsity}, SNR={snr}: {e}")
                curve = None
            points.append(SweepPoint(sparsity=int(sparsity), snr_db=snr, records=records, curve=curve))
    return points


def _usable(records: Sequence[TrialRecord]) -> List[TrialRecord]:
    usable = [r for r in records if r.success and r.magnitudes is not None]
    if not usable:
        raise KerdockRadarError("No successful trial records with magnitudes to build a ROC from")
    return usable


def default_thresholds(
    records: Sequence[TrialRecord], count: int = ROC_THRESHOLD_COUNT, floor: float = ROC_THRESHOLD_FLOOR
) -> np.ndarray:
    """count log-spaced thresholds from the largest magnitude down to floor times it"""
    peak = max(float(np.max(r.magnitudes)) if r.magnitudes.size else 0.0 for r in _usable(records))
    if peak == 0.0:
        return np.zeros(1)
    return np.logspace(math.log10(peak), math.log10(peak * floor), count)


def _trial_rates(record: TrialRecord, thresholds: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Per-threshold detection and false-alarm rates; a cell counts when |x| > threshold"""
    mask = np.zeros(record.magnitudes.size, dtype=bool)
    mask[record.true_support] = True
    on = np.sort(record.magnitudes[mask])
    off = np.sort(record.magnitudes[~mask])
    detections = on.size - np.searchsorted(on, thresholds, side="right")
    false_alarms = off.size - np.searchsorted(off, thresholds, side="right")
    pd = detections / on.size if on.size else np.zeros(thresholds.size)
    pfa = false_alarms / off.size if off.size else np.zeros(thresholds.size)
    return pd, pfa


def roc(records: Sequence[TrialRecord], thresholds: Optional[np.ndarray] = None, label: str = "") -> RocCurve:
    """Trial-averaged (pd, pfa) over a descending threshold sweep"""
    usable = _usable(records)
    thresholds = default_thresholds(usable) if thresholds is None else np.sort(np.asarray(thresholds, float))[::-1]
    pd_sum = np.zeros(thresholds.size)
    pfa_sum = np.zeros(thresholds.size)
    for record in usable:
        pd, pfa = _trial_rates(record, thresholds)
        pd_sum += pd
        pfa_sum += pfa
    return RocCurve(
        thresholds=thresholds,
        pd=pd_sum / len(usable),
        pfa=pfa_sum / len(usable),
        n_trials=len(usable),
        label=label,
    )


def roc_trial_rows(records: Sequence[TrialRecord], thresholds: np.ndarray) -> List[List[Any]]:
    """[trial, threshold, pd, pfa] rows for every usable trial"""
    rows = []
    for record in _usable(records):
        pd, pfa = _trial_rates(record, thresholds)
        for t, d, f in zip(thresholds, pd, pfa):
            rows.append([record.trial, repr(float(t)), repr(float(d)), repr(float(f))])
    return rows


def pd_at_pfa(curve: RocCurve, target_pfa: float) -> float:
    return curve.pd_at_pfa(target_pfa)


def _problem_size(n_delay: int, n_doppler: int, n_rx: int, n_tx: int) -> int:
    return n_delay * n_doppler * n_rx * n_tx


def lemma_hypotheses(
    n_tx: int, n_rx: int, n_samples: int, n_doppler: int, gamma: Optional[float] = None
) -> Dict[str, bool]:
    """
    Sample-count and antenna-count conditions of the guarantee.

    Kerdock waveforms (gamma None) need max(N_R N_T, 32 N_T^3 log N) <= N_s
    and log^2 N <= N_T <= N_R. Waveforms only known to be gamma-incoherent
    need max(gamma^2 N_R N_T, 16 gamma^2 N_T log^3 N) <= N_s and
    gamma^2 N_T log^4 N <= N_s N_R instead of the cubic condition.
    """
    log_n = math.log(_problem_size(n_samples, n_doppler, n_rx, n_tx))
    hypotheses = {"antenna_count_condition": log_n**2 <= n_tx <= n_rx}
    if gamma is None:
        hypotheses["sample_count_condition"] = max(n_rx * n_tx, 32 * n_tx**3 * log_n) <= n_samples
    else:
        g2 = gamma**2
        hypotheses["sample_count_condition"] = max(g2 * n_rx * n_tx, 16 * g2 * n_tx * log_n**3) <= n_samples
        hypotheses["aperture_condition"] = g2 * n_tx * log_n**4 <= n_samples * n_rx
    return hypotheses


def operator_norm_failure_probability(n_delay: int, n_rx: int) -> float:
    """8 N_tau^-2 N_R^-1"""
    return 8.0 / (n_delay**2 * n_rx)


def column_norm_failure_probability(n_delay: int, n_rx: int) -> float:
    return 8.0 / (n_delay**2 * n_rx)


def coherence_failure_probability(n_delay: int, n_doppler: int, n_rx: int, n_tx: int) -> float:
    cells = n_delay * n_doppler
    return (
        8.0 / cells**2
        + 4.0 * n_tx / cells**2
        + 4.0 / cells
        + 4.0 / (cells**3 * n_rx**2 * n_tx)
        + 8.0 / (n_tx**2 * (cells * n_rx) ** 3)
    )


def recovery_failure_probability(n_delay: int, n_doppler: int, n_rx: int, n_tx: int) -> float:
    """p1 = 16 N_tau^-2 N_R^-1 plus the coherence terms"""
    return 16.0 / (n_delay**2 * n_rx) + coherence_failure_probability(n_delay, n_doppler, n_rx, n_tx)


def campaign_summary(cfg: TrialConfig, records: Sequence[TrialRecord]) -> Dict[str, Any]:
    """
    Aggregate rates of a campaign next to the failure probability the
    recovery guarantee claims at this size.

    The claimed probability only applies when every hypothesis holds;
    hypotheses_met says whether it does for Kerdock waveforms.
    """
    done = [r for r in records if r.success]
    exact = [r for r in done if r.support_exact]
    claimed = min(recovery_failure_probability(cfg.p, cfg.doppler_bins, cfg.n_rx, cfg.n_tx), 1.0)
    return {
        "trials": len(records),
        "successful_trials": len(done),
        "exact_support_rate": len(exact) / len(done) if done else 0.0,
        "within_error_bound_rate": (sum(r.within_error_bound for r in exact) / len(exact)) if exact else 0.0,
        "claimed_failure_probability": claimed,
        "claimed_success_rate": 1.0 - claimed,
        "hypotheses_met": all(lemma_hypotheses(cfg.n_tx, cfg.n_rx, cfg.p, cfg.doppler_bins).values()),
    }


def allowed_violations(trials: int, probability: Optional[float]) -> int:
    """95% upper binomial quantile of the violation count at the claimed rate"""
    if probability is None:
        return 0
    q = min(max(probability, 0.0), 1.0)
    return int(stats.binom.ppf(CONFIDENCE, trials, q))


@dataclass
class _CheckSetup:
    waveforms: WaveformSet
    gamma: Optional[float]
    hypotheses: Dict[str, bool]
    n_tx: int
    n_rx: int
    n_samples: int
    n_doppler: int

    @property
    def n(self) -> int:
        return _problem_size(self.n_samples, self.n_doppler, self.n_rx, self.n_tx)


def _prepare_check(
    cfg: TrialConfig,
    name: str,
    required: Sequence[str],
    force: bool,
    waveforms: Optional[WaveformSet],
) -> _CheckSetup:
    waveforms = waveforms if waveforms is not None else build_waveforms(cfg)
    gamma = None
    if waveforms.family_tag != "kerdock":
        gamma = waveforms.gamma if waveforms.gamma is not None else verify_incoherence(waveforms, 1.0).empirical_gamma
    setup = _CheckSetup(
        waveforms=waveforms,
        gamma=gamma,
        hypotheses=lemma_hypotheses(cfg.n_tx, cfg.n_rx, waveforms.p, cfg.doppler_bins, gamma),
        n_tx=cfg.n_tx,
        n_rx=cfg.n_rx,
        n_samples=waveforms.p,
        n_doppler=cfg.doppler_bins,
    )
    failed = [key for key in required if not setup.hypotheses.get(key, True)]
    if failed:
        message = f"{name}: hypotheses not met at this size ({', '.join(failed)})"
        if not force:
            raise HypothesisError(message + "; pass force to run anyway")
        logger.warning(message + "; running because force is set")
    return setup


def _geometry_operators(cfg: TrialConfig, setup: _CheckSetup, trials: int, seed: int):
    grid = make_grid(setup.n_samples, setup.n_doppler, setup.n_tx, setup.n_rx)
    for trial in range(trials):
        geometry = sample_geometry(setup.n_tx, setup.n_rx, derive_seed(seed, trial, GEOMETRY_STREAM))
        yield trial, SensingOperator(setup.waveforms, geometry, grid, dense_cap=getattr(cfg, "dense_cap", 2**27))


def verify_operator_norm_bound(
    cfg: TrialConfig,
    trials: int = 50,
    seed: Optional[int] = None,
    force: bool = False,
    waveforms: Optional[WaveformSet] = None,
) -> TheoryReport:
    """||A||^2 <= 2 N_f N_R^2 N_T^2 over independently drawn geometries"""
    seed = cfg.seed if seed is None else seed
    setup = _prepare_check(cfg, "operator_norm", ("sample_count_condition",), force, waveforms)
    bound = 2.0 * setup.n_doppler * setup.n_rx**2 * setup.n_tx**2
    values = []
    for trial, op in _geometry_operators(cfg, setup, trials, seed):
        values.append(operator_norm(op, tol=1e-8, max_iters=1000, seed=derive_seed(seed, trial, SOLVER_STREAM)) ** 2)
    values = np.array(values)
    q = operator_norm_failure_probability(setup.n_samples, setup.n_rx)
    return TheoryReport(
        bound_name="operator_norm",
        bound_expression="||A||^2 <= 2 N_f N_R^2 N_T^2",
        bound_value=bound,
        empirical_max=float(values.max()),
        empirical_min=float(values.min()),
        violations=int(np.sum(values > bound)),
        trials=trials,
        claimed_failure_probability=q,
        allowed_violations=allowed_violations(trials, q),
        hypotheses=setup.hypotheses,
        forced=force and not all(setup.hypotheses.values()),
        details={"margin": float(bound / values.max())},
    )


def _coherence_values(cfg: TrialConfig, setup: _CheckSetup, trials: int, seed: int, dense: bool):
    results = []
    for _, op in _geometry_operators(cfg, setup, trials, seed):
        try:
            results.append(coherence(op, dense=dense))
        except MemoryCapError as e:
            logger.warning(f"{e}; computing the Gram matrix column by column")
            results.append(coherence(op, dense=False))
    return results


def verify_coherence_bound(
    cfg: TrialConfig,
    trials: int = 20,
    seed: Optional[int] = None,
    force: bool = False,
    waveforms: Optional[WaveformSet] = None,
    dense: bool = True,
) -> TheoryReport:
    """
    Largest cross inner product max_{k != l} |<A_k, A_l>| against
    16 N_R log N (Kerdock) or 8 sqrt(2) gamma N_T sqrt(N_T N_R / N_s) log N.
    """
    seed = cfg.seed if seed is None else seed
    setup = _prepare_check(
        cfg, "coherence", ("sample_count_condition", "antenna_count_condition"), force, waveforms
    )
    log_n = math.log(setup.n)
    if setup.gamma is None:
        bound = 16.0 * setup.n_rx * log_n
        expression = "max |<A_k, A_l>| <= 16 N_R log(N_tau N_f N_R N_T)"
    else:
        bound = 8.0 * math.sqrt(2.0) * setup.gamma * setup.n_tx * math.sqrt(setup.n_tx * setup.n_rx)
        bound = bound / math.sqrt(setup.n_samples) * log_n
        expression = "max |<A_k, A_l>| <= 8 sqrt(2) gamma N_T sqrt(N_T N_R) / sqrt(N_s) log(N_tau N_f N_R N_T)"

    results = _coherence_values(cfg, setup, trials, seed, dense)
    q = coherence_failure_probability(setup.n_samples, setup.n_doppler, setup.n_rx, setup.n_tx)
    if not all(r.applicable for r in results):
        return TheoryReport(
            bound_name="coherence",
            bound_expression=expression,
            bound_value=bound,
            empirical_max=None,
            empirical_min=None,
            violations=0,
            trials=trials,
            claimed_failure_probability=q,
            hypotheses=setup.hypotheses,
            forced=force and not all(setup.hypotheses.values()),
            applicable=False,
            details={"reason": "coherence undefined for a single-column grid"},
        )
    inners = np.array([r.max_inner for r in results])
    worst = max(results, key=lambda r: r.mu)
    return TheoryReport(
        bound_name="coherence",
        bound_expression=expression,
        bound_value=bound,
        empirical_max=float(inners.max()),
        empirical_min=float(inners.min()),
        violations=int(np.sum(inners > bound)),
        trials=trials,
        claimed_failure_probability=q,
        allowed_violations=allowed_violations(trials, q),
        hypotheses=setup.hypotheses,
        forced=force and not all(setup.hypotheses.values()),
        details={
            "gamma": setup.gamma,
            "max_normalized_coherence": float(worst.mu),
            "max_normalized_pair": list(worst.pair),
            "max_inner_pair": list(max(results, key=lambda r: r.max_inner).max_inner_pair),
        },
    )


def verify_normalized_coherence(
    cfg: TrialConfig,
    trials: int = 20,
    seed: Optional[int] = None,
    force: bool = False,
    waveforms: Optional[WaveformSet] = None,
    dense: bool = True,
) -> TheoryReport:
    """mu(A D^{-1}) <= 48 log N / N_T"""
    seed = cfg.seed if seed is None else seed
    setup = _prepare_check(
        cfg, "normalized_coherence", ("sample_count_condition", "antenna_count_condition"), force, waveforms
    )
    bound = 48.0 * math.log(setup.n) / setup.n_tx
    results = _coherence_values(cfg, setup, trials, seed, dense)
    q = coherence_failure_probability(
        setup.n_samples, setup.n_doppler, setup.n_rx, setup.n_tx
    ) + column_norm_failure_probability(setup.n_samples, setup.n_rx)
    if not all(r.applicable for r in results):
        return TheoryReport(
            bound_name="normalized_coherence",
            bound_expression="mu(A D^-1) <= 48 log(N_tau N_f N_R N_T) / N_T",
            bound_value=bound,
            empirical_max=None,
            empirical_min=None,
            violations=0,
            trials=trials,
            claimed_failure_probability=q,
            hypotheses=setup.hypotheses,
            applicable=False,
        )
    mus = np.array([r.mu for r in results])
    return TheoryReport(
        bound_name="normalized_coherence",
        bound_expression="mu(A D^-1) <= 48 log(N_tau N_f N_R N_T) / N_T",
        bound_value=bound,
        empirical_max=float(mus.max()),
        empirical_min=float(mus.min()),
        violations=int(np.sum(mus > bound)),
        trials=trials,
        claimed_failure_probability=q,
        allowed_violations=allowed_violations(trials, q),
        hypotheses=setup.hypotheses,
        forced=force and not all(setup.hypotheses.values()),
    )


def verify_column_norms(
    cfg: TrialConfig,
    trials: int = 50,
    seed: Optional[int] = None,
    force: bool = False,
    waveforms: Optional[WaveformSet] = None,
) -> TheoryReport:
    """Every squared column norm inside [N_R N_T / 3, 5 N_R N_T / 3]"""
    seed = cfg.seed if seed is None else seed
    setup = _prepare_check(cfg, "column_norms", ("sample_count_condition",), force, waveforms)
    lower = setup.n_rx * setup.n_tx / 3.0
    upper = 5.0 * setup.n_rx * setup.n_tx / 3.0
    minima, maxima, kappas = [], [], []
    for _, op in _geometry_operators(cfg, setup, trials, seed):
        norms = column_norms(op)
        squared = norms.squared
        minima.append(float(squared.min()))
        maxima.append(float(squared.max()))
        kappas.append(norms.condition_number)
    minima, maxima = np.array(minima), np.array(maxima)
    q = column_norm_failure_probability(setup.n_samples, setup.n_rx)
    return TheoryReport(
        bound_name="column_norms",
        bound_expression="N_R N_T / 3 <= ||A_c||^2 <= 5 N_R N_T / 3",
        bound_value=upper,
        empirical_max=float(maxima.max()),
        empirical_min=float(minima.min()),
        violations=int(np.sum((minima < lower) | (maxima > upper))),
        trials=trials,
        claimed_failure_probability=q,
        allowed_violations=allowed_violations(trials, q),
        hypotheses=setup.hypotheses,
        forced=force and not all(setup.hypotheses.values()),
        details={
            "lower_bound": lower,
            "max_condition_number": float(max(kappas)),
            "condition_number_guard": math.sqrt(5.0),
            "condition_guard_violations": int(sum(k > math.sqrt(5.0) for k in kappas)),
        },
    )


BERNSTEIN_MODELS = ("bounded", "unit_diagonal", "identity", "all")


def bernstein_matrix(m: int, n: int, model: str, rng: np.random.Generator) -> np.ndarray:
    """
    m x m matrix with entries of modulus 1/sqrt(n) and random phases;
    unit_diagonal also sets the diagonal to 1, identity is the m x m identity.
    """
    if model == "identity":
        return np.eye(m, dtype=complex)
    matrix = np.exp(2j * np.pi * rng.random((m, m))) / math.sqrt(n)
    if model == "unit_diagonal":
        np.fill_diagonal(matrix, 1.0)
    elif model != "bounded":
        raise ValueError(f"Unknown matrix model '{model}', expected one of {BERNSTEIN_MODELS}")
    return matrix


def _ab_tail(m: int, n: int, t: float) -> float:
    return 4.0 * m * math.exp(-(t**2) * n / (4.0 * m))


def _aa_tail(m: int, n: int, t: float) -> float:
    return 8.0 * m * math.exp(-(t**2) * n / (2.0 * m))


def _solve_t(m: int, n: int, factor: float, scale: float, target: float) -> float:
    """t with factor * m * exp(-t^2 n / (scale m)) = target"""
    return math.sqrt(scale * m / n * math.log(max(factor * m / target, 1.0)))


def bernstein_mc(
    m: int,
    n: int,
    matrix_model: Union[str, np.ndarray] = "all",
    t: Optional[float] = None,
    s: Optional[float] = None,
    trials: int = 10_000,
    seed: int = 0,
    target: float = 0.1,
) -> List[TheoryReport]:
    """
    Empirical tail rates of <M alpha, beta> and <M alpha, alpha> for
    uniform-phase alpha, beta in C^m, against their Bernstein-type bounds.

    Matrices with entries bounded by 1/sqrt(n) get the two bounded-entry
    inequalities, matrices with a unit diagonal the two centred ones. With
    t or s unset, each is chosen so that its bound equals target.
    """
    if isinstance(matrix_model, np.ndarray):
        matrix = np.asarray(matrix_model, dtype=complex)
        if matrix.shape != (m, m):
            raise ValueError(f"Matrix must be {m} x {m}, got {matrix.shape}")
        unit_diagonal = bool(np.allclose(np.diag(matrix), 1.0))
        cases = [("custom", matrix, unit_diagonal)]
    else:
        models = ("bounded", "unit_diagonal") if matrix_model == "all" else (matrix_model,)
        rng = np.random.default_rng(seed)
        cases = [(model, bernstein_matrix(m, n, model, rng), model != "bounded") for model in models]

    rng = np.random.default_rng(seed + 1)
    reports = []
    for model, matrix, unit_diagonal in cases:
        alpha = np.exp(2j * np.pi * rng.random((trials, m)))
        beta = np.exp(2j * np.pi * rng.random((trials, m)))
        m_alpha = alpha @ matrix.T
        cross = np.abs(np.sum(m_alpha * beta.conj(), axis=1))
        quadratic = np.sum(m_alpha * alpha.conj(), axis=1)
        details = {"m": m, "n": n, "matrix_model": model, "target": target}

        if not unit_diagonal:
            t_ab = t if t is not None else _solve_t(m, n, 4.0, 4.0, target)
            t_aa = t if t is not None else _solve_t(m, n, 8.0, 2.0, target)
            checks = [
                ("bernstein_ab_bounded", "|<M a, b>| > m t", m * t_ab, cross, _ab_tail(m, n, t_ab), {"t": t_ab}),
                ("bernstein_aa_bounded", "|<M a, a>| > 2 m t", 2 * m * t_aa, np.abs(quadratic),
                 _aa_tail(m, n, t_aa), {"t": t_aa}),
            ]
        else:
            t_ab = t if t is not None else _solve_t(m, n, 4.0, 4.0, target / 2)
            s_ab = s if s is not None else math.sqrt(4.0 * m * math.log(max(8.0 / target, 1.0)))
            t_aa = t if t is not None else _solve_t(m, n, 8.0, 2.0, target)
            deviation = np.abs(quadratic - m)
            checks = [
                ("bernstein_ab_unit_diagonal", "|<M a, b>| > s + m t", s_ab + m * t_ab, cross,
                 4.0 * math.exp(-(s_ab**2) / (4.0 * m)) + _ab_tail(m, n, t_ab), {"t": t_ab, "s": s_ab}),
                ("bernstein_aa_unit_diagonal", "|<M a, a> - m| > 2 m t", 2 * m * t_aa,
                 deviation, _aa_tail(m, n, t_aa), {"t": t_aa}),
            ]

        for name, expression, threshold, sample, bound, params in checks:
            violations = int(np.sum(sample > threshold))
            reports.append(
                TheoryReport(
                    bound_name=name,
                    bound_expression=expression,
                    bound_value=float(threshold),
                    empirical_max=float(sample.max()),
                    empirical_min=float(sample.min()),
                    violations=violations,
                    trials=trials,
                    claimed_failure_probability=float(bound),
                    allowed_violations=allowed_violations(trials, bound),
                    details={**details, **params},
                )
            )
    for report in reports:
        logger.info(
            f"{report.bound_name}: rate {report.violation_rate:.4f} vs bound {report.claimed_failure_probability:.4f}"
        )
    return reports


def _time_call(func: Callable[[], Any], repeats: int) -> float:
    best = math.inf
    for _ in range(repeats):
        start = time.perf_counter()
        func()
        best = min(best, time.perf_counter() - start)
    return best


def benchmark_forward(cfg: TrialConfig, repeats: int = 5, doublings: int = 2) -> BenchmarkReport:
    """
    Fast forward apply against the dense product at cfg's size, and fast
    timings as N_s roughly doubles (next prime of p 2^k, at most MAX_PRIME).
    """
    waveforms = build_waveforms(cfg)
    pipeline = SimulationPipeline(cfg, waveforms=waveforms)
    op = pipeline.build_operator(0)
    rng = np.random.default_rng(cfg.seed)
    x = rng.standard_normal(op.shape[1]) + 1j * rng.standard_normal(op.shape[1])

    fast_seconds = _time_call(lambda: op.forward(x), repeats)
    dense_seconds = None
    try:
        dense = op.dense_matrix()
        dense_seconds = _time_call(lambda: dense @ x, repeats)
    except MemoryCapError as e:
        logger.warning(f"Skipping dense timing: {e}")

    sample_counts = [cfg.p]
    for k in range(1, doublings + 1):
        candidate = next_prime(cfg.p * 2**k)
        if candidate > MAX_PRIME:
            break
        sample_counts.append(candidate)

    scaling = []
    family = "alltop" if cfg.family == "external" else cfg.family
    for p in sample_counts:
        size_cfg = replace(cfg, p=p, n_doppler=cfg.doppler_bins, family=family)
        size_op = SimulationPipeline(size_cfg).build_operator(0)
        vector = rng.standard_normal(size_op.shape[1]) + 1j * rng.standard_normal(size_op.shape[1])
        scaling.append(_time_call(lambda: size_op.forward(vector), repeats))

    if len(sample_counts) >= 2:
        log_n = np.log(sample_counts)
        exponent = float(np.polyfit(log_n, np.log(scaling), 1)[0])
        cells = np.array([cfg.n_tx * cfg.n_rx * cfg.doppler_bins * n for n in sample_counts], dtype=float)
        normalized = float(np.polyfit(log_n, np.log(np.array(scaling) / cells), 1)[0])
    else:
        exponent = normalized = 0.0

    report = BenchmarkReport(
        fast_seconds=fast_seconds,
        dense_seconds=dense_seconds,
        sample_counts=sample_counts,
        scaling_seconds=scaling,
        scaling_exponent=exponent,
        normalized_slope=normalized,
    )
    logger.info(f"Benchmark: fast {fast_seconds:.3e}s, dense {dense_seconds}, exponent {exponent:.2f}")
    return report
