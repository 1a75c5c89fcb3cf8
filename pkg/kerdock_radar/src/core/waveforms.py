"""
Kerdock codes over Z_p, cubic-chirp waveform sets and their
time-frequency correlation checks.

Conventions: (T_tau x)(l) = x(l - tau mod p), (M_f x)(l) = x(l) e^{2 pi i f l / p}
and <a, b> = sum_n a(n) conj(b(n)).
"""

import logging
import math
from functools import lru_cache
from typing import Dict, List, Optional, Tuple

import numpy as np

from .errors import DimensionError, WaveformError
from .models import IncoherenceReport, KerdockFamily, KerdockPropertyReport, WaveformSet

logger = logging.getLogger(__name__)

MAX_PRIME = 257
DEFAULT_TOLERANCE = 1e-10
# cross-correlation is checked against every target vector up to this length
EXHAUSTIVE_CROSS_LIMIT = 13


def is_prime(n: int) -> bool:
    if n < 2:
        return False
    if n % 2 == 0:
        return n == 2
    return all(n % d for d in range(3, math.isqrt(n) + 1, 2))


def next_prime(n: int) -> int:
    """Smallest odd prime >= n"""
    candidate = max(3, n)
    while not is_prime(candidate):
        candidate += 1
    return candidate


def translate(x: np.ndarray, tau: int) -> np.ndarray:
    """Circular delay along the last axis"""
    return np.roll(x, tau, axis=-1)


def modulate(x: np.ndarray, f: int) -> np.ndarray:
    """Doppler modulation along the last axis"""
    n = x.shape[-1]
    return x * np.exp(2j * np.pi * f * np.arange(n) / n)


def shift_operator(p: int, k: int) -> np.ndarray:
    """Matrix of T_1 M_k, the translate-by-one composed with modulate-by-k"""
    shift = np.roll(np.eye(p), 1, axis=0)
    return shift @ np.diag(np.exp(2j * np.pi * k * np.arange(p) / p))


def _normalize_phase(columns: np.ndarray) -> np.ndarray:
    """Unit-normalize columns and rotate each so its first nonzero entry is real positive"""
    columns = columns / np.linalg.norm(columns, axis=0)
    first = np.argmax(np.abs(columns) > 1e-12, axis=0)
    leading = columns[first, np.arange(columns.shape[1])]
    return columns * (np.abs(leading) / leading)


def _check_prime(p: int, lower: int = 3):
    if not isinstance(p, (int, np.integer)) or p % 2 == 0 or not is_prime(int(p)):
        raise WaveformError(f"p must be an odd prime, got {p}")
    if not lower <= p <= MAX_PRIME:
        raise WaveformError(f"p must be between {lower} and {MAX_PRIME}, got {p}")


@lru_cache(maxsize=16)
def kerdock_family(p: int) -> KerdockFamily:
    """
    Build the p+1 Kerdock bases over Z_p.

    U_(k), k = 0..p-1, holds the eigenvectors of T_1 M_k with columns sorted
    by eigenvalue phase in [0, 2 pi); U_(p) is the identity.

    Args:
        p: odd prime, 3 <= p <= 257

    Returns:
        The immutable KerdockFamily; repeated calls return the same object
    """
    _check_prime(p)
    bases = np.empty((p + 1, p, p), dtype=complex)
    for k in range(p):
        eigenvalues, vectors = np.linalg.eig(shift_operator(p, k))
        # eigenvalues are the p-th roots of unity, index them by their exponent
        exponents = np.mod(np.rint(np.angle(eigenvalues) * p / (2 * np.pi)), p).astype(int)
        if len(np.unique(exponents)) != p:
            raise WaveformError(f"Repeated eigenvalue in the Kerdock construction for p={p}, k={k}")
        roots = np.exp(2j * np.pi * exponents / p)
        if np.max(np.abs(eigenvalues - roots)) > 1e-8:
            raise WaveformError(f"Eigenvalues for p={p}, k={k} are not p-th roots of unity")
        order = np.argsort(exponents)
        bases[k] = _normalize_phase(vectors[:, order])
    bases[p] = np.eye(p)
    logger.debug(f"Built Kerdock family with {p + 1} bases of length {p}")
    return KerdockFamily(p=p, bases=bases)


def kerdock_waveforms(family: KerdockFamily, n_tx: int, j_select: int = 0) -> WaveformSet:
    """Column k is u_{k, j_select}, k = 0..n_tx-1; the identity basis is never used"""
    p = family.p
    if not 1 <= n_tx < p:
        raise WaveformError(f"Kerdock waveform count must satisfy 1 <= n_tx < p={p}, got {n_tx}")
    if not 0 <= j_select < p:
        raise WaveformError(f"j_select must be in [0, {p - 1}], got {j_select}")
    columns = np.array(family.bases[:n_tx, :, j_select].T)
    return WaveformSet(p=p, n_tx=n_tx, columns=columns, family_tag="kerdock", j_select=j_select)


def alltop_waveforms(p: int, n_tx: int) -> WaveformSet:
    """Cubic chirps s_k(l) = p^{-1/2} e^{2 pi i (l^3 + k l) / p}, k = 0..n_tx-1"""
    _check_prime(p, lower=5)
    if not 1 <= n_tx <= p:
        raise WaveformError(f"Alltop waveform count must satisfy 1 <= n_tx <= p={p}, got {n_tx}")
    l = np.arange(p)
    k = np.arange(n_tx)
    # reduce mod p before scaling so the phase stays exact for large l
    phase = np.mod(l[:, None] ** 3 + np.outer(l, k), p)
    columns = np.exp(2j * np.pi * phase / p) / math.sqrt(p)
    return WaveformSet(p=p, n_tx=n_tx, columns=columns, family_tag="alltop")


def external_waveforms(columns: np.ndarray, gamma: Optional[float] = None) -> WaveformSet:
    """Wrap a user-supplied p x n_tx matrix, normalizing its columns"""
    columns = np.asarray(columns, dtype=complex)
    if columns.ndim == 1:
        columns = columns[:, None]
    norms = np.linalg.norm(columns, axis=0)
    if np.any(norms == 0):
        raise WaveformError("External waveform set contains an all-zero column")
    deviation = float(np.max(np.abs(norms - 1.0)))
    if deviation > DEFAULT_TOLERANCE:
        logger.warning(f"Normalizing external waveforms (max norm deviation {deviation:.3e})")
    p, n_tx = columns.shape
    return WaveformSet(p=p, n_tx=n_tx, columns=columns / norms, family_tag="external", gamma=gamma)


def ambiguity_surface(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """
    All circular time-frequency inner products C[..., f, l] = <M_f T_l u, v>.

    Leading axes of u and v broadcast; the last axis has length p.
    """
    u = np.asarray(u, dtype=complex)
    v = np.asarray(v, dtype=complex)
    if u.shape[-1] != v.shape[-1]:
        raise DimensionError(f"Length mismatch: {u.shape[-1]} vs {v.shape[-1]}")
    p = u.shape[-1]
    n = np.arange(p)
    shifted = u[..., np.mod(n[None, :] - n[:, None], p)]
    products = shifted * np.conj(v)[..., None, :]
    surface = p * np.fft.ifft(products, axis=-1)
    return np.swapaxes(surface, -1, -2)


def timefreq_correlation(u: np.ndarray, v: np.ndarray, f: int, l: int) -> complex:
    """<M_f T_l u, v> with indices taken mod p"""
    u = np.asarray(u, dtype=complex)
    v = np.asarray(v, dtype=complex)
    if u.shape != v.shape or u.ndim != 1:
        raise DimensionError(f"Expected two vectors of equal length, got {u.shape} and {v.shape}")
    return complex(np.vdot(v, modulate(translate(u, l), f)))


def _ambiguity_target(p: int, f: int, l: int) -> int:
    """Basis index whose vectors are eigenvectors of M_f T_l"""
    f, l = int(f) % p, int(l) % p
    if l == 0:
        return p
    return (f * pow(l, -1, p)) % p


def _polyphase_deviation(vectors: np.ndarray) -> float:
    """Max distance of sqrt(p) * v from the nearest p-th root of unity, after phase normalization"""
    p = vectors.shape[0]
    scaled = math.sqrt(p) * _normalize_phase(vectors)
    exponents = np.rint(np.angle(scaled) * p / (2 * np.pi))
    return float(np.max(np.abs(scaled - np.exp(2j * np.pi * exponents / p))))


def verify_kerdock_properties(
    family: KerdockFamily,
    tolerance: float = DEFAULT_TOLERANCE,
    exhaustive_cross: Optional[bool] = None,
) -> KerdockPropertyReport:
    """
    Check the Kerdock code properties exhaustively over all shifts.

    Mutual unbiasedness, autocorrelation uniqueness and the p ambiguity
    points per basis, the cross-correlation bound, and the polyphase
    property in time and frequency. Cross-correlation compares every shift
    of u_{k,j} with every vector u_{k',j'} when exhaustive_cross is set
    (default for p <= 13); otherwise it compares against u_{k',j}.
    """
    p = family.p
    bases = np.asarray(family.bases)
    identity = np.eye(p)
    if exhaustive_cross is None:
        exhaustive_cross = p <= EXHAUSTIVE_CROSS_LIMIT
    deviations: Dict[str, float] = {}

    deviations["unitarity"] = float(
        max(np.max(np.abs(b.conj().T @ b - identity)) for b in bases)
    )

    residuals = [0.0]
    for k in range(p):
        g = shift_operator(p, k)
        images = g @ bases[k]
        eigenvalues = np.sum(images * np.conj(bases[k]), axis=0)
        residuals.append(float(np.max(np.abs(images - bases[k] * eigenvalues))))
        residuals.append(float(np.max(np.abs(np.abs(eigenvalues) - 1.0))))
    deviations["eigenvector"] = max(residuals)

    unbiased = 1.0 / math.sqrt(p)
    mub = 0.0
    for k in range(p + 1):
        gram = np.abs(np.einsum("lj,klm->kjm", bases[k].conj(), bases))
        gram = np.delete(gram, k, axis=0)
        mub = max(mub, float(np.max(np.abs(gram - unbiased))))
    deviations["mub"] = mub

    f_idx, l_idx = np.meshgrid(np.arange(p), np.arange(p), indexing="ij")
    targets = np.vectorize(lambda f, l: _ambiguity_target(p, f, l))(f_idx, l_idx)
    autocorrelation = 0.0
    ambiguity_points: Dict[int, List[Tuple[int, int]]] = {}
    count_errors = 0
    for k in range(p + 1):
        vectors = bases[k].T
        moduli = np.abs(ambiguity_surface(vectors, vectors))
        expected = (targets == k).astype(float)
        expected[0, 0] = 1.0
        autocorrelation = max(autocorrelation, float(np.max(np.abs(moduli - expected))))
        hits = np.all(moduli > 1.0 - 1e-6, axis=0)
        points = [(int(f), int(l)) for f, l in zip(*np.nonzero(hits))]
        ambiguity_points[k] = points
        consistent = all(_ambiguity_target(p, f, l) == k or (f, l) == (0, 0) for f, l in points)
        if len(points) != p or not consistent:
            count_errors += 1
    deviations["autocorrelation"] = autocorrelation

    crosscorrelation = 0.0
    if exhaustive_cross:
        everything = bases.transpose(0, 2, 1).reshape((p + 1) * p, p)
        owner = np.repeat(np.arange(p + 1), p)
        for k in range(p + 1):
            others = everything[owner != k]
            for j in range(p):
                moduli = np.abs(ambiguity_surface(bases[k][:, j], others))
                crosscorrelation = max(crosscorrelation, float(np.max(np.abs(moduli - unbiased))))
    else:
        for j in range(p):
            vectors = bases[:, :, j]
            for k in range(p + 1):
                moduli = np.abs(ambiguity_surface(vectors[k], np.delete(vectors, k, axis=0)))
                crosscorrelation = max(crosscorrelation, float(np.max(np.abs(moduli - unbiased))))
    deviations["crosscorrelation"] = crosscorrelation

    deviations["polyphase_time"] = max(_polyphase_deviation(bases[k]) for k in range(p))
    unitary_dft = np.fft.fft(bases[1:], axis=1) / math.sqrt(p)
    deviations["polyphase_frequency"] = max(_polyphase_deviation(b) for b in unitary_dft)

    report = KerdockPropertyReport(
        p=p,
        tolerance=tolerance,
        deviations=deviations,
        ambiguity_points=ambiguity_points,
        ambiguity_count_errors=count_errors,
        cross_exhaustive=exhaustive_cross,
    )
    logger.info(f"Kerdock p={p} property check: {report.properties}")
    return report


def verify_incoherence(waveforms: WaveformSet, gamma: float, tolerance: float = DEFAULT_TOLERANCE) -> IncoherenceReport:
    """
    Check |<s_j, M_f T_tau s_j>| <= gamma/sqrt(p) for (f, tau) != (0, 0) and
    |<s_k, M_f T_tau s_j>| <= gamma/sqrt(p) for k != j over all shifts.
    """
    columns = waveforms.columns.T
    n_tx = waveforms.n_tx
    moduli = np.abs(ambiguity_surface(columns[:, None, :], columns[None, :, :]))
    diagonal = moduli[np.arange(n_tx), np.arange(n_tx)].copy()
    diagonal[:, 0, 0] = 0.0
    self_max = float(np.max(diagonal))

    cross_max: Optional[float] = None
    zero_doppler: Optional[float] = None
    if n_tx > 1:
        off_diagonal = ~np.eye(n_tx, dtype=bool)
        cross = moduli[off_diagonal]
        cross_max = float(np.max(cross))
        zero_doppler = float(np.max(cross[:, 0, :]))

    report = IncoherenceReport(
        p=waveforms.p,
        n_tx=n_tx,
        gamma=gamma,
        self_max=self_max,
        cross_max=cross_max,
        zero_doppler_cross_max=zero_doppler,
        tolerance=tolerance,
    )
    logger.info(
        f"Incoherence of {waveforms.family_tag} set (p={waveforms.p}, n_tx={n_tx}): "
        f"empirical gamma {report.empirical_gamma:.4f}, passed={report.passed}"
    )
    return report
