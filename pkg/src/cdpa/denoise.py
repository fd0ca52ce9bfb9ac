"""Signal denoising, rank selection, and pipeline diagnostics.

Each observed matrix is modeled as a low-rank signal plus noise.  The
signal is recovered by soft-thresholding the squared singular values with
a noise-calibrated constant, the per-dataset signal ranks are selected
from eigenvalue gaps, and the shared rank is selected by a penalized
log-likelihood criterion over the affinity of the right singular
subspaces.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from ._linalg import det_svd
from .errors import (
    DegenerateThreshold,
    InputError,
    RankTooLarge,
    TooFewSamples,
    ZeroSignal,
)


@dataclass(frozen=True)
class ObservedMatrix:
    """A variables-by-samples data matrix.

    Parameters
    ----------
    values : ndarray, shape (p, n)
        Data with rows as variables and columns as samples.
    row_centered : bool
        True when every row has (numerically) zero mean.
    """

    values: np.ndarray
    row_centered: bool = False

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise InputError(f"expected a 2-d matrix, got shape {v.shape}")
        p, n = v.shape
        if p < 1 or n < 2:
            raise InputError(f"need p >= 1 and n >= 2, got ({p}, {n})")
        if not np.all(np.isfinite(v)):
            raise InputError("matrix contains non-finite entries")
        object.__setattr__(self, "values", v)
        if self.row_centered:
            scale = np.abs(v).mean(axis=1) + 1e-300
            if np.any(np.abs(v.mean(axis=1)) > 1e-10 * np.maximum(scale, 1.0)):
                raise InputError("row_centered is set but row means are not zero")

    @property
    def p(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class RankProfile:
    """Selected signal ranks for the two datasets and their shared rank."""

    r1: int
    r2: int
    r12: int

    def __post_init__(self):
        if not (0 <= self.r12 <= min(self.r1, self.r2)):
            raise InputError(
                f"need 0 <= r12 <= min(r1, r2), got ({self.r1}, {self.r2}, {self.r12})"
            )


@dataclass(frozen=True)
class SignalEstimate:
    """Soft-thresholded low-rank signal estimate with its SVD factors.

    ``xhat`` reconstructs as ``left_vectors @ diag(soft_singular_values)
    @ right_vectors.T``.
    """

    xhat: np.ndarray
    rank: int
    soft_singular_values: np.ndarray
    tau: float
    left_vectors: np.ndarray
    right_vectors: np.ndarray

    @property
    def p(self) -> int:
        return self.xhat.shape[0]

    @property
    def n(self) -> int:
        return self.xhat.shape[1]


@dataclass(frozen=True)
class SignalCovariance:
    """Factored signal covariance estimate xhat @ xhat.T / n."""

    eigvectors: np.ndarray
    eigvalues: np.ndarray
    trace: float

    @property
    def rank(self) -> int:
        return self.eigvalues.shape[0]

    @property
    def scale(self) -> float:
        """Square root of the trace, the natural size of the signal."""
        return float(np.sqrt(self.trace))


@dataclass(frozen=True)
class Diagnostics:
    """Signal-to-noise ratios and the derived accuracy rate quantity."""

    snr: tuple[float, float]
    delta_theta: float
    selected_ranks: RankProfile


def center_rows(y: ObservedMatrix) -> ObservedMatrix:
    """Subtract the mean of each row."""
    v = y.values - y.values.mean(axis=1, keepdims=True)
    return ObservedMatrix(v, row_centered=True)


def soft_threshold_denoise(y: ObservedMatrix, r: int) -> SignalEstimate:
    """Denoise ``y`` by soft-thresholding its squared singular values.

    The threshold ``tau * p`` is calibrated from the residual spectrum:
    ``tau = sum_{l>r} sigma_l^2 / (n*p - n*r - p*r)``.  The top ``r``
    squared singular values are shrunk by ``tau * p`` and floored at zero
    before reconstruction.

    Raises
    ------
    RankTooLarge
        If ``r`` exceeds ``min(n, p)``.
    DegenerateThreshold
        If ``n*p - n*r - p*r <= 0`` so the calibration is undefined.
    """
    p, n = y.p, y.n
    if not 1 <= r <= min(n, p):
        raise RankTooLarge(f"rank {r} outside [1, {min(n, p)}]")
    denom = n * p - n * r - p * r
    if denom <= 0:
        raise DegenerateThreshold(
            f"n*p - n*r - p*r = {denom} <= 0 for (n, p, r) = ({n}, {p}, {r})"
        )
    u, s, vt = det_svd(y.values)
    tau = float(np.sum(s[r:] ** 2) / denom)
    s_soft = np.sqrt(np.maximum(s[:r] ** 2 - tau * p, 0.0))
    xhat = (u[:, :r] * s_soft) @ vt[:r]
    return SignalEstimate(
        xhat=xhat,
        rank=r,
        soft_singular_values=s_soft,
        tau=tau,
        left_vectors=u[:, :r],
        right_vectors=vt[:r].T,
    )


def signal_covariance(xhat: SignalEstimate, n: int) -> SignalCovariance:
    """Factored eigendecomposition of ``xhat @ xhat.T / n``.

    Only strictly positive eigenvalues are kept, so the returned rank can
    be smaller than the requested denoising rank when soft thresholding
    zeroed trailing singular values.
    """
    lam = xhat.soft_singular_values**2 / n
    keep = lam > 0
    if not np.any(keep):
        raise ZeroSignal("signal estimate is zero after thresholding")
    return SignalCovariance(
        eigvectors=xhat.left_vectors[:, keep],
        eigvalues=lam[keep],
        trace=float(lam[keep].sum()),
    )


def ed_select_rank(y: ObservedMatrix) -> int:
    """Select the signal rank from the eigenvalue difference profile.

    Candidate ranks run up to ``T = min(#{eigenvalues >= mean}, m // 10)``
    with ``m = min(n, p)``.  The gap threshold ``delta`` is calibrated
    iteratively: regress the five eigenvalues past the current candidate
    rank on ``(index - 1)^(2/3)``, set ``delta = 2 |slope|``, re-select,
    and repeat to a fixed point (at most 50 rounds).

    Returns 0 when no eigenvalue gap clears the calibrated threshold.
    """
    p, n = y.p, y.n
    if n < 20:
        raise TooFewSamples(f"need n >= 20 to calibrate, got {n}")
    m = min(n, p)
    s = np.linalg.svd(y.values, compute_uv=False)
    lam = np.zeros(m)
    lam[: s.shape[0]] = s[:m] ** 2 / n
    t = min(int(np.sum(lam >= lam.mean())), m // 10)
    if t < 1:
        return 0
    if t + 5 > m:
        raise TooFewSamples(
            f"calibration window needs {t + 5} eigenvalues, only {m} available"
        )
    j = t + 1
    r: int | None = None
    for _ in range(50):
        idx = np.arange(j, j + 5)  # 1-based eigenvalue indices
        slope = np.polyfit((idx - 1) ** (2.0 / 3.0), lam[idx - 1], 1)[0]
        delta = 2.0 * abs(slope)
        hits = np.nonzero(lam[:t] - lam[1 : t + 1] >= delta)[0]
        r_new = int(hits[-1] + 1) if hits.size else 0
        if r_new == r:
            break
        r = r_new
        j = r + 1
    return int(r or 0)


def correlation_screen(
    x1: SignalEstimate, x2: SignalEstimate, alpha: float = 0.05
) -> bool:
    """Test whether any cross-dataset variable pair is correlated.

    Applies the Fisher z normal-approximation test to every pair of
    denoised variables with a Bonferroni correction over all p1 * p2
    pairs.  A True result licenses a nonzero shared rank.
    """
    if x1.n != x2.n:
        raise InputError("signal estimates have different sample counts")
    n = x1.n
    r = _row_correlations(x1.xhat, x2.xhat)
    z = np.abs(np.arctanh(np.clip(r, -1 + 1e-15, 1 - 1e-15))) * np.sqrt(n - 3)
    z_crit = norm.isf(alpha / (2.0 * r.size))
    return bool(np.any(z >= z_crit))


def _row_correlations(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    def standardize(x):
        xc = x - x.mean(axis=1, keepdims=True)
        norms = np.sqrt((xc**2).sum(axis=1))
        norms[norms < 1e-300] = np.inf  # constant rows contribute zero correlation
        return xc / norms[:, None]

    return standardize(a) @ standardize(b).T


def mdl_select_r12(
    y1: ObservedMatrix, y2: ObservedMatrix, r1: int, r2: int
) -> int:
    """Select the shared rank by the penalized subspace-affinity criterion.

    ``s_l`` are the singular values of the product of the two top right
    singular subspaces; the criterion ``n * sum_{l<=r} log(1 - s_l^2) +
    r * (r1 + r2 - r) * log(n)`` is minimized over ``r in [1, min(r1, r2)]``.
    """
    if y1.n != y2.n:
        raise InputError("datasets have different sample counts")
    if min(r1, r2) < 1:
        raise InputError("mdl_select_r12 requires r1, r2 >= 1")
    n = y1.n
    _, _, vt1 = np.linalg.svd(y1.values, full_matrices=False)
    _, _, vt2 = np.linalg.svd(y2.values, full_matrices=False)
    s = np.linalg.svd(vt1[:r1] @ vt2[:r2].T, compute_uv=False)
    s2 = np.minimum(s**2, 1.0 - 1e-12)  # guard against coincident subspaces
    rmax = min(r1, r2)
    crit = [
        n * np.sum(np.log(1.0 - s2[:r])) + r * (r1 + r2 - r) * np.log(n)
        for r in range(1, rmax + 1)
    ]
    return int(np.argmin(crit)) + 1


def compute_diagnostics(
    x1: SignalEstimate,
    x2: SignalEstimate,
    noise_traces: tuple[float, float],
    ranks: RankProfile,
) -> Diagnostics:
    """Signal-to-noise ratios and the clamped rate quantity.

    ``snr_k`` is the signal covariance trace over the noise covariance
    trace estimate; the rate quantity is
    ``min(1/sqrt(n) + sum_k sqrt(log(p_k) / (n * snr_k)), 1)``.
    """
    n = x1.n
    snr = []
    for x, tr_noise in zip((x1, x2), noise_traces):
        tr_signal = float(np.sum(x.soft_singular_values**2) / n)
        snr.append(tr_signal / max(tr_noise, 1e-12))
    delta = 1.0 / np.sqrt(n)
    for x, s in zip((x1, x2), snr):
        delta += np.sqrt(np.log(x.p) / (n * max(s, 1e-300)))
    return Diagnostics(
        snr=(snr[0], snr[1]),
        delta_theta=float(min(delta, 1.0)),
        selected_ranks=ranks,
    )


def noise_trace(y: ObservedMatrix, xhat: SignalEstimate) -> float:
    """Residual-based noise covariance trace estimate ||Y - xhat||_F^2 / n."""
    return float(np.sum((y.values - xhat.xhat) ** 2) / y.n)
