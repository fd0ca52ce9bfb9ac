"""Row alignment of the two channel bases via graph matching.

Maximizing the summed squared cosines of the principal angles over row
permutations of the padded second basis is a quadratic assignment
problem.  A doubly stochastic projected fixed-point heuristic solves it
approximately; an exhaustive oracle is available for small problems.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from itertools import combinations, permutations

import numpy as np
from scipy.optimize import linear_sum_assignment

from .dcca import MixingChannel
from .errors import BadDimensions, InputError, TooLarge


@dataclass(frozen=True)
class MatchProblem:
    """Projector-derived matrices of the row-matching objective.

    ``m1`` and ``m2`` are the basis projectors, ``m*_plus`` their
    entrywise shift to nonnegativity by the joint minimum, and the
    off-diagonal/diagonal split feeds the assignment-form objective.
    """

    m1: np.ndarray
    m2: np.ndarray
    m1_plus: np.ndarray
    m2_plus: np.ndarray
    offdiag1: np.ndarray
    offdiag2: np.ndarray
    diag1: np.ndarray
    diag2: np.ndarray
    shift: float
    q1: np.ndarray
    q2a: np.ndarray

    @property
    def p(self) -> int:
        return self.m1.shape[0]


@dataclass(frozen=True)
class PermutationPlan:
    """A row alignment with its exactly evaluated trace objective."""

    perm: np.ndarray
    objective: float
    method: str

    def __post_init__(self):
        perm = np.asarray(self.perm, dtype=np.intp)
        if not np.array_equal(np.sort(perm), np.arange(perm.shape[0])):
            raise InputError("permutation is not a bijection on row indices")
        object.__setattr__(self, "perm", perm)

    def to_json(self) -> str:
        return json.dumps([int(i) for i in self.perm])

    @staticmethod
    def from_json(text: str, method: str = "provided") -> "PermutationPlan":
        try:
            idx = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InputError(f"permutation file is not valid JSON: {exc}") from None
        return PermutationPlan(
            perm=np.asarray(idx, dtype=np.intp), objective=float("nan"), method=method
        )


@dataclass(frozen=True)
class SignChoice:
    """Orientation of dataset 2 chosen by the larger explained variance."""

    sign: int
    trace_plus: float
    trace_minus: float


@dataclass(frozen=True)
class DspfpConfig:
    """Tuning knobs of the doubly stochastic projected fixed-point solver.

    ``lams`` is a continuation ladder for the step scale (soft to sharp);
    small problems (``p <= small_p``) additionally run seeded random
    starts and a 3-cycle polish after the pairwise-swap polish.
    """

    lams: tuple[float, ...] = (4.0, 1.0, 0.25, 0.0625)
    alpha: float = 0.5
    tol: float = 1e-6
    max_iter: int = 120
    proj_sweeps: int = 30
    polish: bool = True
    small_p: int = 12
    seeded_inits: int = 6
    init_seed: int = 12345


def identity_permutation(p: int) -> np.ndarray:
    return np.arange(p, dtype=np.intp)


def match_objective(q1: np.ndarray, q2a: np.ndarray, perm) -> float:
    """Exact trace objective ``||q1.T @ q2a[perm]||_F^2`` for one alignment."""
    return float(np.sum((q1.T @ q2a[np.asarray(perm, dtype=np.intp)]) ** 2))


def zero_pad(b2: MixingChannel, p1: int) -> MixingChannel:
    """Append zero rows so the channel has ``p1`` rows."""
    if p1 < b2.p:
        raise BadDimensions(f"cannot pad {b2.p} rows down to {p1}")
    if p1 == b2.p:
        return b2
    padded = np.vstack([b2.b, np.zeros((p1 - b2.p, b2.r12))])
    return MixingChannel(b=padded, dataset_index=b2.dataset_index)


def build_match_problem(q1: np.ndarray, q2a: np.ndarray) -> MatchProblem:
    """Shifted projector matrices and their diagonal split."""
    if q1.shape != q2a.shape:
        raise InputError(f"basis shapes differ: {q1.shape} vs {q2a.shape}")
    m1 = q1 @ q1.T
    m2 = q2a @ q2a.T
    shift = float(min(m1.min(), m2.min()))
    m1p = m1 - shift
    m2p = m2 - shift
    d1 = np.diag(m1p).copy()
    d2 = np.diag(m2p).copy()
    return MatchProblem(
        m1=m1,
        m2=m2,
        m1_plus=m1p,
        m2_plus=m2p,
        offdiag1=m1p - np.diag(d1),
        offdiag2=m2p - np.diag(d2),
        diag1=d1,
        diag2=d2,
        shift=shift,
        q1=q1,
        q2a=q2a,
    )


def _project_doubly_stochastic(m: np.ndarray, sweeps: int) -> np.ndarray:
    """Alternating row/column-sum correction with nonnegativity clipping."""
    p = m.shape[0]
    x = m.copy()
    for _ in range(sweeps):
        x += (1.0 + x.sum() / p - x.sum(1, keepdims=True) - x.sum(0, keepdims=True)) / p
        np.maximum(x, 0.0, out=x)
        if (
            np.abs(x.sum(1) - 1.0).max() < 1e-9
            and np.abs(x.sum(0) - 1.0).max() < 1e-9
        ):
            break
    return x


def _quadratic_step(x, q1, q2a, d1, d2, shift):
    """offdiag(M1+) @ X @ offdiag(M2+) using the rank-r projector structure."""
    t = q1 @ (q1.T @ x)
    t -= shift * x.sum(0)[None, :]
    t -= d1[:, None] * x
    out = (t @ q2a) @ q2a.T
    out -= shift * t.sum(1)[:, None]
    out -= t * d2[None, :]
    return out


def _perm_objective_m(m1: np.ndarray, m2: np.ndarray, perm: np.ndarray) -> float:
    return float(np.sum(m1 * m2[np.ix_(perm, perm)]))


def _swap_deltas(m1: np.ndarray, p2g: np.ndarray) -> np.ndarray:
    """Objective change for every pairwise swap, given gathered m2[perm][:, perm]."""
    g = m1 @ p2g
    gd = np.diag(g)
    base = g + g.T - gd[:, None] - gd[None, :]
    a_ii = np.diag(m1)
    b_ii = np.diag(p2g)
    corr = (a_ii[:, None] - m1) * (p2g - b_ii[:, None])
    diag_term = (a_ii[:, None] - a_ii[None, :]) * (b_ii[None, :] - b_ii[:, None])
    return 2.0 * (base - corr - corr.T) + diag_term


def _two_opt(m1, m2, perm, max_swaps=None):
    p = perm.shape[0]
    perm = perm.copy()
    if max_swaps is None:
        max_swaps = 4 * p
    for _ in range(max_swaps):
        deltas = _swap_deltas(m1, m2[np.ix_(perm, perm)])
        np.fill_diagonal(deltas, -np.inf)
        i, j = np.unravel_index(np.argmax(deltas), deltas.shape)
        if deltas[i, j] <= 1e-12:
            break
        perm[i], perm[j] = perm[j], perm[i]
    return perm


def _three_cycle_polish(m1, m2, perm, rounds=6):
    p = perm.shape[0]
    perm = perm.copy()
    cur = _perm_objective_m(m1, m2, perm)
    for _ in range(rounds):
        best_gain = 0.0
        best_perm = None
        for i, j, k in combinations(range(p), 3):
            for rot in ((j, k, i), (k, i, j)):
                cand = perm.copy()
                cand[[i, j, k]] = perm[list(rot)]
                gain = _perm_objective_m(m1, m2, cand) - cur
                if gain > best_gain + 1e-12:
                    best_gain, best_perm = gain, cand
        if best_perm is None:
            break
        perm = _two_opt(m1, m2, best_perm)
        cur = _perm_objective_m(m1, m2, perm)
    return perm


def dspfp_match(problem: MatchProblem, cfg: DspfpConfig | None = None) -> PermutationPlan:
    """Approximate the optimal row alignment.

    Runs the projected fixed-point iteration from several deterministic
    starts through the continuation ladder, discretizes each final iterate
    with a linear assignment, polishes with local swaps, and returns the
    best permutation found, never worse than the identity alignment.
    """
    cfg = cfg or DspfpConfig()
    p = problem.p
    q1, q2a = problem.q1, problem.q2a
    d1, d2 = problem.diag1, problem.diag2
    k_lin = np.outer(d1, d2)
    inits = [
        np.full((p, p), 1.0 / p),
        _project_doubly_stochastic(k_lin.copy(), cfg.proj_sweeps),
        np.eye(p),
        _project_doubly_stochastic(problem.m1 @ problem.m2, cfg.proj_sweeps),
    ]
    if p <= cfg.small_p:
        rng = np.random.default_rng(cfg.init_seed)
        for _ in range(cfg.seeded_inits):
            inits.append(_project_doubly_stochastic(rng.random((p, p)), cfg.proj_sweeps))
    best_perm = identity_permutation(p)
    best_obj = match_objective(q1, q2a, best_perm)
    for x0 in inits:
        x = x0
        for lam in cfg.lams:
            for _ in range(cfg.max_iter):
                step = (_quadratic_step(x, q1, q2a, d1, d2, problem.shift) + k_lin) / (
                    2.0 * lam
                )
                y = _project_doubly_stochastic(x + step, cfg.proj_sweeps)
                x_new = (1.0 - cfg.alpha) * x + cfg.alpha * y
                if np.max(np.abs(x_new - x)) < cfg.tol:
                    x = x_new
                    break
                x = x_new
        rows, cols = linear_sum_assignment(-x)
        perm = cols[np.argsort(rows)].astype(np.intp)
        if cfg.polish:
            perm = _two_opt(problem.m1, problem.m2, perm)
            if p <= cfg.small_p:
                perm = _three_cycle_polish(problem.m1, problem.m2, perm)
        obj = match_objective(q1, q2a, perm)
        if obj > best_obj + 1e-12:
            best_perm, best_obj = perm, obj
    return PermutationPlan(perm=best_perm, objective=best_obj, method="dspfp")


_PERM_CACHE: dict[int, np.ndarray] = {}


def _all_permutations(p: int) -> np.ndarray:
    cached = _PERM_CACHE.get(p)
    if cached is None:
        cached = np.array(list(permutations(range(p))), dtype=np.intp)
        _PERM_CACHE[p] = cached
    return cached


def exhaustive_match(q1: np.ndarray, q2a: np.ndarray) -> PermutationPlan:
    """Globally optimal row alignment by enumeration; limited to p <= 9."""
    p = q1.shape[0]
    if p > 9:
        raise TooLarge(f"exhaustive search limited to p <= 9, got {p}")
    m1 = q1 @ q1.T
    m2 = q2a @ q2a.T
    perms = _all_permutations(p)
    best = -np.inf
    best_perm = None
    for start in range(0, perms.shape[0], 20000):
        block = perms[start : start + 20000]
        gathered = m2[block[:, :, None], block[:, None, :]]
        objs = np.einsum("ij,nij->n", m1, gathered)
        i = int(np.argmax(objs))
        if objs[i] > best:
            best = float(objs[i])
            best_perm = block[i]
    return PermutationPlan(
        perm=best_perm,
        objective=match_objective(q1, q2a, best_perm),
        method="exhaustive",
    )


def choose_sign(run_plus, run_minus) -> SignChoice:
    """Pick the dataset-2 orientation with larger explained variance.

    Both runs must come from the same ranks and permutation; ties break
    to the positive orientation.
    """
    tp = float(run_plus.explained)
    tm = float(run_minus.explained)
    return SignChoice(sign=1 if tp >= tm else -1, trace_plus=tp, trace_minus=tm)
