"""Structure adapted wavelet (SAW) estimation.

The stacked differenced model ``dy[i, s] = xu[i, s] @ gamma[s] + noise`` is
estimated by expanding the coefficient path ``gamma`` in a multivariate Haar
basis whose matrices adapt to the empirical instrument/regressor
cross-moments.  Writing ``Q(block)`` for the weighted cross-moment of a
dyadic block, the regressor-side basis uses

    A_root    = Q_root^(-1/2)
    A_left    = Q_left^(-1)  @ S^(-1/2)      with  S = Q_left^(-1) + Q_right^(-1)
    A_right   = Q_right^(-1) @ S^(-1/2)

and the instrument side the reversed products ``S^(-1/2) @ Q^(-1)``.  The two
sides are exact duals: the grand Gram matrix of instrument-side against
regressor-side basis vectors is the identity, so each coefficient vector is
estimated by a single weighted moment sum, independently of all others.  For
symmetric cross-moments (self-instrumented panels) the instrument side is
simply the transpose of the regressor side.

Estimated coefficient vectors are hard thresholded at a universal level
computed from the residual variance of a threshold-zero pre-fit, and the
coefficient path is rebuilt from the surviving coefficients.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import NonRealResult, SingularMatrix
from .panel import DifferencedPanel

logger = logging.getLogger(__name__)

LAMBDA_FLOOR = 1e-12


def inv_sqrt(mat: np.ndarray, eps_rank: float = 1e-10) -> np.ndarray:
    """Inverse matrix square root via eigendecomposition.

    Uses the principal branch of the square root per eigenvalue, so the
    result ``R`` satisfies ``R @ R @ mat = I`` also for non-symmetric
    diagonalizable matrices (complex eigenvalue pairs allowed, the result
    must come out real).

    Raises
    ------
    SingularMatrix
        If any eigenvalue modulus falls below ``eps_rank``.
    NonRealResult
        If the reconstructed matrix has imaginary parts above 1e-8.
    """
    mat = np.asarray(mat, dtype=float)
    w, v = np.linalg.eig(mat)
    if np.min(np.abs(w)) < eps_rank:
        raise SingularMatrix(f"eigenvalue modulus {np.min(np.abs(w)):.3e} below {eps_rank:.1e}")
    r = (v * w.astype(complex) ** -0.5) @ np.linalg.inv(v)
    if np.max(np.abs(r.imag)) > 1e-8:
        raise NonRealResult(
            f"imaginary residual {np.max(np.abs(r.imag)):.3e} in inverse square root"
        )
    return np.ascontiguousarray(r.real)


def _checked_inv(mat: np.ndarray, eps_rank: float, what: str) -> np.ndarray:
    w = np.linalg.eigvals(mat)
    if np.min(np.abs(w)) < eps_rank:
        raise SingularMatrix(f"{what} has eigenvalue modulus below {eps_rank:.1e}")
    return np.linalg.inv(mat)


@dataclass(frozen=True)
class SawBasis:
    """Evaluated structure-adapted basis for one differenced panel.

    ``a[l]`` has shape (K_l, 2, w, w) holding the left/right block matrices
    per translation, ``abar`` the instrument-side duals; ``q[l]`` keeps the
    (2 K_l, w, w) block cross-moments for diagnostics.
    """

    depth: int
    width: int
    n_units: int
    t_diff: int
    q11: np.ndarray
    a11: np.ndarray
    abar11: np.ndarray
    q: dict[int, np.ndarray]
    a: dict[int, np.ndarray]
    abar: dict[int, np.ndarray]
    eps_rank: float

    def w_matrix(self, level: int, k: int, s: int) -> np.ndarray:
        """Regressor-side basis matrix at stored slot ``s`` (0-based)."""
        return self._eval(self.a11, self.a, level, k, s)

    def wbar_matrix(self, level: int, k: int, s: int) -> np.ndarray:
        """Instrument-side (dual) basis matrix at stored slot ``s``."""
        return self._eval(self.abar11, self.abar, level, k, s)

    def _eval(self, root, blocks, level, k, s):
        if level == 1:
            return root
        blk = 2 ** (self.depth - level)
        amp = math.sqrt(2.0 ** (level - 2))
        start = blk * (2 * k - 2)
        if start <= s < start + blk:
            return amp * blocks[level][k - 1, 0]
        if start + blk <= s < start + 2 * blk:
            return -amp * blocks[level][k - 1, 1]
        return np.zeros((self.width, self.width))

    def pairs(self):
        """All (level, translation) indices, root first."""
        yield (1, 1)
        for level in range(2, self.depth + 1):
            for k in range(1, 2 ** (level - 2) + 1):
                yield (level, k)


@dataclass(frozen=True)
class SawCoefficients:
    """Stacked basis coefficient vectors: root plus per-level arrays (K_l, w)."""

    b11: np.ndarray
    detail: dict[int, np.ndarray]

    def n_nonzero_vectors(self, tol: float = 0.0) -> int:
        count = int(np.max(np.abs(self.b11)) > tol)
        for arr in self.detail.values():
            count += int(np.sum(np.max(np.abs(arr), axis=1) > tol))
        return count

    def max_abs(self) -> float:
        vals = [np.max(np.abs(self.b11))]
        vals += [np.max(np.abs(arr)) if arr.size else 0.0 for arr in self.detail.values()]
        return float(max(vals))


@dataclass(frozen=True)
class ThresholdSelection:
    """Universal threshold with its variance and exponent ingredients."""

    lam: float
    v_hat: float
    kappa: float


@dataclass(frozen=True)
class SawFit:
    """Raw and shrunk coefficients with the reconstructed coefficient paths."""

    basis: SawBasis
    b_raw: SawCoefficients
    b_shrunk: SawCoefficients
    lam: float
    v_hat: float
    kappa: float
    gamma_raw: np.ndarray
    gamma_hat: np.ndarray


def build_basis(
    dp: DifferencedPanel, eps_rank: float = 1e-10, check_tol: float = 1e-8
) -> SawBasis:
    """Construct the structure-adapted basis from block cross-moments.

    Every dyadic block must carry an invertible cross-moment, which needs at
    least ``width`` observations per block (``n * 2**(depth - level)``); the
    empirical orthonormality identities are verified after construction.

    Raises
    ------
    SingularMatrix
        Naming the offending (level, block) when a cross-moment is singular
        or the orthonormality check fails.
    """
    if not dp.padded:
        raise SingularMatrix("differenced panel must be reflection padded first")
    n, t_star, width = dp.n, dp.t_diff, dp.width
    depth = dp.depth
    cross = np.einsum("itp,itq->tpq", dp.zu, dp.xu)
    q11 = cross.sum(axis=0) / (n * t_star)
    try:
        a11 = inv_sqrt(q11, eps_rank)
    except SingularMatrix as exc:
        raise SingularMatrix(f"block (1, 1): {exc}") from None
    q: dict[int, np.ndarray] = {}
    a: dict[int, np.ndarray] = {}
    abar: dict[int, np.ndarray] = {}
    for level in range(2, depth + 1):
        blk = 2 ** (depth - level)
        h2 = 2.0 ** (level - 2)
        qs = cross.reshape(-1, blk, width, width).sum(axis=1) * (h2 / (n * t_star))
        n_k = 2 ** (level - 2)
        a_lev = np.empty((n_k, 2, width, width))
        ab_lev = np.empty((n_k, 2, width, width))
        for k in range(n_k):
            tag = f"level {level}, blocks ({2 * k + 1}, {2 * k + 2})"
            hint = (
                f" ({n * blk} observations per block for width {width};"
                " too few observations in a dyadic block)"
            )
            try:
                inv_left = _checked_inv(qs[2 * k], eps_rank, "cross-moment")
                inv_right = _checked_inv(qs[2 * k + 1], eps_rank, "cross-moment")
                sm = inv_sqrt(inv_left + inv_right, eps_rank)
            except SingularMatrix as exc:
                raise SingularMatrix(f"{tag}: {exc}{hint}") from None
            a_lev[k, 0] = inv_left @ sm
            a_lev[k, 1] = inv_right @ sm
            ab_lev[k, 0] = sm @ inv_left
            ab_lev[k, 1] = sm @ inv_right
        q[level] = qs
        a[level] = a_lev
        abar[level] = ab_lev
    basis = SawBasis(
        depth=depth,
        width=width,
        n_units=n,
        t_diff=t_star,
        q11=q11,
        a11=a11,
        abar11=a11,
        q=q,
        a=a,
        abar=abar,
        eps_rank=eps_rank,
    )
    _verify_orthonormality(basis, check_tol)
    return basis


def _verify_orthonormality(basis: SawBasis, tol: float) -> None:
    eye = np.eye(basis.width)
    worst = np.max(np.abs(basis.abar11 @ basis.q11 @ basis.a11 - eye))
    for level in range(2, basis.depth + 1):
        qs, a_lev, ab_lev = basis.q[level], basis.a[level], basis.abar[level]
        for k in range(a_lev.shape[0]):
            q1, q2 = qs[2 * k], qs[2 * k + 1]
            diag = ab_lev[k, 0] @ q1 @ a_lev[k, 0] + ab_lev[k, 1] @ q2 @ a_lev[k, 1]
            worst = max(worst, np.max(np.abs(diag - eye)))
            # these two identities make every cross-pair Gram block vanish
            worst = max(worst, np.max(np.abs(q1 @ a_lev[k, 0] - q2 @ a_lev[k, 1])))
            worst = max(worst, np.max(np.abs(ab_lev[k, 0] @ q1 - ab_lev[k, 1] @ q2)))
    if worst > tol:
        raise SingularMatrix(
            f"empirical orthonormality violated by {worst:.3e} (tolerance {tol:.1e});"
            " the design is too ill-conditioned"
        )


def estimate_b(dp: DifferencedPanel, basis: SawBasis) -> SawCoefficients:
    """Raw coefficient vectors from the instrument-side moment sums."""
    score = np.einsum("itp,it->tp", dp.zu, dp.dy)
    scale = 1.0 / (dp.n * dp.t_diff)
    b11 = scale * (basis.abar11 @ score.sum(axis=0))
    detail: dict[int, np.ndarray] = {}
    for level in range(2, basis.depth + 1):
        blk = 2 ** (basis.depth - level)
        amp = math.sqrt(2.0 ** (level - 2))
        u = score.reshape(-1, blk, basis.width).sum(axis=1)
        ab = basis.abar[level]
        left = np.einsum("kpq,kq->kp", ab[:, 0], u[0::2])
        right = np.einsum("kpq,kq->kp", ab[:, 1], u[1::2])
        detail[level] = amp * scale * (left - right)
    return SawCoefficients(b11=b11, detail=detail)


def reconstruct_gamma(basis: SawBasis, coeffs: SawCoefficients) -> np.ndarray:
    """Evaluate the coefficient path ``gamma`` implied by basis coefficients."""
    gamma = np.tile(basis.a11 @ coeffs.b11, (basis.t_diff, 1))
    for level, b_lev in coeffs.detail.items():
        blk = 2 ** (basis.depth - level)
        amp = math.sqrt(2.0 ** (level - 2))
        a_lev = basis.a[level]
        pos = np.einsum("kpq,kq->kp", a_lev[:, 0], b_lev)
        neg = np.einsum("kpq,kq->kp", a_lev[:, 1], b_lev)
        steps = np.stack([pos, -neg], axis=1).reshape(-1, basis.width)
        gamma += amp * np.repeat(steps, blk, axis=0)
    return gamma


def select_threshold(
    dp: DifferencedPanel,
    basis: SawBasis,
    b_raw: SawCoefficients | None = None,
    smalln: bool = False,
) -> ThresholdSelection:
    """Universal threshold from the residuals of a threshold-zero pre-fit.

    The variance level is the largest plug-in variance of the scaled
    instrument-side score over all (level, translation, component) triplets,

        v_hat = max (1 / (n T)) * sum (zscore * resid)^2,

    and the threshold is

        lam = sqrt(v_hat) * (2 w log(T w) / (n T)^(1/kappa))^(kappa/2)

    with ``kappa = 1 - log log(n T) / log(n T)`` and ``T`` the padded
    differenced length.  A degenerate variance (perfectly fit panel) puts the
    threshold at a tiny positive floor.  With ``smalln`` the threshold is
    inflated by ``(sqrt(T) / log T)^(kappa/2)``, the fixed-n fallback for
    dependent scores.
    """
    if b_raw is None:
        b_raw = estimate_b(dp, basis)
    gamma_raw = reconstruct_gamma(basis, b_raw)
    resid = dp.dy - np.einsum("itp,tp->it", dp.xu, gamma_raw)
    weighted = dp.zu * resid[:, :, None]
    second = np.einsum("itp,itq->tpq", weighted, weighted)
    n, t_star, width = dp.n, dp.t_diff, basis.width
    scale = 1.0 / (n * t_star)
    v_hat = float(np.max(np.einsum("pq,qr,pr->p", basis.abar11, second.sum(axis=0), basis.abar11)))
    v_hat *= scale
    for level in range(2, basis.depth + 1):
        blk = 2 ** (basis.depth - level)
        h2 = 2.0 ** (level - 2)
        blocks = second.reshape(-1, blk, width, width).sum(axis=1)
        ab = basis.abar[level]
        d_left = np.einsum("kpq,kqr,kpr->kp", ab[:, 0], blocks[0::2], ab[:, 0])
        d_right = np.einsum("kpq,kqr,kpr->kp", ab[:, 1], blocks[1::2], ab[:, 1])
        v_hat = max(v_hat, float(np.max(h2 * scale * (d_left + d_right))))
    log_nt = math.log(n * t_star)
    kappa = 1.0 - math.log(log_nt) / log_nt
    lam = math.sqrt(max(v_hat, 0.0)) * (
        2.0 * width * math.log(t_star * width) / (n * t_star) ** (1.0 / kappa)
    ) ** (kappa / 2.0)
    if smalln:
        lam *= (math.sqrt(t_star) / math.log(t_star)) ** (kappa / 2.0)
    if lam < LAMBDA_FLOOR:
        logger.debug("degenerate variance v_hat=%.3e, threshold floored", v_hat)
        lam = LAMBDA_FLOOR
    return ThresholdSelection(lam=lam, v_hat=v_hat, kappa=kappa)


def shrink(coeffs: SawCoefficients, lam: float) -> SawCoefficients:
    """Hard threshold every coefficient elementwise at level ``lam``."""
    b11 = np.where(np.abs(coeffs.b11) > lam, coeffs.b11, 0.0)
    detail = {
        level: np.where(np.abs(arr) > lam, arr, 0.0) for level, arr in coeffs.detail.items()
    }
    return SawCoefficients(b11=b11, detail=detail)


def shrink_and_reconstruct(
    b_raw: SawCoefficients,
    lam: float,
    basis: SawBasis,
    v_hat: float = float("nan"),
    kappa: float = float("nan"),
    gamma_raw: np.ndarray | None = None,
) -> SawFit:
    """Threshold raw coefficients and rebuild both coefficient paths.

    The unshrunk path is retained alongside the shrunk one because the jump
    detector works on the unshrunk finest-level coefficients.
    """
    b_shrunk = shrink(b_raw, lam)
    if gamma_raw is None:
        gamma_raw = reconstruct_gamma(basis, b_raw)
    gamma_hat = reconstruct_gamma(basis, b_shrunk)
    return SawFit(
        basis=basis,
        b_raw=b_raw,
        b_shrunk=b_shrunk,
        lam=float(lam),
        v_hat=float(v_hat),
        kappa=float(kappa),
        gamma_raw=gamma_raw,
        gamma_hat=gamma_hat,
    )


def fit_saw(
    dp: DifferencedPanel,
    lam: float | None = None,
    smalln: bool = False,
    eps_rank: float = 1e-10,
    basis: SawBasis | None = None,
) -> SawFit:
    """Full SAW stage: basis, raw coefficients, threshold, shrink, rebuild."""
    if basis is None:
        basis = build_basis(dp, eps_rank=eps_rank)
    b_raw = estimate_b(dp, basis)
    sel = select_threshold(dp, basis, b_raw=b_raw, smalln=smalln)
    lam_used = sel.lam if lam is None else float(lam)
    return shrink_and_reconstruct(b_raw, lam_used, basis, v_hat=sel.v_hat, kappa=sel.kappa)
