"""Diagonal-plus-rank-one eigensolver and incremental thin-QR kernels.

These are the O(m^2) building blocks of the rank-one pruning step. The
eigensolver handles ``diag(d) + b b^T`` by deflation, a vectorised
safeguarded secular root finder and Gu-Eisenstat eigenvectors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    ConvergenceError,
    InvalidInputError,
    PreconditionError,
    RankDeficiencyError,
)

EPS = np.finfo(float).eps
MAX_SECULAR_ITERS = 100
QR_RANK_TOL = 1e-12


@dataclass(frozen=True)
class DiagPlusRankOne:
    """The symmetric matrix ``diag(d) + outer(b, b)``."""

    d: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.d, dtype=float).ravel()
        b = np.asarray(self.b, dtype=float).ravel()
        if d.shape != b.shape:
            raise InvalidInputError(f"d has length {d.size} but b has length {b.size}")
        if not (np.all(np.isfinite(d)) and np.all(np.isfinite(b))):
            raise InvalidInputError("non-finite entries in rank-one problem")
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "b", b)

    @property
    def size(self) -> int:
        return self.d.size

    def dense(self) -> np.ndarray:
        return np.diag(self.d) + np.outer(self.b, self.b)

    def scale(self) -> float:
        """Magnitude used for all relative tolerances: ``|d|_inf + |b|^2``."""
        if self.size == 0:
            return 0.0
        return float(np.max(np.abs(self.d)) + self.b @ self.b)


@dataclass(frozen=True)
class EigenPairs:
    values: np.ndarray
    vectors: np.ndarray


@dataclass(frozen=True)
class ThinQr:
    """Thin QR factors with nonnegative diagonal on ``r``."""

    q: np.ndarray
    r: np.ndarray

    @property
    def ncols(self) -> int:
        return self.r.shape[0]

    def product(self) -> np.ndarray:
        return self.q @ self.r


def qr_positive(a):
    """Reduced QR of ``a`` with the diagonal of R made nonnegative."""
    q, r = np.linalg.qr(a)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs, r * signs[:, None]


def thin_qr(a) -> ThinQr:
    q, r = qr_positive(np.asarray(a, dtype=float))
    return ThinQr(q, r)


def canonical_eigen_order(values, vectors):
    """Sort eigenpairs ascending with a deterministic tie-break.

    Each vector is sign-normalised so its first non-negligible entry is
    positive; exact value ties are then broken by lexicographic order of the
    vector entries.
    """
    values = np.asarray(values, dtype=float)
    vectors = np.array(vectors, dtype=float, copy=True)
    if values.size == 0:
        return values, vectors
    mags = np.abs(vectors)
    thresh = 1e-12 * np.maximum(mags.max(axis=0), 1e-300)
    first = np.argmax(mags > thresh, axis=0)
    lead = vectors[first, np.arange(vectors.shape[1])]
    vectors *= np.where(lead < 0, -1.0, 1.0)
    order = np.argsort(values, kind="stable")
    values, vectors = values[order], vectors[:, order]
    if np.any(values[1:] == values[:-1]):
        # np.lexsort treats the last key as primary.
        keys = [vectors[i] for i in range(vectors.shape[0] - 1, -1, -1)] + [values]
        order = np.lexsort(keys)
        values, vectors = values[order], vectors[:, order]
    return values, vectors

# --------------------------------------------------------------------------
# secular equation
# --------------------------------------------------------------------------


def _deflate(d, b, tol):
    """Deflate small rank-one components and near-equal diagonal pairs.

    Works on ascending ``d``. Returns the updated (d, b), the list of plane
    rotations ``(p, j, c, s)`` applied, and a boolean mask of the coordinates
    left for root finding.
    """
    m = d.size
    d = d.copy()
    b = b.copy()
    rotations = []
    scale = max(np.max(np.abs(d)), b @ b)
    bnorm = np.sqrt(b @ b)
    keep = np.abs(b) * bnorm > tol * scale
    b[~keep] = 0.0

    last = -1
    for j in range(m):
        if not keep[j]:
            continue
        if last >= 0 and d[j] - d[last] <= tol * scale:
            r = np.hypot(b[last], b[j])
            c, s = b[j] / r, b[last] / r
            dl, dj = d[last], d[j]
            d[last] = c * c * dl + s * s * dj
            d[j] = s * s * dl + c * c * dj
            b[last], b[j] = 0.0, r
            rotations.append((last, j, c, s))
            keep[last] = False
        last = j
    return d, b, rotations, keep


def _secular_roots(dk, z):
    """All roots of ``1 + sum z_j^2 / (dk_j - lam) = 0`` for ascending ``dk``.

    Each root is held as ``dk[origin] + tau`` relative to its nearest pole so
    differences ``lam - dk_j`` stay accurate. Returns ``(origin, tau, delta)``
    where ``delta[i, j] = dk_j - lam_i``.
    """
    k = dk.size
    z2 = z * z
    znorm2 = float(z2.sum())
    idx = np.arange(k)

    origin = idx.copy()
    lo = np.zeros(k)
    hi = np.zeros(k)
    if k > 1:
        gaps = dk[1:] - dk[:-1]
        mid = dk[:-1] + 0.5 * gaps
        with np.errstate(divide="ignore"):
            fmid = 1.0 + ((z2[None, :] / (dk[None, :] - mid[:, None])).sum(axis=1))
        left = fmid >= 0
        inner = idx[:-1]
        origin[inner] = np.where(left, inner, inner + 1)
        lo[inner] = np.where(left, 0.0, -0.5 * gaps)
        hi[inner] = np.where(left, 0.5 * gaps, 0.0)
    hi[-1] = znorm2
    tau = 0.5 * (lo + hi)

    dif = dk[None, :] - dk[origin][:, None]
    active = idx.copy()

    for _ in range(MAX_SECULAR_ITERS):
        # Only unconverged roots are iterated; each row is independent.
        rows = active
        t = tau[rows]
        delta = dif[rows] - t[:, None]
        left_mask = idx[None, :] <= rows[:, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = z2[None, :] / delta
            dterms = terms / delta
        lterms = np.where(left_mask, terms, 0.0)
        ldterms = np.where(left_mask, dterms, 0.0)
        psi = lterms.sum(axis=1)
        phi = terms.sum(axis=1) - psi
        dpsi = ldterms.sum(axis=1)
        df = dterms.sum(axis=1)
        dphi = df - dpsi
        f = 1.0 + psi + phi
        errbound = 8.0 * EPS * (1.0 + phi - psi) + EPS * np.abs(t) * df

        lo_r, hi_r = lo[rows], hi[rows]
        converged = (np.abs(f) <= errbound) | (
            hi_r - lo_r <= 4.0 * EPS * np.maximum(np.abs(lo_r), np.abs(hi_r))
        )

        # The secular function is increasing between poles.
        neg = f < 0
        lo_r = np.where(neg, t, lo_r)
        hi_r = np.where(neg, hi_r, t)

        has_right = rows < k - 1
        di = delta[np.arange(rows.size), rows]
        di1 = np.where(has_right, delta[np.arange(rows.size), np.minimum(rows + 1, k - 1)], 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            c = f - di * dpsi - di1 * dphi
            a = f * (di + di1) - di * di1 * df
            bq = di * di1 * f
            disc = np.sqrt(np.abs(a * a - 4.0 * bq * c))
            eta_mid = np.where(a <= 0, (a - disc) / (2.0 * c), 2.0 * bq / (a + disc))
            # Last root: single-pole model c + s / (di - eta) = 0.
            eta_last = di + di * di * dpsi / (f - di * dpsi)
            eta = np.where(has_right, eta_mid, eta_last)
            eta = np.where(np.isfinite(eta) & (eta * f < 0), eta, -f / df)

        cand = t + eta
        bad = ~np.isfinite(cand) | (cand <= lo_r) | (cand >= hi_r)
        cand = np.where(bad, 0.5 * (lo_r + hi_r), cand)
        small_step = np.abs(cand - t) <= 2.0 * EPS * np.abs(t)

        lo[rows] = lo_r
        hi[rows] = hi_r
        tau[rows] = np.where(converged, t, cand)
        active = rows[~(converged | small_step)]
        if active.size == 0:
            break
    else:
        bad_root = int(active[0])
        left_pole = float(dk[bad_root])
        right_pole = float(dk[bad_root + 1]) if bad_root + 1 < k else left_pole + znorm2
        raise ConvergenceError(
            f"secular root {bad_root} did not converge in {MAX_SECULAR_ITERS} iterations",
            interval=(left_pole, right_pole),
        )

    delta = dif - tau[:, None]
    return origin, tau, delta


def secular_eigen(problem: DiagPlusRankOne, tol: float = 1e-13) -> EigenPairs:
    """Eigendecomposition of ``diag(d) + b b^T`` in O(m^2) operations.

    Parameters
    ----------
    problem : DiagPlusRankOne
    tol : float
        Relative accuracy target; deflation uses ``tol / 10`` of the problem
        scale ``|d|_inf + |b|^2``.

    Returns
    -------
    EigenPairs
        Values ascending, orthonormal vectors as columns.
    """
    if not tol > 0:
        raise InvalidInputError("tol must be positive")
    m = problem.size
    if m == 0:
        return EigenPairs(np.zeros(0), np.zeros((0, 0)))

    perm = np.argsort(problem.d, kind="stable")
    d = problem.d[perm]
    b = problem.b[perm]
    if not np.any(b):
        values, vectors = canonical_eigen_order(d, np.eye(m))
        return EigenPairs(values, _unpermute(vectors, perm))

    d, b, rotations, keep = _deflate(d, b, 0.1 * tol)
    values = d.copy()
    vecs = np.eye(m)

    kidx = np.flatnonzero(keep)
    if kidx.size:
        dk = d[kidx]
        z = b[kidx]
        origin, tau, delta = _secular_roots(dk, z)
        lam = dk[origin] + tau
        # Gu-Eisenstat: rebuild z from the computed roots so the
        # eigenvectors come out orthogonal. delta[j, i] = dk_i - lam_j.
        k = kidx.size
        diff = dk[:, None] - dk[None, :]
        np.fill_diagonal(diff, 1.0)
        ratios = delta.T / diff
        np.fill_diagonal(ratios, np.diag(delta))
        zhat2 = -np.prod(ratios, axis=1)
        zhat = np.copysign(np.sqrt(np.maximum(zhat2, 0.0)), z)
        kv = zhat[:, None] / delta.T
        kv /= np.linalg.norm(kv, axis=0)
        values[kidx] = lam
        block = np.zeros((m, k))
        block[kidx] = kv
        vecs[:, kidx] = block

    # Undo the deflation rotations: vectors = G_1^T G_2^T ... vecs.
    for p, j, c, sn in reversed(rotations):
        row_p = vecs[p].copy()
        vecs[p] = c * row_p + sn * vecs[j]
        vecs[j] = -sn * row_p + c * vecs[j]
    vectors = vecs
    values, vectors = canonical_eigen_order(values, vectors)
    return EigenPairs(values, _unpermute(vectors, perm))


def _unpermute(vectors, perm):
    out = np.empty_like(vectors)
    out[perm] = vectors
    return out


# --------------------------------------------------------------------------
# QR maintenance
# --------------------------------------------------------------------------


def incremental_qr_update(qr: ThinQr, t) -> ThinQr:
    """QR factors of ``(q r) t`` from those of ``q r``.

    Only the small product ``c = r t`` is factorised; the tall factor is
    touched once, by ``q @ q_c``.

    Raises
    ------
    RankDeficiencyError
        If ``r t`` has a (numerically) zero diagonal in its R factor.
    """
    t = np.asarray(t, dtype=float)
    s = qr.ncols
    if t.ndim != 2 or t.shape[0] != s:
        raise InvalidInputError(f"transform must have {s} rows, got shape {t.shape}")
    c = qr.r @ t
    q_c, r_c = qr_positive(c)
    diag = np.diag(r_c)
    ref = max(np.abs(diag).max(initial=0.0), np.linalg.norm(c, ord=np.inf), 1e-300)
    small = np.flatnonzero(diag <= QR_RANK_TOL * ref)
    if small.size:
        raise RankDeficiencyError(
            f"updated triangular factor is rank deficient at column {small[0]}",
            column=int(small[0]),
        )
    return ThinQr(qr.q @ q_c, r_c)


def orthonormality_residual(q) -> float:
    q = np.asarray(q, dtype=float)
    if q.shape[1] == 0:
        return 0.0
    return float(np.max(np.abs(q.T @ q - np.eye(q.shape[1]))))


def reorthonormalize_with_factor(q):
    """Return ``(q_new, r)`` with ``q = q_new @ r`` and ``q_new`` orthonormal."""
    q = np.asarray(q, dtype=float)
    resid = orthonormality_residual(q)
    if not resid < 0.1:
        raise PreconditionError(
            f"matrix is too far from orthonormal to repair (residual {resid:.3g})"
        )
    return qr_positive(q)


def reorthonormalize(q) -> np.ndarray:
    """Restore orthonormal columns to a slightly drifted basis.

    The column space is kept; an exactly orthonormal input comes back
    unchanged to rounding.
    """
    return reorthonormalize_with_factor(q)[0]
