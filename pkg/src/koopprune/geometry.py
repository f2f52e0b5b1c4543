"""Principal angles and vectors between subspaces of sampled functions.

Functions are represented by their weighted evaluations at the data points,
so the empirical L2 inner product reduces to the Euclidean one on columns.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .eigupdate import qr_positive
from .errors import DegenerateInputError, InvalidInputError, RankDeficiencyError

RANK_TOL = 1e-10


@dataclass(frozen=True)
class InnerProductSpec:
    """Per-sample weighting of the inner product ``<f, g> = w * sum f(x_i) g(x_i)``.

    Only the empirical L2 kind exists. The weight is folded into stored
    evaluations as ``sqrt(weight)`` so downstream kernels use plain dot
    products.
    """

    kind: str = "empirical-l2"
    weight: float = 1.0

    def __post_init__(self):
        if self.kind != "empirical-l2":
            raise InvalidInputError(f"unsupported inner product kind {self.kind!r}")
        if not self.weight > 0:
            raise InvalidInputError("inner product weight must be positive")

    @classmethod
    def empirical(cls, n_samples: int) -> "InnerProductSpec":
        return cls("empirical-l2", 1.0 / n_samples)

    @property
    def row_scale(self) -> float:
        return float(np.sqrt(self.weight))


@dataclass(frozen=True)
class SubspaceBasis:
    """Weighted evaluations of basis functions, with optional dictionary coordinates."""

    eval: np.ndarray
    coeffs: np.ndarray | None = None

    def __post_init__(self):
        ev = np.asarray(self.eval, dtype=float)
        if ev.ndim == 1:
            ev = ev[:, None]
        if ev.ndim != 2:
            raise InvalidInputError("basis evaluations must be a 2-D array")
        object.__setattr__(self, "eval", ev)
        if self.coeffs is not None:
            c = np.asarray(self.coeffs, dtype=float)
            if c.ndim != 2 or c.shape[1] != ev.shape[1]:
                raise InvalidInputError("coefficient matrix must have one column per basis function")
            object.__setattr__(self, "coeffs", c)

    @property
    def dim(self) -> int:
        return self.eval.shape[1]


@dataclass(frozen=True)
class PrincipalDecomposition:
    """Principal angles (ascending) and vectors between two subspaces.

    ``left_coeffs`` / ``right_coeffs`` give the principal vectors in the
    coordinates of the first / second basis; ``left_vectors`` and
    ``right_vectors`` are their evaluations.
    """

    angles: np.ndarray
    cosines: np.ndarray
    sines: np.ndarray
    left_coeffs: np.ndarray
    right_coeffs: np.ndarray
    left_vectors: np.ndarray
    right_vectors: np.ndarray

    @property
    def size(self) -> int:
        return self.angles.size


def _as_basis(x) -> SubspaceBasis:
    return x if isinstance(x, SubspaceBasis) else SubspaceBasis(x)


def orthonormal_factor(ev, name="basis"):
    """Thin QR of ``ev`` after checking numerical column rank.

    Rank is judged by the singular values of the triangular factor, which
    equal those of ``ev``; the tolerance is relative to the largest one.
    """
    if ev.shape[0] < ev.shape[1]:
        raise RankDeficiencyError(
            f"{name} has {ev.shape[1]} columns but only {ev.shape[0]} rows"
        )
    q, r = qr_positive(ev)
    sv = np.linalg.svd(r, compute_uv=False)
    if sv.size and not sv[-1] > RANK_TOL * sv[0]:
        col = int(np.argmin(np.abs(np.diag(r))))
        raise RankDeficiencyError(
            f"{name} is numerically rank deficient (sigma_min/sigma_max = "
            f"{sv[-1] / sv[0] if sv[0] else 0.0:.3g})",
            column=col,
        )
    return q, r


def principal_parts(eval_u, eval_v, names=("first basis", "second basis")):
    """Core computation shared by the public routine and the pruning engine.

    Returns a dict with the QR factors of both bases, the SVD of the cosine
    matrix and the accurately computed sines.
    """
    if eval_u.shape[0] != eval_v.shape[0]:
        raise InvalidInputError(
            f"bases have {eval_u.shape[0]} and {eval_v.shape[0]} rows"
        )
    qu, ru = orthonormal_factor(eval_u, names[0])
    qv, rv = orthonormal_factor(eval_v, names[1])
    cross = qu.T @ qv
    y, sigma, zt = np.linalg.svd(cross, full_matrices=False)
    z = zt.T
    k = sigma.size
    y = y[:, :k]
    left = qu @ y
    right = qv @ z
    # Sines from the residual of projecting each right vector onto the left
    # space; accurate for small angles where arccos(sigma) is not.
    resid = right - left * sigma
    sines = np.linalg.norm(resid, axis=0)
    cosines = np.clip(sigma, 0.0, 1.0)
    angles = np.arctan2(sines, cosines)
    order = np.argsort(angles, kind="stable")
    return {
        "qu": qu, "ru": ru, "qv": qv, "rv": rv, "cross": cross,
        "y": y[:, order], "z": z[:, order], "sigma": sigma[order],
        "cosines": cosines[order], "sines": np.minimum(sines[order], 1.0),
        "angles": angles[order], "left": left[:, order], "right": right[:, order],
    }


def principal_decomposition(u_basis, v_basis) -> PrincipalDecomposition:
    """Principal angles and vectors between ``span(u_basis)`` and ``span(v_basis)``.

    Parameters
    ----------
    u_basis, v_basis : SubspaceBasis or ndarray
        Full-column-rank evaluation matrices with the same number of rows.

    Returns
    -------
    PrincipalDecomposition
    """
    u = _as_basis(u_basis)
    v = _as_basis(v_basis)
    parts = principal_parts(u.eval, v.eval)
    left_coeffs = solve_triangular(parts["ru"], parts["y"])
    right_coeffs = solve_triangular(parts["rv"], parts["z"])
    return PrincipalDecomposition(
        angles=parts["angles"],
        cosines=parts["cosines"],
        sines=parts["sines"],
        left_coeffs=left_coeffs,
        right_coeffs=right_coeffs,
        left_vectors=parts["left"],
        right_vectors=parts["right"],
    )


def invariance_proximity(pd: PrincipalDecomposition) -> float:
    """Sine of the largest principal angle, in [0, 1]."""
    if pd.size == 0:
        raise InvalidInputError("empty principal decomposition")
    return float(np.clip(pd.sines.max(), 0.0, 1.0))


def worst_case_relative_error(a, b, trials: int = 1000, seed: int = 0) -> float:
    """Largest relative one-step error ``|(I - P_a) b c| / |b c|`` found.

    Samples ``trials`` Gaussian coefficient vectors and adds the analytic
    maximiser, the right principal vector of largest angle between ``R(a)``
    and ``R(b)``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if trials < 1:
        raise InvalidInputError("trials must be at least 1")
    qa, _ = orthonormal_factor(a, "a")
    rng = np.random.default_rng(seed)
    coeffs = rng.standard_normal((b.shape[1], trials))
    try:
        pd = principal_decomposition(a, b)
    except RankDeficiencyError:
        pd = None
    if pd is not None:
        coeffs = np.hstack([coeffs, pd.right_coeffs[:, -1:]])
    images = b @ coeffs
    norms = np.linalg.norm(images, axis=0)
    resid = np.linalg.norm(images - qa @ (qa.T @ images), axis=0)
    ok = norms > 0
    if not np.any(ok):
        raise DegenerateInputError("every sampled image vanished")
    return float(np.max(resid[ok] / norms[ok]))


def alternate_characterization_check(pd: PrincipalDecomposition, u_basis, v_basis, k: int) -> float:
    """Minimum of ``|P_V x| / |x|`` over ``x`` in U orthogonal to the top ``k-1`` principal vectors.

    The minimisation is a smallest-eigenvalue problem for the quadratic form
    of ``P_V`` restricted to that subspace. The result should equal the
    ``k``-th largest principal angle's cosine when ``dim U <= dim V``. With
    ``dim U > dim V`` part of U is orthogonal to V and the minimum is 0.
    """
    u = _as_basis(u_basis)
    v = _as_basis(v_basis)
    a = pd.size
    if not 1 <= k <= a:
        raise InvalidInputError(f"k must lie in [1, {a}], got {k}")
    qu, _ = orthonormal_factor(u.eval, "first basis")
    qv, _ = orthonormal_factor(v.eval, "second basis")
    excluded = pd.left_vectors[:, a - (k - 1):]
    if excluded.shape[1]:
        coords = qu.T @ excluded
        full, _ = np.linalg.qr(coords, mode="complete")
        comp = full[:, excluded.shape[1]:]
        sub = qu @ comp
    else:
        sub = qu
    proj = qv.T @ sub
    form = proj.T @ proj
    smallest = np.linalg.eigvalsh(0.5 * (form + form.T))[0]
    return float(np.sqrt(max(smallest, 0.0)))
