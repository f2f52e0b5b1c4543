"""Lifting, forward/backward EDMD fits and Koopman eigenfunctions."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import solve_triangular

from .data import Dictionary, TrajectoryDataset, eval_dictionary
from .eigupdate import canonical_eigen_order, qr_positive
from .errors import EvaluationError, InvalidInputError, NumericalAsymmetryError
from .geometry import InnerProductSpec, orthonormal_factor

IMAG_TOL = 1e-8
TRIVIAL_CORRELATION = 0.99
DEFECTIVE_COND = 1e12


@dataclass
class LiftedData:
    """Weighted dictionary evaluations ``a = Psi(X) / sqrt(N)`` and ``b = Psi(X+) / sqrt(N)``.

    ``coeffs`` maps the columns of ``a``/``b`` to coordinates in the
    dictionary they were lifted from (identity right after :func:`lift`).
    """

    a: np.ndarray
    b: np.ndarray
    dictionary: Dictionary | None = None
    coeffs: np.ndarray | None = None

    def __post_init__(self):
        self.a = np.atleast_2d(np.asarray(self.a, dtype=float))
        self.b = np.atleast_2d(np.asarray(self.b, dtype=float))
        if self.a.shape != self.b.shape:
            raise InvalidInputError(f"a and b differ in shape: {self.a.shape} vs {self.b.shape}")
        if self.coeffs is None:
            self.coeffs = np.eye(self.a.shape[1])

    @property
    def n_samples(self) -> int:
        return self.a.shape[0]

    @property
    def dim(self) -> int:
        return self.a.shape[1]

    def validate_rank(self):
        orthonormal_factor(self.a, "lifted data a = Psi(X)")
        orthonormal_factor(self.b, "lifted data b = Psi(X+)")
        return self

    def restrict(self, coeffs) -> "LiftedData":
        """Lifted data of the subspace spanned by ``self`` columns times ``coeffs``."""
        coeffs = np.asarray(coeffs, dtype=float)
        return LiftedData(self.a @ coeffs, self.b @ coeffs, self.dictionary, self.coeffs @ coeffs)


@dataclass
class EdmdModel:
    k_f: np.ndarray
    k_b: np.ndarray
    m_c: np.ndarray
    r_a: np.ndarray | None = None


@dataclass
class EigenfunctionSet:
    """Eigenpairs of the forward EDMD matrix.

    ``coeff_vectors`` are columns in the coordinates of the lifted columns;
    ``basis_coeffs`` maps those to the dictionary.
    """

    eigenvalues: np.ndarray
    coeff_vectors: np.ndarray
    basis_coeffs: np.ndarray
    residuals: np.ndarray
    trivial_index: int | None = None
    leading_index: int | None = None
    warnings: list = field(default_factory=list)


def lift(dataset: TrajectoryDataset, dictionary: Dictionary, inner: InnerProductSpec | None = None,
         check_rank: bool = True) -> LiftedData:
    """Evaluate ``dictionary`` on both snapshot matrices with the empirical weight.

    Raises
    ------
    EvaluationError
        If any dictionary function is non-finite at a sample.
    RankDeficiencyError
        If either lifted matrix loses column rank (only with ``check_rank``).
    """
    n = dataset.n_samples
    if n == 0:
        raise InvalidInputError("dataset is empty")
    inner = inner or InnerProductSpec.empirical(n)
    scale = inner.row_scale
    mats = []
    for name, pts in (("X", dataset.x), ("X+", dataset.x_plus)):
        m = eval_dictionary(dictionary, pts)
        bad = np.argwhere(~np.isfinite(m))
        if bad.size:
            i, j = bad[0]
            raise EvaluationError(
                f"dictionary entry {j} ({dictionary.entries[j].label()}) is non-finite "
                f"at sample {i} of {name}"
            )
        mats.append(m * scale)
    lifted = LiftedData(mats[0], mats[1], dictionary)
    if check_rank:
        try:
            lifted.validate_rank()
        except Exception as exc:
            exc.args = (f"{exc.args[0]}; consider a smaller dictionary",)
            raise
    return lifted


def _lstsq_qr(q, r, rhs):
    return solve_triangular(r, q.T @ rhs)


def fit_edmd(lifted: LiftedData) -> EdmdModel:
    """Forward and backward least-squares EDMD matrices and the consistency matrix."""
    qa, ra = orthonormal_factor(lifted.a, "lifted data a")
    qb, rb = orthonormal_factor(lifted.b, "lifted data b")
    k_f = _lstsq_qr(qa, ra, lifted.b)
    k_b = _lstsq_qr(qb, rb, lifted.a)
    m_c = np.eye(lifted.dim) - k_f @ k_b
    return EdmdModel(k_f, k_b, m_c, ra)


def consistency_eigendecomposition(model: EdmdModel):
    """Eigenvalues (ascending, clamped to [0, 1]) and eigenvectors of the consistency matrix.

    With ``model.r_a`` available, each vector is scaled to unit empirical
    norm of the function it defines; otherwise to unit Euclidean norm.
    """
    vals, vecs = np.linalg.eig(model.m_c)
    ref = max(1.0, float(np.max(np.abs(vals), initial=0.0)))
    if np.max(np.abs(vals.imag), initial=0.0) > IMAG_TOL * ref:
        raise NumericalAsymmetryError(
            f"consistency matrix has eigenvalues with imaginary part up to "
            f"{np.max(np.abs(vals.imag)):.3g}"
        )
    vecs = vecs.real
    if model.r_a is not None:
        norms = np.linalg.norm(model.r_a @ vecs, axis=0)
    else:
        norms = np.linalg.norm(vecs, axis=0)
    vecs = vecs / norms
    values, vecs = canonical_eigen_order(vals.real, vecs)
    return np.clip(values, 0.0, 1.0), vecs


def koopman_eigenfunctions(lifted: LiftedData) -> EigenfunctionSet:
    """Eigendecomposition of the forward EDMD matrix on ``lifted``.

    The trivial eigenfunction is the one best correlated with constants
    (correlation above 0.99 required); the leading non-trivial one has the
    eigenvalue closest to 1 among the rest.
    """
    model = fit_edmd(lifted)
    vals, vecs = np.linalg.eig(model.k_f)
    evals = lifted.a @ vecs
    norms = np.linalg.norm(evals, axis=0)
    vecs = vecs / norms
    evals = evals / norms
    residuals = np.linalg.norm(evals * vals - lifted.b @ vecs, axis=0)

    notes = []
    cond = np.linalg.cond(vecs)
    if not cond < DEFECTIVE_COND:
        msg = f"forward EDMD matrix is nearly defective (eigenvector condition {cond:.3g})"
        notes.append(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)

    ones = np.ones(lifted.n_samples) / np.sqrt(lifted.n_samples)
    corr = np.abs(ones @ evals)
    trivial = int(np.argmax(corr)) if corr.size else None
    if trivial is not None and not corr[trivial] > TRIVIAL_CORRELATION:
        trivial = None
    candidates = [i for i in range(vals.size) if i != trivial]
    leading = min(candidates, key=lambda i: abs(vals[i] - 1.0)) if candidates else None
    return EigenfunctionSet(vals, vecs, lifted.coeffs, residuals, trivial, leading, notes)


@dataclass(frozen=True)
class GridSpec:
    """Rectangular ``nx`` by ``ny`` grid over ``(x1min, x1max, x2min, x2max)``."""

    nx: int
    ny: int
    bounds: tuple = (-2.0, 2.0, -2.0, 2.0)

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise InvalidInputError("grid needs at least one node per axis")
        if not np.all(np.isfinite(self.bounds)) or len(self.bounds) != 4:
            raise InvalidInputError("grid bounds must be four finite numbers")

    @classmethod
    def parse(cls, grid: str, box: str | None = None) -> "GridSpec":
        nx, ny = (int(v) for v in grid.lower().split("x"))
        bounds = tuple(float(v) for v in box.split(",")) if box else (-2.0, 2.0, -2.0, 2.0)
        return cls(nx, ny, bounds)

    def nodes(self):
        x1 = np.linspace(self.bounds[0], self.bounds[1], self.nx)
        x2 = np.linspace(self.bounds[2], self.bounds[3], self.ny)
        g1, g2 = np.meshgrid(x1, x2)
        return g1, g2


def evaluate_eigenfunction_on_grid(ef: EigenfunctionSet, which: int, dictionary: Dictionary, grid: GridSpec):
    """Values of eigenfunction ``which`` on the grid, shape ``(ny, nx)``, complex."""
    if not 0 <= which < ef.eigenvalues.size:
        raise InvalidInputError(f"eigenfunction index {which} out of range")
    g1, g2 = grid.nodes()
    pts = np.column_stack([g1.ravel(), g2.ravel()])
    coeff = ef.basis_coeffs @ ef.coeff_vectors[:, which]
    vals = eval_dictionary(dictionary, pts) @ coeff
    return vals.reshape(g1.shape)


def write_grid_csv(path, grid: GridSpec, values) -> Path:
    """CSV with header ``x1,x2,re,im``, x1 varying fastest, 17 significant digits."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    g1, g2 = grid.nodes()
    values = np.asarray(values)
    table = np.column_stack([g1.ravel(), g2.ravel(), values.real.ravel(), np.imag(values).ravel()])
    np.savetxt(path, table, delimiter=",", header="x1,x2,re,im", comments="", fmt="%.17g")
    return path


def read_grid_csv(path):
    return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
