"""Pruning drivers: naive SPV, rank-one SPV and RFB-EDMD.

All three repeatedly remove the direction of the current subspace whose image
under the Koopman operator leaks furthest out of it, until the invariance
proximity drops below ``epsilon``.

The rank-one state never touches the ``N`` sample rows between full
recomputations. It keeps the evaluations ``basis`` (N x r) and
``image_basis`` (N x r) fixed and updates small transforms instead:

    u_eval = basis @ frame                  principal vectors of S
    K u    = image_basis @ image_frame.q @ image_frame.r

so one pruning step costs O(r d^2) with r the dimension at the last full
recomputation.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.linalg import solve_triangular

from .edmd import LiftedData, consistency_eigendecomposition, fit_edmd
from .eigupdate import (
    DiagPlusRankOne,
    ThinQr,
    incremental_qr_update,
    orthonormality_residual,
    qr_positive,
    reorthonormalize_with_factor,
    secular_eigen,
)
from .errors import (
    ConvergenceError,
    InvalidInputError,
    KoopPruneError,
    NumericalDriftError,
    PruningError,
    RankDeficiencyError,
)
from .geometry import principal_parts

log = logging.getLogger(__name__)

METHODS = ("spv-naive", "spv-rank1", "rfb-edmd")
DRIFT_TOL = 1e-8


@dataclass
class PrincipalState:
    """Principal vectors of S, QR of their images and the principal sines.

    Coordinates (``coeff_base``, ``u_coeffs``) refer to the columns of
    ``lifted``.
    """

    lifted: LiftedData
    basis: np.ndarray
    coeff_base: np.ndarray
    image_basis: np.ndarray
    cross: np.ndarray
    frame: np.ndarray
    image_frame: ThinQr
    sines: np.ndarray
    steps_since_full: int = 0

    @property
    def dim(self) -> int:
        return self.sines.size

    @property
    def u_eval(self) -> np.ndarray:
        return self.basis @ self.frame

    @property
    def u_coeffs(self) -> np.ndarray:
        return self.coeff_base @ self.frame

    @property
    def image_qr(self) -> ThinQr:
        return ThinQr(self.image_basis @ self.image_frame.q, self.image_frame.r)

    @property
    def delta(self) -> float:
        return float(self.sines[-1]) if self.sines.size else 0.0

    def drift(self) -> float:
        return max(orthonormality_residual(self.frame), orthonormality_residual(self.image_frame.q))


def _state_from_coeffs(lifted: LiftedData, coeffs) -> PrincipalState:
    """Full principal decomposition of ``span(lifted.a @ coeffs)`` and its image."""
    a_sub = lifted.a @ coeffs
    b_sub = lifted.b @ coeffs
    parts = principal_parts(a_sub, b_sub, ("subspace", "image subspace"))
    left_coeffs = solve_triangular(parts["ru"], parts["y"])
    # K u_i = b_sub @ left_coeffs = qv @ (rv @ left_coeffs); factor the small part.
    image_frame = ThinQr(*qr_positive(parts["rv"] @ left_coeffs))
    d = left_coeffs.shape[1]
    return PrincipalState(
        lifted=lifted,
        basis=parts["left"],
        coeff_base=coeffs @ left_coeffs,
        image_basis=parts["qv"],
        cross=parts["y"].T @ parts["cross"],
        frame=np.eye(d),
        image_frame=image_frame,
        sines=parts["sines"],
    )


def init_state(lifted: LiftedData) -> PrincipalState:
    """Principal state of the full lifted subspace, angles ascending."""
    return _state_from_coeffs(lifted, np.eye(lifted.dim))


def prune_step_naive(state: PrincipalState) -> PrincipalState:
    """Drop the largest-angle principal vector and recompute everything from scratch."""
    if state.dim < 2:
        raise InvalidInputError("cannot prune a subspace of dimension below 2")
    return _state_from_coeffs(state.lifted, state.u_coeffs[:, :-1])


def prune_step_rank1(state: PrincipalState) -> PrincipalState:
    """Drop the largest-angle principal vector by a rank-one eigen-update.

    The new squared sines are the eigenvalues of
    ``diag(sines[:-1]**2) + b b^T`` where ``b`` holds the inner products of
    the retained principal vectors with the unit image direction removed
    along with the dropped vector.

    Raises
    ------
    NumericalDriftError
        If an updated squared sine leaves [-1e-8, 1 + 1e-8].
    """
    d = state.dim
    if d < 2:
        raise InvalidInputError("cannot prune a subspace of dimension below 2")
    omega = state.image_frame.q[:, -1]
    b = state.frame.T @ (state.cross @ omega)
    pairs = secular_eigen(DiagPlusRankOne(state.sines[:-1] ** 2, b[:-1]))
    vals = pairs.values
    if vals[0] < -DRIFT_TOL or vals[-1] > 1 + DRIFT_TOL:
        raise NumericalDriftError(
            f"updated squared sines left [0, 1]: range [{vals[0]:.3g}, {vals[-1]:.3g}]"
        )
    e = pairs.vectors
    t = np.vstack([e, np.zeros((1, d - 1))])
    return replace(
        state,
        frame=state.frame[:, :-1] @ e,
        image_frame=incremental_qr_update(state.image_frame, t),
        sines=np.sqrt(np.clip(vals, 0.0, 1.0)),
        steps_since_full=state.steps_since_full + 1,
    )


def reorthonormalize_state(state: PrincipalState) -> PrincipalState:
    """Repair drift in the small transforms while keeping ``K u = W R`` consistent."""
    frame, rf = reorthonormalize_with_factor(state.frame)
    # u' = u rf^{-1}, so K u' = W (R rf^{-1}); the product stays upper triangular.
    r = solve_triangular(rf, state.image_frame.r.T, trans="T", lower=False).T
    q, rq = reorthonormalize_with_factor(state.image_frame.q)
    return replace(state, frame=frame, image_frame=ThinQr(q, rq @ r))


# --------------------------------------------------------------------------
# RFB-EDMD
# --------------------------------------------------------------------------


def _drop_direction(lifted: LiftedData, v) -> LiftedData:
    """Remove the function ``a @ v`` from ``span(a)``.

    The complement is taken in the empirical inner product: ``v`` is mapped
    to orthonormal coordinates by the QR factor of ``a``; the returned
    subspace has orthonormal evaluations.
    """
    qa, ra = qr_positive(lifted.a)
    y = ra @ v
    y = y / np.linalg.norm(y)
    full, _ = np.linalg.qr(y[:, None], mode="complete")
    comp = full[:, 1:]
    coeffs = solve_triangular(ra, comp)
    return LiftedData(qa @ comp, lifted.b @ coeffs, lifted.dictionary, lifted.coeffs @ coeffs)


def prune_step_rfb(lifted_current: LiftedData) -> LiftedData:
    """One RFB-EDMD step: drop the top eigenvector of the consistency matrix."""
    if lifted_current.dim < 2:
        raise InvalidInputError("cannot prune a subspace of dimension below 2")
    _, vecs = consistency_eigendecomposition(fit_edmd(lifted_current))
    return _drop_direction(lifted_current, vecs[:, -1])


# --------------------------------------------------------------------------
# driver
# --------------------------------------------------------------------------


@dataclass
class PruneConfig:
    epsilon: float = 0.01
    method: str = "spv-rank1"
    reorth_threshold: float = 1e-8
    full_recompute_period: int = 50
    min_dim: int = 1

    def __post_init__(self):
        if not 0 <= self.epsilon < 1:
            raise InvalidInputError("epsilon must lie in [0, 1)")
        if self.method not in METHODS:
            raise InvalidInputError(f"method must be one of {', '.join(METHODS)}")
        if self.min_dim < 1:
            raise InvalidInputError("min_dim must be at least 1")
        if self.full_recompute_period < 1:
            raise InvalidInputError("full_recompute_period must be at least 1")


@dataclass
class IterationRecord:
    dim: int
    sin_theta_max: float
    wall_time_s: float
    recompute_kind: str


@dataclass
class PruneReport:
    method: str
    epsilon: float
    initial_dim: int
    final_dim: int = 0
    succeeded: bool = False
    final_delta: float = float("nan")
    iterations: list = field(default_factory=list)
    final_coeffs: np.ndarray | None = None
    error: str | None = None

    def to_json(self) -> dict:
        out = {
            "method": self.method,
            "epsilon": self.epsilon,
            "initial_dim": self.initial_dim,
            "final_dim": self.final_dim,
            "succeeded": self.succeeded,
            "final_delta": self.final_delta,
            "iterations": [asdict(it) for it in self.iterations],
            "final_coeffs": None if self.final_coeffs is None else np.asarray(self.final_coeffs).tolist(),
        }
        if self.error:
            out["error"] = self.error
        return out

    @classmethod
    def from_json(cls, obj) -> "PruneReport":
        its = [IterationRecord(**it) for it in obj["iterations"]]
        coeffs = obj.get("final_coeffs")
        return cls(
            obj["method"], obj["epsilon"], obj["initial_dim"], obj["final_dim"],
            obj["succeeded"], obj["final_delta"], its,
            None if coeffs is None else np.asarray(coeffs, dtype=float), obj.get("error"),
        )

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_json(), indent=1))
        return path

    @classmethod
    def load(cls, path) -> "PruneReport":
        return cls.from_json(json.loads(Path(path).read_text()))

    @property
    def dims(self):
        return [it.dim for it in self.iterations]

    @property
    def deltas(self):
        return np.array([it.sin_theta_max for it in self.iterations])


class _SpvRunner:
    def __init__(self, lifted, config):
        self.lifted = lifted
        self.config = config
        self.state = None

    def start(self):
        self.state = init_state(self.lifted)
        return "full"

    def delta(self):
        return self.state.delta

    def dim(self):
        return self.state.dim

    def coeffs(self):
        return self.lifted.coeffs @ self.state.u_coeffs

    def step(self):
        cfg = self.config
        if cfg.method == "spv-naive":
            self.state = prune_step_naive(self.state)
            return "full"
        if self.state.steps_since_full + 1 >= cfg.full_recompute_period:
            self.state = prune_step_naive(self.state)
            return "full"
        try:
            new = prune_step_rank1(self.state)
            if new.drift() > cfg.reorth_threshold:
                log.debug("re-orthonormalising at dim %d (drift %.3g)", new.dim, new.drift())
                new = reorthonormalize_state(new)
        except (NumericalDriftError, ConvergenceError, RankDeficiencyError) as exc:
            log.warning("rank-one step failed at dim %d (%s); recomputing", self.state.dim, exc)
            self.state = prune_step_naive(self.state)
            return "full"
        self.state = new
        return "rank1"


def orthonormal_relift(lifted: LiftedData) -> LiftedData:
    """Same subspace, re-expressed in a basis with orthonormal evaluations.

    The consistency matrix changes only by a similarity transform, so its
    spectrum and the functions its eigenvectors define are unchanged.
    """
    qa, ra = qr_positive(lifted.a)
    rinv = solve_triangular(ra, np.eye(lifted.dim))
    return LiftedData(qa, lifted.b @ rinv, lifted.dictionary, lifted.coeffs @ rinv)


class _RfbRunner:
    def __init__(self, lifted, config):
        self.current = orthonormal_relift(lifted)
        self.values = None
        self.vectors = None

    def _analyse(self):
        self.values, self.vectors = consistency_eigendecomposition(fit_edmd(self.current))

    def start(self):
        self._analyse()
        return "full"

    def delta(self):
        return float(np.sqrt(self.values[-1]))

    def dim(self):
        return self.current.dim

    def coeffs(self):
        return self.current.coeffs

    def step(self):
        self.current = _drop_direction(self.current, self.vectors[:, -1])
        self._analyse()
        return "full"


def run_pruning(lifted: LiftedData, config: PruneConfig) -> PruneReport:
    """Prune ``lifted`` until the invariance proximity is at most ``config.epsilon``.

    Succeeds with the first subspace meeting the tolerance; fails once the
    next subspace would fall below ``config.min_dim``. The report records one
    entry per subspace examined, the initial one included.

    Raises
    ------
    PruningError
        When a step fails even after a full recomputation; the partial
        report is attached.
    """
    runner = (_RfbRunner if config.method == "rfb-edmd" else _SpvRunner)(lifted, config)
    report = PruneReport(config.method, config.epsilon, lifted.dim)

    def record(kind, t0):
        report.iterations.append(
            IterationRecord(runner.dim(), runner.delta(), time.perf_counter() - t0, kind)
        )

    t0 = time.perf_counter()
    try:
        kind = runner.start()
    except KoopPruneError as exc:
        report.error = str(exc)
        raise PruningError(f"initial decomposition failed: {exc}", report) from exc
    record(kind, t0)

    while True:
        delta = runner.delta()
        if delta <= config.epsilon:
            report.succeeded = True
            break
        if runner.dim() - 1 < config.min_dim:
            break
        t0 = time.perf_counter()
        try:
            kind = runner.step()
        except KoopPruneError as exc:
            report.final_dim = runner.dim()
            report.final_delta = delta
            report.final_coeffs = runner.coeffs()
            report.error = str(exc)
            raise PruningError(f"pruning aborted at dim {runner.dim()}: {exc}", report) from exc
        record(kind, t0)

    report.final_dim = runner.dim()
    report.final_delta = runner.delta()
    report.final_coeffs = runner.coeffs()
    return report


def tune_epsilon(deltas, dims, target_dim):
    """Smallest tolerance that stops a run exactly at ``target_dim``, or None.

    ``deltas``/``dims`` come from a run continued past the target. The run
    stops at the first dimension whose proximity is within the tolerance, so
    one exists only if the proximity at the target is below all earlier ones.
    """
    deltas = list(deltas)
    dims = list(dims)
    if target_dim not in dims:
        return None
    k = dims.index(target_dim)
    if k and min(deltas[:k]) <= deltas[k]:
        return None
    return float(deltas[k])
