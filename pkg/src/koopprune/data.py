"""Damped Duffing snapshots, observable dictionaries and their persistence.

Random numbers come from numpy's PCG64 generator. Each trajectory draws its
initial condition from its own child of ``SeedSequence(seed)``, so datasets
are reproducible and independent of how trajectories are batched.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidInputError

DATA_FMT = "%.17g"


# --------------------------------------------------------------------------
# Duffing system
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class DuffingParams:
    dt: float = 0.01
    damping: float = 0.5
    box: tuple = (-2.0, 2.0, -2.0, 2.0)

    def __post_init__(self):
        if not self.dt > 0:
            raise InvalidInputError("dt must be positive")


def duffing_step(x, p: DuffingParams = DuffingParams()):
    """One explicit step of the damped Duffing map.

    ``x`` may be a single state of length 2 or an array of states with the
    two coordinates on the last axis.
    """
    x = np.asarray(x, dtype=float)
    x1 = x[..., 0]
    x2 = x[..., 1]
    # x1*x1*x1 rather than x1**3 keeps scalar and array paths bit-identical.
    y1 = x1 + p.dt * x2
    y2 = x2 + p.dt * (-p.damping * x2 + x1 - x1 * x1 * x1)
    return np.stack([y1, y2], axis=-1)


@dataclass
class TrajectoryDataset:
    """Snapshot pairs ``x -> x_plus`` stored row-wise, trajectory by trajectory."""

    x: np.ndarray
    x_plus: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.x = np.atleast_2d(np.asarray(self.x, dtype=float))
        self.x_plus = np.atleast_2d(np.asarray(self.x_plus, dtype=float))
        if self.x.shape != self.x_plus.shape:
            raise InvalidInputError(
                f"state arrays differ in shape: {self.x.shape} vs {self.x_plus.shape}"
            )
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.x_plus))):
            raise InvalidInputError("dataset contains non-finite values")

    @property
    def n_samples(self) -> int:
        return self.x.shape[0]

    @property
    def dim_state(self) -> int:
        return self.x.shape[1]

    def save(self, directory) -> Path:
        """Write ``meta.json`` and ``data.csv`` into ``directory``."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        n = self.dim_state
        meta = dict(self.meta)
        meta.update(n=n, N=self.n_samples)
        meta.setdefault("traj_boundaries", [0, self.n_samples])
        (directory / "meta.json").write_text(json.dumps(meta, indent=2))
        header = ",".join([f"x{i + 1}" for i in range(n)] + [f"xp{i + 1}" for i in range(n)])
        np.savetxt(
            directory / "data.csv",
            np.hstack([self.x, self.x_plus]),
            delimiter=",",
            header=header,
            comments="",
            fmt=DATA_FMT,
        )
        return directory

    @classmethod
    def load(cls, directory) -> "TrajectoryDataset":
        directory = Path(directory)
        meta = json.loads((directory / "meta.json").read_text())
        path = directory / "data.csv"
        with open(path) as fh:
            header = fh.readline().strip().split(",")
            has_rows = bool(fh.readline().strip())
        n = len(header) // 2
        if has_rows:
            raw = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        else:
            raw = np.zeros((0, 2 * n))
        return cls(raw[:, :n], raw[:, n:], meta)


def simulate(p: DuffingParams, n_traj: int, steps: int, seed: int) -> TrajectoryDataset:
    """Sample ``n_traj`` uniform initial states in ``p.box`` and iterate ``steps`` times.

    Returns ``n_traj * steps`` snapshot pairs ordered trajectory by trajectory.
    """
    if n_traj < 1 or steps < 1:
        raise InvalidInputError("n_traj and steps must be at least 1")
    lo = np.array([p.box[0], p.box[2]])
    hi = np.array([p.box[1], p.box[3]])
    children = np.random.SeedSequence(seed).spawn(n_traj)
    x0 = np.array([np.random.default_rng(c).uniform(lo, hi) for c in children])

    states = np.empty((n_traj, steps + 1, 2))
    states[:, 0] = x0
    for k in range(steps):
        states[:, k + 1] = duffing_step(states[:, k], p)

    x = states[:, :-1].reshape(-1, 2)
    x_plus = states[:, 1:].reshape(-1, 2)
    meta = {
        "system_id": "duffing",
        "dt": p.dt,
        "damping": p.damping,
        "box": list(p.box),
        "n_traj": n_traj,
        "steps": steps,
        "seed": seed,
        "traj_boundaries": [i * steps for i in range(n_traj + 1)],
    }
    return TrajectoryDataset(x, x_plus, meta)


# --------------------------------------------------------------------------
# dictionaries
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class DictEntry:
    kind: str
    exponents: tuple | None = None
    center: tuple | None = None

    def __post_init__(self):
        if self.kind not in ("constant", "monomial", "tps_rbf"):
            raise InvalidInputError(f"unknown dictionary entry kind {self.kind!r}")
        if self.kind == "monomial" and self.exponents is None:
            raise InvalidInputError("monomial entry needs exponents")
        if self.kind == "tps_rbf" and self.center is None:
            raise InvalidInputError("tps_rbf entry needs a center")
        if self.exponents is not None:
            object.__setattr__(self, "exponents", tuple(int(e) for e in self.exponents))
        if self.center is not None:
            object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    def to_json(self) -> dict:
        out = {"kind": self.kind}
        if self.kind == "monomial":
            out["exponents"] = list(self.exponents)
        elif self.kind == "tps_rbf":
            out["center"] = list(self.center)
        return out

    @classmethod
    def from_json(cls, obj) -> "DictEntry":
        return cls(obj["kind"], obj.get("exponents"), obj.get("center"))

    def label(self) -> str:
        if self.kind == "constant":
            return "1"
        if self.kind == "monomial":
            parts = [f"x{i + 1}" + (f"^{e}" if e > 1 else "") for i, e in enumerate(self.exponents) if e]
            return "*".join(parts) or "1"
        return "tps(" + ",".join(f"{c:.4g}" for c in self.center) + ")"


@dataclass(frozen=True)
class Dictionary:
    entries: tuple
    dim_state: int

    def __post_init__(self):
        entries = tuple(self.entries)
        if not entries:
            raise InvalidInputError("a dictionary needs at least one entry")
        if len(set(entries)) != len(entries):
            raise InvalidInputError("dictionary contains duplicated entries")
        for e in entries:
            width = e.exponents if e.kind == "monomial" else e.center if e.kind == "tps_rbf" else None
            if width is not None and len(width) != self.dim_state:
                raise InvalidInputError(f"entry {e.label()} does not match state dimension {self.dim_state}")
        object.__setattr__(self, "entries", entries)

    def __len__(self):
        return len(self.entries)

    @property
    def has_constant(self) -> bool:
        return any(
            e.kind == "constant" or (e.kind == "monomial" and not any(e.exponents))
            for e in self.entries
        )

    def to_json(self) -> list:
        return [e.to_json() for e in self.entries]

    @classmethod
    def from_json(cls, obj, dim_state: int | None = None) -> "Dictionary":
        """Build from a list of entries (or ``{"dim_state", "entries"}``).

        The state dimension is read off the first monomial or RBF entry; a
        dictionary of constants only takes ``dim_state`` (default 1).
        """
        if isinstance(obj, dict):
            dim_state = obj.get("dim_state", dim_state)
            obj = obj["entries"]
        entries = [DictEntry.from_json(e) for e in obj]
        dim = next((len(e.exponents or e.center) for e in entries if e.kind != "constant"), None)
        if dim is None:
            dim = dim_state or 1
        elif dim_state is not None and dim != dim_state:
            raise InvalidInputError(f"dictionary entries have dimension {dim}, expected {dim_state}")
        return cls(tuple(entries), dim)

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_json(), indent=1))
        return path

    @classmethod
    def load(cls, path, dim_state: int | None = None) -> "Dictionary":
        return cls.from_json(json.loads(Path(path).read_text()), dim_state)


def monomial_exponents(n: int, degree: int):
    """Exponent tuples of total degree 1..degree in graded lexicographic order."""
    out = []
    for deg in range(1, degree + 1):
        combos = [c for c in itertools.product(range(deg, -1, -1), repeat=n) if sum(c) == deg]
        out.extend(sorted(combos, reverse=True))
    return out


def kmeans_centers(points, n_centers: int, seed: int, max_iter: int = 50):
    """Cluster centres by Lloyd iterations from a k-means++ start.

    Backed by scikit-learn with a single seeded initialisation, so the
    result is a pure function of ``(points, n_centers, seed, max_iter)``.
    """
    from sklearn.cluster import KMeans

    points = np.asarray(points, dtype=float)
    if n_centers > points.shape[0]:
        raise InvalidInputError(f"{n_centers} centers requested from {points.shape[0]} points")
    km = KMeans(
        n_clusters=n_centers,
        init="k-means++",
        n_init=1,
        max_iter=max_iter,
        tol=1e-9,
        algorithm="lloyd",
        random_state=seed,
    )
    km.fit(points)
    return km.cluster_centers_


def build_dictionary(
    dataset: TrajectoryDataset,
    poly_degree: int = 1,
    n_centers: int = 0,
    kmeans_seed: int = 0,
    kmeans_iters: int = 50,
) -> Dictionary:
    """Constant, monomials up to ``poly_degree`` (graded lex), then TPS RBFs at k-means centres."""
    n = dataset.dim_state
    entries = [DictEntry("constant")]
    entries += [DictEntry("monomial", exponents=e) for e in monomial_exponents(n, poly_degree)]
    if n_centers:
        centers = kmeans_centers(dataset.x, n_centers, kmeans_seed, kmeans_iters)
        entries += [DictEntry("tps_rbf", center=tuple(c)) for c in centers]
    expected = math.comb(poly_degree + n, n) + n_centers
    assert len(entries) == expected
    return Dictionary(tuple(entries), n)


def _tps(points, centers, chunk=8192):
    """Thin-plate spline ``r^2 log r`` with value 0 at ``r = 0``."""
    out = np.empty((points.shape[0], centers.shape[0]))
    for start in range(0, points.shape[0], chunk):
        block = points[start:start + chunk]
        r2 = np.zeros((block.shape[0], centers.shape[0]))
        for k in range(points.shape[1]):
            diff = block[:, k, None] - centers[None, :, k]
            r2 += diff * diff
        with np.errstate(divide="ignore", invalid="ignore"):
            val = 0.5 * r2 * np.log(r2)
        val[r2 == 0] = 0.0
        out[start:start + chunk] = val
    return out


def eval_dictionary(d: Dictionary, points) -> np.ndarray:
    """Evaluate every entry of ``d`` at each row of ``points`` (M x s)."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[1] != d.dim_state:
        raise InvalidInputError(f"points have {points.shape[1]} coordinates, dictionary expects {d.dim_state}")
    out = np.empty((points.shape[0], len(d)))
    rbf_cols = [j for j, e in enumerate(d.entries) if e.kind == "tps_rbf"]
    for j, e in enumerate(d.entries):
        if e.kind == "constant":
            out[:, j] = 1.0
        elif e.kind == "monomial":
            col = np.ones(points.shape[0])
            # Overflow shows up as inf and is reported by the caller.
            with np.errstate(over="ignore", invalid="ignore"):
                for k, p in enumerate(e.exponents):
                    for _ in range(p):
                        col = col * points[:, k]
            out[:, j] = col
    if rbf_cols:
        centers = np.array([d.entries[j].center for j in rbf_cols])
        out[:, rbf_cols] = _tps(points, centers)
    return out
