"""Embedded submanifolds used by the solvers.

Three Riemannian submanifolds of a Euclidean space, all carrying the metric
inherited from the ambient dot product:

* ``Euclidean(n)`` — the ambient space itself (trivial geometry),
* ``Sphere(n)`` — unit vectors in R^n,
* ``Oblique(n, p)`` — n-by-p matrices with unit-norm rows (a product of n
  spheres in R^p), stored row-major as a flat ambient vector.

Points and tangent vectors are ambient coordinate arrays tagged with their
manifold (and, for tangents, their base point); there are no intrinsic
charts. Retractions are the metric projections (addition, normalization,
row-wise normalization), which are second-order retractions, so pullback
Hessians at the origin coincide with Riemannian Hessians.
"""

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .errors import ContractViolationError
from .slopes import fit_loglog_slope

#: default feasibility / tangency tolerance
TAU_FEAS = 1e-9

#: projected ambient basis vectors shorter than this are dropped when
#: building an orthonormal tangent basis
BASIS_DROP_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class Point:
    """A feasible point, in ambient coordinates."""

    coords: np.ndarray
    manifold: "Manifold"

    def same_as(self, other):
        return self.manifold is other.manifold and (
            self.coords is other.coords or np.array_equal(self.coords, other.coords)
        )


@dataclass(frozen=True, eq=False)
class TangentVector:
    """A tangent vector at ``base``, in ambient coordinates.

    Tangent vectors at a common base point form a linear space; the usual
    operators are provided and enforce matching base points.
    """

    coords: np.ndarray
    base: Point

    @property
    def manifold(self):
        return self.base.manifold

    def norm(self):
        return float(np.linalg.norm(self.coords))

    def _check_same_base(self, other):
        if not self.base.same_as(other.base):
            raise ContractViolationError("tangent vectors have different base points")

    def __add__(self, other):
        self._check_same_base(other)
        return TangentVector(self.coords + other.coords, self.base)

    def __sub__(self, other):
        self._check_same_base(other)
        return TangentVector(self.coords - other.coords, self.base)

    def __neg__(self):
        return TangentVector(-self.coords, self.base)

    def __mul__(self, scalar):
        return TangentVector(self.coords * float(scalar), self.base)

    __rmul__ = __mul__


@dataclass(frozen=True)
class TangentBasis:
    """An orthonormal basis of the tangent space at ``base``.

    ``matrix`` holds the basis vectors as rows (dim x ambient_dim), so
    coordinates of a tangent vector are ``matrix @ v.coords`` and the
    reconstruction is ``matrix.T @ coeffs``.
    """

    base: Point
    matrix: np.ndarray = field(repr=False)

    @property
    def vectors(self):
        return [TangentVector(row, self.base) for row in self.matrix]

    def __len__(self):
        return self.matrix.shape[0]


class RetractionOrderReport(NamedTuple):
    """Fitted log-log slopes of the retraction deviation curves.

    ``slope1``: order of ||Retr_x(t eta) - x - t eta||, expected >= 2.
    ``slope2``: order of the deviation from the exact geodesic, expected
    >= 3 for second-order retractions; None when no closed-form geodesic
    is available for comparison.
    """

    slope1: float
    slope2: Optional[float]


class Manifold:
    """Base class: metric, projector, retraction and tangent bases."""

    name = "manifold"
    dim = 0
    ambient_dim = 0

    def __init__(self, feas_tol=TAU_FEAS):
        self.feas_tol = float(feas_tol)

    def __repr__(self):
        return self.name

    # -- feasibility ------------------------------------------------------

    def feasibility_defect(self, coords):
        """Scalar measure of constraint violation (0 when on the manifold)."""
        raise NotImplementedError

    def tangency_defect(self, x, coords):
        """Scalar measure of how far ``coords`` is from T_x M."""
        raise NotImplementedError

    def point(self, coords, validate=True):
        """Wrap ambient coordinates as a Point, checking feasibility."""
        coords = np.asarray(coords, dtype=float)
        if coords.shape != (self.ambient_dim,):
            raise ContractViolationError(
                f"expected ambient vector of length {self.ambient_dim}, "
                f"got shape {coords.shape}"
            )
        if validate:
            defect = self.feasibility_defect(coords)
            if not defect <= self.feas_tol:
                raise ContractViolationError(
                    f"point is infeasible on {self.name}: defect {defect:.3e}"
                )
        return Point(coords, self)

    def tangent(self, x, coords, validate=True):
        """Wrap ambient coordinates as a tangent vector at x."""
        coords = np.asarray(coords, dtype=float)
        if validate:
            nrm = np.linalg.norm(coords)
            defect = self.tangency_defect(x, coords)
            if not defect <= self.feas_tol * max(1.0, nrm):
                raise ContractViolationError(
                    f"vector is not tangent at the given point: defect {defect:.3e}"
                )
        return TangentVector(coords, x)

    def zero_tangent(self, x):
        return TangentVector(np.zeros(self.ambient_dim), x)

    # -- metric and maps --------------------------------------------------

    def inner(self, x, u, v):
        """Riemannian metric <u, v> at x (the ambient dot product).

        Both vectors must be based at x.
        """
        if not (u.base.same_as(x) and v.base.same_as(x)):
            raise ContractViolationError("inner() called with mismatched base points")
        return float(u.coords @ v.coords)

    def project(self, x, v):
        """Orthogonally project an ambient vector onto T_x M."""
        self._require_feasible(x)
        return TangentVector(self._project_array(x.coords, np.asarray(v, dtype=float)), x)

    def retract(self, x, eta):
        """Move from x along the tangent vector eta, staying on the manifold.

        retract(x, 0) == x exactly; the differential at 0 is the identity,
        and for the shipped manifolds the map is a second-order retraction
        (metric projection).
        """
        if not eta.base.same_as(x):
            raise ContractViolationError("retract() called with mismatched base point")
        return Point(self._retract_array(x.coords, eta.coords), self)

    def tangent_basis(self, x):
        """Deterministic orthonormal basis of T_x M.

        Built by projecting the ambient coordinate basis and running
        modified Gram-Schmidt in ambient index order, dropping directions
        whose post-projection residual is shorter than ``BASIS_DROP_TOL``.
        """
        self._require_feasible(x)
        rows = []
        for i in range(self.ambient_dim):
            e = np.zeros(self.ambient_dim)
            e[i] = 1.0
            v = self._project_array(x.coords, e)
            for _ in range(2):  # second pass keeps the Gram matrix at ~1e-15
                for u in rows:
                    v = v - (u @ v) * u
            nrm = np.linalg.norm(v)
            if nrm > BASIS_DROP_TOL:
                rows.append(v / nrm)
        if len(rows) != self.dim:
            raise ContractViolationError(
                f"tangent basis construction produced {len(rows)} vectors, "
                f"expected {self.dim}"
            )
        return TangentBasis(x, np.array(rows))

    # -- randomization ----------------------------------------------------

    def random_point(self, rng):
        raise NotImplementedError

    def random_tangent(self, x, rng, norm=1.0):
        """Random tangent vector at x with the requested norm."""
        while True:
            v = self._project_array(x.coords, rng.standard_normal(self.ambient_dim))
            nrm = np.linalg.norm(v)
            if nrm > 1e-12:
                return TangentVector(v * (norm / nrm), x)

    # -- curvature hooks (used by Problem) --------------------------------

    def ehess_to_rhess(self, x, egrad, ehess_eta, eta_coords):
        """Turn an ambient Hessian-vector product into the Riemannian one.

        For a Riemannian submanifold this is the tangent projection of the
        ambient product plus the Weingarten (normal curvature) correction.
        """
        raise NotImplementedError

    def geodesic(self, x, eta, t):
        """Exact geodesic point, where a closed form exists; else None.

        Only exposed where needed for retraction-order diagnostics.
        """
        return None

    # -- diagnostics -------------------------------------------------------

    def check_retraction_orders(self, x, eta, num=20):
        """Measure the agreement orders of the retraction at (x, eta).

        eta must be a unit tangent vector. Returns the fitted log-log
        slopes of t -> ||Retr_x(t eta) - x - t eta|| (first-order
        agreement, expected >= 2) and, when a closed-form geodesic is
        available, of t -> ||Retr_x(t eta) - Exp_x(t eta)|| (second-order
        agreement, expected >= 3). Exact agreement reports an inf slope.
        """
        if abs(eta.norm() - 1.0) > 1e-12:
            raise ContractViolationError("check_retraction_orders needs a unit direction")
        ts = 0.5 ** np.arange(1, num + 1)
        err1, err2 = [], []
        has_geo = self.geodesic(x, eta, ts[0]) is not None
        for t in ts:
            y = self._retract_array(x.coords, t * eta.coords)
            err1.append(np.linalg.norm(y - x.coords - t * eta.coords))
            if has_geo:
                err2.append(np.linalg.norm(y - self.geodesic(x, eta, t)))
        slope1 = fit_loglog_slope(ts, err1)
        slope2 = fit_loglog_slope(ts, err2) if has_geo else None
        return RetractionOrderReport(slope1, slope2)

    # -- internals ---------------------------------------------------------

    def _require_feasible(self, x):
        if x.manifold is not self:
            raise ContractViolationError("point belongs to a different manifold")
        defect = self.feasibility_defect(x.coords)
        if not defect <= self.feas_tol:
            raise ContractViolationError(
                f"point is infeasible on {self.name}: defect {defect:.3e}"
            )

    def _project_array(self, x_coords, v):
        raise NotImplementedError

    def _retract_array(self, x_coords, eta_coords):
        raise NotImplementedError


class Euclidean(Manifold):
    """R^n with the identity projector and the addition retraction."""

    def __init__(self, n, feas_tol=TAU_FEAS):
        super().__init__(feas_tol)
        self.n = int(n)
        self.dim = self.n
        self.ambient_dim = self.n
        self.name = f"Euclidean({self.n})"

    def feasibility_defect(self, coords):
        return 0.0

    def tangency_defect(self, x, coords):
        return 0.0

    def random_point(self, rng):
        return Point(rng.standard_normal(self.n), self)

    def ehess_to_rhess(self, x, egrad, ehess_eta, eta_coords):
        return np.asarray(ehess_eta, dtype=float)

    def geodesic(self, x, eta, t):
        return x.coords + t * eta.coords

    def _project_array(self, x_coords, v):
        return v.copy()

    def _retract_array(self, x_coords, eta_coords):
        return x_coords + eta_coords


class Sphere(Manifold):
    """Unit sphere in R^n, with the normalization retraction."""

    def __init__(self, n, feas_tol=TAU_FEAS):
        if n < 2:
            raise ContractViolationError("Sphere needs ambient dimension >= 2")
        super().__init__(feas_tol)
        self.n = int(n)
        self.dim = self.n - 1
        self.ambient_dim = self.n
        self.name = f"Sphere({self.n})"

    def feasibility_defect(self, coords):
        return abs(np.linalg.norm(coords) - 1.0)

    def tangency_defect(self, x, coords):
        return abs(float(x.coords @ coords))

    def random_point(self, rng):
        v = rng.standard_normal(self.n)
        return Point(v / np.linalg.norm(v), self)

    def ehess_to_rhess(self, x, egrad, ehess_eta, eta_coords):
        correction = float(x.coords @ egrad)
        return self._project_array(x.coords, ehess_eta) - correction * eta_coords

    def geodesic(self, x, eta, t):
        # closed form for unit-speed directions only; kept out of the
        # public surface on purpose
        return np.cos(t) * x.coords + np.sin(t) * eta.coords

    def _project_array(self, x_coords, v):
        return v - float(x_coords @ v) * x_coords

    def _retract_array(self, x_coords, eta_coords):
        y = x_coords + eta_coords
        return y / np.linalg.norm(y)


class Oblique(Manifold):
    """Matrices in R^{n x p} with unit-norm rows (a product of n spheres).

    Stored flattened row-major, so ambient vectors have length n*p and
    row i occupies the slice [i*p, (i+1)*p).
    """

    def __init__(self, n_rows, p_cols, feas_tol=TAU_FEAS):
        if p_cols < 2:
            raise ContractViolationError("Oblique needs at least 2 columns")
        super().__init__(feas_tol)
        self.n_rows = int(n_rows)
        self.p_cols = int(p_cols)
        self.dim = self.n_rows * (self.p_cols - 1)
        self.ambient_dim = self.n_rows * self.p_cols
        self.name = f"Oblique({self.n_rows},{self.p_cols})"

    def as_matrix(self, coords):
        return np.asarray(coords).reshape(self.n_rows, self.p_cols)

    def from_matrix(self, mat):
        mat = np.asarray(mat, dtype=float)
        if mat.shape != (self.n_rows, self.p_cols):
            raise ContractViolationError(
                f"expected a {self.n_rows}x{self.p_cols} matrix, got {mat.shape}"
            )
        return mat.reshape(-1)

    def feasibility_defect(self, coords):
        row_norms = np.linalg.norm(self.as_matrix(coords), axis=1)
        return float(np.max(np.abs(row_norms - 1.0)))

    def tangency_defect(self, x, coords):
        X = self.as_matrix(x.coords)
        V = self.as_matrix(coords)
        return float(np.max(np.abs(np.sum(X * V, axis=1))))

    def random_point(self, rng):
        Y = rng.standard_normal((self.n_rows, self.p_cols))
        Y /= np.linalg.norm(Y, axis=1, keepdims=True)
        return Point(Y.reshape(-1), self)

    def ehess_to_rhess(self, x, egrad, ehess_eta, eta_coords):
        X = self.as_matrix(x.coords)
        G = self.as_matrix(egrad)
        correction = np.sum(X * G, axis=1, keepdims=True)
        proj = self._project_array(x.coords, ehess_eta)
        return proj - (correction * self.as_matrix(eta_coords)).reshape(-1)

    def _project_array(self, x_coords, v):
        X = self.as_matrix(x_coords)
        V = self.as_matrix(v)
        return (V - np.sum(X * V, axis=1, keepdims=True) * X).reshape(-1)

    def _retract_array(self, x_coords, eta_coords):
        Y = self.as_matrix(x_coords) + self.as_matrix(eta_coords)
        return (Y / np.linalg.norm(Y, axis=1, keepdims=True)).reshape(-1)
