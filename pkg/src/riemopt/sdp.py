"""Diagonally constrained SDPs via low-rank factorization.

The convex program

    minimize    Tr(C X)
    subject to  diag(X) = 1,  X positive semidefinite

(Max-Cut style relaxations after negating the Laplacian-derived matrix;
this module always *minimizes*) is attacked through the substitution
X = Y Y^T with Y an n-by-p matrix of unit rows, i.e. a point on the
oblique manifold. The smooth cost Tr(C Y Y^T) has ambient gradient 2 C Y
and Hessian-vector product 2 C Ydot.

Any feasible Y yields a computable bound on its own optimality gap: with
S = C - Diag(diag(C Y Y^T)), the vector lambda = diag(C Y Y^T)
+ lambda_min(S) * 1 is dual feasible (C - Diag(lambda) = S
- lambda_min(S) I >= 0) with dual value Tr(C Y Y^T) + n * lambda_min(S),
so the gap is at most n * max(0, -lambda_min(S)). For p > n, second-order
critical points make this gap at most (n/2) * eps_h.
"""

import json
import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ContractViolationError, FormatError
from .manifolds import Oblique
from .problems import Problem
from .rtr import RTRConfig, rtr_solve
from .traces import RTRStatus

BMSOL_SCHEMA = "bmsol-v1"


@dataclass(frozen=True)
class SDPInstance:
    """A symmetric cost matrix for the diagonally constrained SDP."""

    C: np.ndarray
    n: int

    @staticmethod
    def from_matrix(C, warn_asymmetric=True):
        C = np.asarray(C, dtype=float)
        if C.ndim != 2 or C.shape[0] != C.shape[1]:
            raise FormatError(f"cost matrix must be square, got shape {C.shape}")
        asym = float(np.max(np.abs(C - C.T))) if C.size else 0.0
        if asym > 1e-12:
            if warn_asymmetric:
                warnings.warn(
                    f"cost matrix is asymmetric (max |C - C'| = {asym:.3e}); "
                    "symmetrizing as (C + C')/2",
                    stacklevel=2,
                )
            C = 0.5 * (C + C.T)
        else:
            C = 0.5 * (C + C.T)  # kill rounding-level asymmetry too
        return SDPInstance(C=C, n=C.shape[0])


def _parse_matrixmarket(lines, path):
    header = lines[0].strip().split()
    if len(header) < 5 or header[0] != "%%MatrixMarket":
        raise FormatError(f"{path}:1: not a MatrixMarket header")
    _, obj, fmt, field_kind, symmetry = (w.lower() for w in header[:5])
    if obj != "matrix" or field_kind not in ("real", "integer"):
        raise FormatError(f"{path}:1: only real/integer matrices are supported")
    if fmt not in ("coordinate", "array"):
        raise FormatError(f"{path}:1: unsupported MatrixMarket format {fmt!r}")
    if symmetry not in ("general", "symmetric"):
        raise FormatError(f"{path}:1: unsupported symmetry qualifier {symmetry!r}")

    body = [
        (i + 1, ln.strip()) for i, ln in enumerate(lines)
        if not ln.startswith("%") and ln.strip()
    ]
    if not body:
        raise FormatError(f"{path}: missing size line")
    # first non-comment line is the size line
    it = iter(body)
    lineno, size_line = next(it)
    parts = size_line.split()
    try:
        if fmt == "coordinate":
            rows, cols, nnz = (int(p) for p in parts)
        else:
            rows, cols = (int(p) for p in parts[:2])
            nnz = None
    except (ValueError, IndexError):
        raise FormatError(f"{path}:{lineno}: bad size line {size_line!r}") from None
    if rows != cols:
        raise FormatError(f"{path}:{lineno}: matrix is not square ({rows}x{cols})")

    M = np.zeros((rows, cols))
    if fmt == "coordinate":
        count = 0
        for lineno, ln in it:
            parts = ln.split()
            try:
                i, j = int(parts[0]) - 1, int(parts[1]) - 1
                v = float(parts[2]) if len(parts) > 2 else 1.0
            except (ValueError, IndexError):
                raise FormatError(f"{path}:{lineno}: bad coordinate entry {ln!r}") from None
            if not (0 <= i < rows and 0 <= j < cols):
                raise FormatError(f"{path}:{lineno}: index out of range in {ln!r}")
            M[i, j] = v
            if symmetry == "symmetric" and i != j:
                M[j, i] = v
            count += 1
        if nnz is not None and count != nnz:
            raise FormatError(
                f"{path}: expected {nnz} entries, found {count}"
            )
    else:  # array: column-major dense listing (lower triangle when symmetric)
        values = []
        for lineno, ln in it:
            for tok in ln.split():
                try:
                    values.append(float(tok))
                except ValueError:
                    raise FormatError(f"{path}:{lineno}: bad value {tok!r}") from None
        if symmetry == "symmetric":
            expected = rows * (rows + 1) // 2
            if len(values) != expected:
                raise FormatError(
                    f"{path}: symmetric array needs {expected} values, found {len(values)}"
                )
            idx = 0
            for j in range(cols):
                for i in range(j, rows):
                    M[i, j] = values[idx]
                    M[j, i] = values[idx]
                    idx += 1
        else:
            if len(values) != rows * cols:
                raise FormatError(
                    f"{path}: array needs {rows * cols} values, found {len(values)}"
                )
            M = np.array(values).reshape((cols, rows)).T
    return M


def _parse_dense_text(lines, path):
    rows = []
    width = None
    for lineno, ln in enumerate(lines, start=1):
        stripped = ln.strip()
        if not stripped or stripped.startswith("#"):
            continue
        try:
            row = [float(tok) for tok in stripped.split()]
        except ValueError:
            raise FormatError(f"{path}:{lineno}: bad value in row {stripped!r}") from None
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise FormatError(
                f"{path}:{lineno}: ragged row (got {len(row)} values, expected {width})"
            )
        rows.append(row)
    if not rows:
        raise FormatError(f"{path}: no matrix data found")
    return np.array(rows)


def load_matrix(path, fmt="auto"):
    """Read a cost matrix from MatrixMarket or whitespace dense text.

    ``fmt`` is "matrixmarket", "dense" or "auto" (sniff the header).
    Asymmetric inputs are symmetrized as (C + C')/2 with a warning.
    """
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    if not lines:
        raise FormatError(f"{path}: empty file")
    if fmt == "auto":
        fmt = "matrixmarket" if lines[0].startswith("%%MatrixMarket") else "dense"
    if fmt in ("matrixmarket", "mm", "mtx"):
        M = _parse_matrixmarket(lines, path)
    elif fmt in ("dense", "dense-text", "txt"):
        M = _parse_dense_text(lines, path)
    else:
        raise FormatError(f"unknown matrix format {fmt!r}")
    return SDPInstance.from_matrix(M)


def bm_problem(inst: SDPInstance, p: int) -> Problem:
    """The factorized cost Tr(C Y Y^T) on Oblique(n, p)."""
    if p < 1:
        raise ContractViolationError("factorization width p must be at least 1")
    man = Oblique(inst.n, p)
    C = inst.C

    def cost(coords):
        Y = man.as_matrix(coords)
        return float(np.sum(Y * (C @ Y)))  # Tr(C Y Y^T) = <Y, C Y>

    def egrad(coords):
        Y = man.as_matrix(coords)
        return (2.0 * (C @ Y)).reshape(-1)

    def ehess_vec(coords, dot_coords):
        Ydot = man.as_matrix(dot_coords)
        return (2.0 * (C @ Ydot)).reshape(-1)

    return Problem(
        manifold=man,
        cost_fn=cost,
        ambient_grad=egrad,
        ambient_hess_vec=ehess_vec,
        name=f"bm(n={inst.n},p={p})",
    )


def dual_certificate(inst: SDPInstance, Y):
    """Optimality-gap bound at a feasible factor Y.

    Returns (S, lambda_min(S), gap_bound) with
    S = C - Diag(diag(C Y Y^T)) and gap_bound = n * max(0, -lambda_min(S)),
    a valid upper bound on Tr(C Y Y^T) minus the SDP optimum.
    """
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2 or Y.shape[0] != inst.n:
        raise ContractViolationError(
            f"factor must have {inst.n} rows, got shape {Y.shape}"
        )
    row_norm_defect = float(np.max(np.abs(np.linalg.norm(Y, axis=1) - 1.0)))
    if row_norm_defect > 1e-9:
        raise ContractViolationError(
            f"factor rows are not unit vectors (defect {row_norm_defect:.3e})"
        )
    CY = inst.C @ Y
    S = inst.C - np.diag(np.sum(Y * CY, axis=1))
    lam_min = float(np.linalg.eigvalsh(S)[0])
    gap_bound = inst.n * max(0.0, -lam_min)
    return S, lam_min, gap_bound


@dataclass
class BMSolution:
    """Result of one factorized solve, with its dual certificate."""

    Y: np.ndarray
    objective: float
    lambda_min_S: float
    gap_bound: float
    status: RTRStatus
    iterations: int
    n: int
    p: int
    seed: Optional[int] = None
    certificate: Optional[object] = None
    trace: Optional[object] = None

    def to_dict(self):
        return {
            "schema": BMSOL_SCHEMA,
            "n": self.n,
            "p": self.p,
            "objective": self.objective,
            "lambda_min_S": self.lambda_min_S,
            "gap_bound": self.gap_bound,
            "status": self.status.value,
            "iterations": self.iterations,
            "seed": self.seed,
        }

    def dump_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def dump_factor(self, path):
        np.savetxt(path, self.Y)


def random_factor(inst: SDPInstance, p, rng):
    """Feasible start with rows drawn uniformly on the unit sphere."""
    Y = rng.standard_normal((inst.n, p))
    return Y / np.linalg.norm(Y, axis=1, keepdims=True)


def solve_relaxation(inst: SDPInstance, p, cfg: RTRConfig, seed=0) -> BMSolution:
    """Solve the factorized problem with trust regions from a seeded start.

    With p = n + 1 and a second-order certificate at tolerance eps_h, the
    objective is within (n/2) * eps_h of the SDP optimum; the returned
    ``gap_bound`` is the independent dual bound at the terminal point.
    """
    if p < 2:
        raise ContractViolationError("solve_relaxation needs p >= 2")
    problem = bm_problem(inst, p)
    rng = np.random.default_rng(seed)
    Y0 = random_factor(inst, p, rng)
    x0 = problem.manifold.point(Y0.reshape(-1))
    x, cert, trace = rtr_solve(problem, x0, cfg)
    Y = problem.manifold.as_matrix(x.coords)
    _, lam_min, gap_bound = dual_certificate(inst, Y)
    return BMSolution(
        Y=Y,
        objective=problem.cost_fn(x.coords),
        lambda_min_S=lam_min,
        gap_bound=gap_bound,
        status=trace.status,
        iterations=trace.iterations,
        n=inst.n,
        p=p,
        seed=seed,
        certificate=cert,
        trace=trace,
    )


def default_width(n):
    """The certificate-friendly default factorization width p = n + 1."""
    return n + 1


def minimal_width(n):
    """ceil(sqrt(2 n)): the smallest width at which the factorized problem
    is known to keep the SDP optimum (generic cost matrices)."""
    return math.ceil(math.sqrt(2 * n))
