"""Solver-neutral conic problems and the solver adapters.

Problems are stored as

    minimize    c . x
    subject to  A x + s = b,   s in K = K_1 x ... x K_r

where each block ``K_i`` is the zero cone (equalities), the nonnegative
orthant, or a PSD cone. PSD blocks use the ``svec`` layout: upper triangle,
column by column, off-diagonal entries scaled by sqrt(2).
"""

from __future__ import annotations

import enum
import io
import math
import time
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import scipy.sparse as sp

SQRT2 = math.sqrt(2.0)


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    NUMERICAL_FAILURE = "NumericalFailure"


class SolverUnavailableError(RuntimeError):
    pass


@dataclass(frozen=True)
class Cone:
    kind: str  # "zero" | "nonneg" | "psd"
    size: int  # rows for zero/nonneg, side length for psd

    @property
    def rows(self) -> int:
        return self.size * (self.size + 1) // 2 if self.kind == "psd" else self.size


@dataclass
class ConicProblem:
    c: np.ndarray
    A: sp.csc_matrix
    b: np.ndarray
    cones: List[Cone]
    objective_offset: float = 0.0
    labels: dict = field(default_factory=dict)

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        self.A = sp.csc_matrix(self.A)
        if self.A.shape != (len(self.b), len(self.c)):
            raise ValueError(f"A has shape {self.A.shape}, expected {(len(self.b), len(self.c))}")
        if sum(k.rows for k in self.cones) != len(self.b):
            raise ValueError("cone rows do not cover the constraint rows")
        for k in self.cones:
            if k.kind not in ("zero", "nonneg", "psd"):
                raise ValueError(f"unknown cone kind {k.kind!r}")

    @property
    def nvars(self) -> int:
        return len(self.c)

    @property
    def nrows(self) -> int:
        return len(self.b)

    def row_offsets(self) -> List[int]:
        offs, r = [], 0
        for k in self.cones:
            offs.append(r)
            r += k.rows
        return offs


@dataclass
class SolverSettings:
    backend: str = "clarabel"
    feas_tol: float = 1e-8
    gap_tol: float = 1e-8
    max_iter: int = 200
    time_limit: float = math.inf
    verbose: bool = False
    retry: bool = True


@dataclass
class ConicSolution:
    status: Status
    x: Optional[np.ndarray]
    s: Optional[np.ndarray]
    z: Optional[np.ndarray]
    objective: Optional[float]
    iterations: int = 0
    primal_residual: float = math.nan
    dual_residual: float = math.nan
    gap: float = math.nan
    solve_time: float = 0.0
    raw_status: str = ""
    approx_objective: Optional[float] = None  # last iterate when not Optimal

    def __post_init__(self):
        if (self.status == Status.OPTIMAL) != (self.objective is not None):
            raise ValueError("objective must be present iff status is Optimal")


# ---------------------------------------------------------------------------
# svec helpers
# ---------------------------------------------------------------------------

def svec_pairs(k: int) -> List[Tuple[int, int]]:
    return [(i, j) for j in range(k) for i in range(j + 1)]


def svec(M) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    return np.array([M[i, j] * (1.0 if i == j else SQRT2) for i, j in svec_pairs(M.shape[0])])


def smat(v, k: int) -> np.ndarray:
    M = np.zeros((k, k))
    for val, (i, j) in zip(v, svec_pairs(k)):
        if i == j:
            M[i, i] = val
        else:
            M[i, j] = M[j, i] = val / SQRT2
    return M


def _residuals(problem: ConicProblem, x, s, z):
    rp = np.abs(problem.A @ x + s - problem.b).max(initial=0.0) / (1.0 + np.abs(problem.b).max(initial=0.0))
    rd = np.abs(problem.A.T @ z + problem.c).max(initial=0.0) / (1.0 + np.abs(problem.c).max(initial=0.0))
    pobj = float(problem.c @ x)
    dobj = float(-problem.b @ z)
    gap = abs(pobj - dobj) / (1.0 + min(abs(pobj), abs(dobj)))
    return rp, rd, gap


# ---------------------------------------------------------------------------
# backends
# ---------------------------------------------------------------------------

# option overrides tried in turn when a solve ends short of full accuracy
CLARABEL_FALLBACKS = (
    {},
    {"static_regularization_constant": 1e-7},
    {"direct_solve_method": "qdldl", "iterative_refinement_reltol": 1e-14,
     "iterative_refinement_abstol": 1e-14, "iterative_refinement_max_iter": 50},
)


def _clarabel_once(problem: ConicProblem, settings: SolverSettings, overrides: dict):
    import clarabel

    cones = []
    for k in problem.cones:
        if k.kind == "zero":
            cones.append(clarabel.ZeroConeT(k.size))
        elif k.kind == "nonneg":
            cones.append(clarabel.NonnegativeConeT(k.size))
        else:
            cones.append(clarabel.PSDTriangleConeT(k.size))
    opts = clarabel.DefaultSettings()
    opts.verbose = settings.verbose
    opts.max_iter = settings.max_iter
    opts.tol_feas = settings.feas_tol
    opts.tol_gap_abs = settings.gap_tol
    opts.tol_gap_rel = settings.gap_tol
    if math.isfinite(settings.time_limit):
        opts.time_limit = settings.time_limit
    for key, val in overrides.items():
        setattr(opts, key, val)
    n = problem.nvars
    solver = clarabel.DefaultSolver(sp.csc_matrix((n, n)), problem.c, problem.A, problem.b, cones, opts)
    return solver.solve()


def _solve_clarabel(problem: ConicProblem, settings: SolverSettings) -> ConicSolution:
    try:
        import clarabel  # noqa: F401
    except ImportError as exc:  # pragma: no cover - environment dependent
        raise SolverUnavailableError("clarabel is not installed") from exc
    t0 = time.perf_counter()
    iters = 0
    fallbacks = CLARABEL_FALLBACKS if settings.retry else CLARABEL_FALLBACKS[:1]
    for overrides in fallbacks:
        res = _clarabel_once(problem, settings, overrides)
        iters += res.iterations
        raw = str(res.status)
        if raw in ("Solved", "PrimalInfeasible", "DualInfeasible"):
            break
    elapsed = time.perf_counter() - t0
    x, s, z = np.array(res.x), np.array(res.s), np.array(res.z)
    rp, rd, gap = _residuals(problem, x, s, z)
    if raw == "Solved":
        status = Status.OPTIMAL
    elif raw in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
        status = Status.INFEASIBLE
    elif raw in ("DualInfeasible", "AlmostDualInfeasible"):
        status = Status.UNBOUNDED
    else:
        status = Status.NUMERICAL_FAILURE
    obj = float(problem.c @ x) + problem.objective_offset if status == Status.OPTIMAL else None
    sol = ConicSolution(status, x, s, z, obj, iters, rp, rd, gap, elapsed, raw)
    if status == Status.NUMERICAL_FAILURE and len(x):
        sol.approx_objective = float(problem.c @ x) + problem.objective_offset
    return sol


def _solve_scs(problem: ConicProblem, settings: SolverSettings) -> ConicSolution:
    try:
        import scs
    except ImportError as exc:  # pragma: no cover
        raise SolverUnavailableError("scs is not installed") from exc
    # SCS orders zero, nonneg, psd blocks and stores PSD lower-triangle column-wise
    perm: List[int] = []
    offs = problem.row_offsets()
    z_count = l_count = 0
    s_sizes: List[int] = []
    for kind in ("zero", "nonneg", "psd"):
        for k, off in zip(problem.cones, offs):
            if k.kind != kind:
                continue
            if kind == "psd":
                ours = {p: idx for idx, p in enumerate(svec_pairs(k.size))}
                for j in range(k.size):
                    for i in range(j, k.size):
                        perm.append(off + ours[(j, i)])
                s_sizes.append(k.size)
            else:
                perm.extend(range(off, off + k.size))
                if kind == "zero":
                    z_count += k.size
                else:
                    l_count += k.size
    perm = np.array(perm, dtype=int)
    A = problem.A[perm]
    b = problem.b[perm]
    data = dict(A=sp.csc_matrix(A), b=b, c=problem.c)
    cone = dict(z=z_count, l=l_count, s=s_sizes)
    t0 = time.perf_counter()
    solver = scs.SCS(data, cone, verbose=settings.verbose, eps_abs=settings.feas_tol,
                     eps_rel=settings.gap_tol, max_iters=max(settings.max_iter, 100000))
    sol = solver.solve()
    elapsed = time.perf_counter() - t0
    inv = np.empty_like(perm)
    inv[perm] = np.arange(len(perm))
    x = sol["x"]
    s = sol["s"][inv]
    z = sol["y"][inv]
    raw = sol["info"]["status"]
    rp, rd, gap = _residuals(problem, x, s, z)
    if raw == "solved":
        status = Status.OPTIMAL
    elif raw.startswith("infeasible"):
        status = Status.INFEASIBLE
    elif raw.startswith("unbounded"):
        status = Status.UNBOUNDED
    else:
        status = Status.NUMERICAL_FAILURE
    obj = float(problem.c @ x) + problem.objective_offset if status == Status.OPTIMAL else None
    return ConicSolution(status, x, s, z, obj, sol["info"]["iter"], rp, rd, gap, elapsed, raw)


_BACKENDS = {"clarabel": _solve_clarabel, "scs": _solve_scs}


def solve(problem: ConicProblem, settings: SolverSettings | None = None) -> ConicSolution:
    """Solve ``problem``; backend failures come back as ``NumericalFailure``."""
    settings = settings or SolverSettings()
    try:
        backend = _BACKENDS[settings.backend]
    except KeyError:
        raise SolverUnavailableError(f"unknown backend {settings.backend!r}") from None
    try:
        return backend(problem, settings)
    except SolverUnavailableError:
        raise
    except Exception as exc:  # solver crashed: record, never abort the caller
        return ConicSolution(Status.NUMERICAL_FAILURE, None, None, None, None, raw_status=repr(exc))


# ---------------------------------------------------------------------------
# text interchange
# ---------------------------------------------------------------------------

def write_sparse_sdp(problem: ConicProblem, stream) -> None:
    """Write a plain-text sparse description (header, cones, triplets)."""
    A = sp.coo_matrix(problem.A)
    own = isinstance(stream, (str, bytes)) or hasattr(stream, "__fspath__")
    fh = open(stream, "w") if own else stream
    try:
        fh.write("# conic problem: min c.x  s.t.  A x + s = b, s in K\n")
        fh.write(f"dims {problem.nvars} {problem.nrows} {A.nnz}\n")
        fh.write(f"offset {problem.objective_offset!r}\n")
        fh.write("cones " + " ".join(f"{k.kind}:{k.size}" for k in problem.cones) + "\n")
        fh.write("c " + " ".join(repr(float(v)) for v in problem.c) + "\n")
        fh.write("b " + " ".join(repr(float(v)) for v in problem.b) + "\n")
        for i, j, v in sorted(zip(A.row, A.col, A.data)):
            fh.write(f"{i} {j} {float(v)!r}\n")
    finally:
        if own:
            fh.close()


def read_sparse_sdp(stream) -> ConicProblem:
    own = isinstance(stream, (str, bytes)) or hasattr(stream, "__fspath__")
    fh = open(stream) if own else stream
    try:
        lines = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
    finally:
        if own:
            fh.close()
    head = lines[0].split()
    n, m, nnz = int(head[1]), int(head[2]), int(head[3])
    offset = float(lines[1].split()[1])
    cones = []
    for tok in lines[2].split()[1:]:
        kind, size = tok.split(":")
        cones.append(Cone(kind, int(size)))
    c = np.array([float(v) for v in lines[3].split()[1:]])
    b = np.array([float(v) for v in lines[4].split()[1:]])
    trip = np.array([ln.split() for ln in lines[5:5 + nnz]], dtype=float).reshape(-1, 3)
    A = sp.csc_matrix((trip[:, 2], (trip[:, 0].astype(int), trip[:, 1].astype(int))), shape=(m, n))
    if len(c) != n or len(b) != m:
        raise ValueError("malformed sparse SDP file")
    return ConicProblem(c, A, b, cones, offset)


def to_text(problem: ConicProblem) -> str:
    buf = io.StringIO()
    write_sparse_sdp(problem, buf)
    return buf.getvalue()
