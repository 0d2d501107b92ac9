"""Eigenvalue counting by inertia and low-lying eigenpairs.

``count_below(H, E)`` is the number of eigenvalues of H strictly below E,
obtained from the signs of the pivots of a symmetric factorization of H - E
(Sylvester's law of inertia).  Three routes are used:

* one dimension: the tridiagonal LDL^T (Sturm) recurrence;
* small matrices: dense Bunch-Kaufman LDL^T;
* otherwise: SuperLU in symmetric mode with diagonal pivoting only, so the
  factorization is a congruence P (H - E) P^T = L D L^T.

If some pivot is tiny relative to ||H|| the energy is numerically an
eigenvalue; the count is then redone at E + eps_shift and flagged.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .lattice import HamiltonianMatrix

try:
    from numba import njit
except ImportError:  # pragma: no cover - exercised only without numba
    njit = None

DENSE_LIMIT = 400
SHIFT_REL = 1e-10
PIVOT_REL = 1e-13


class SpectralError(RuntimeError):
    pass


def _sturm_py(d, e2, E, tol):
    n = d.shape[0]
    count = 0
    tiny = False
    q = d[0] - E
    for i in range(n):
        if i > 0:
            q = d[i] - E - e2[i - 1] / q
        if abs(q) < tol:
            tiny = True
            q = -tol if q < 0 else tol
        if q < 0:
            count += 1
    return count, tiny


if njit is not None:
    _sturm = njit(cache=False, nogil=True)(_sturm_py)
else:  # pragma: no cover
    _sturm = _sturm_py


# ---------------------------------------------------------------------------
# operator normalisation
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class _Operator:
    matrix: sp.csr_matrix
    norm: float
    diag: np.ndarray | None = None
    off: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def tridiagonal(self) -> bool:
        return self.diag is not None

    def lower_bound(self) -> float:
        """Gershgorin lower bound on the spectrum."""
        m = self.matrix
        absrow = np.asarray(abs(m).sum(axis=1)).ravel()
        dg = m.diagonal()
        return float(np.min(dg - (absrow - np.abs(dg))))


def as_operator(H) -> _Operator:
    if isinstance(H, _Operator):
        return H
    if isinstance(H, HamiltonianMatrix):
        m = H.matrix
        norm = H.norm_bound()
    else:
        m = sp.csr_matrix(H) if not sp.issparse(H) else H.tocsr()
        norm = float(abs(m).sum(axis=1).max()) if m.shape[0] else 0.0
    if m.shape[0] != m.shape[1]:
        raise SpectralError("matrix must be square")
    coo = m.tocoo()
    if coo.nnz == 0 or np.all(np.abs(coo.row - coo.col) <= 1):
        return _Operator(m, norm, m.diagonal().astype(float), m.diagonal(1).astype(float))
    return _Operator(m, norm)


# ---------------------------------------------------------------------------
# counting
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CountResult:
    count: int
    energy: float
    shifted: bool
    method: str


def _dense_inertia(a: np.ndarray, tol: float):
    _, D, _ = sla.ldl(a, lower=True, check_finite=False)
    neg = 0
    tiny = False
    i = 0
    n = D.shape[0]
    while i < n:
        if i + 1 < n and D[i + 1, i] != 0.0:
            w = np.linalg.eigvalsh(D[i:i + 2, i:i + 2])
            neg += int(np.sum(w < 0))
            tiny |= bool(np.any(np.abs(w) < tol))
            i += 2
        else:
            neg += int(D[i, i] < 0)
            tiny |= abs(D[i, i]) < tol
            i += 1
    return neg, tiny


def _sparse_inertia(m: sp.csr_matrix, E: float, tol: float):
    a = (m - E * sp.identity(m.shape[0], format="csr")).tocsc()
    lu = spla.splu(
        a,
        permc_spec="MMD_AT_PLUS_A",
        diag_pivot_thresh=0.0,
        options=dict(SymmetricMode=True, Equil=False),
    )
    if not np.array_equal(lu.perm_r, lu.perm_c):
        raise SpectralError("sparse factorization left the diagonal; inertia not available")
    piv = lu.U.diagonal()
    return int(np.sum(piv < 0)), bool(np.any(np.abs(piv) < tol))


def _inertia_at(op: _Operator, E: float, tol: float):
    if op.tridiagonal:
        if op.n == 0:
            return 0, False, "sturm"
        c, tiny = _sturm(op.diag, op.off * op.off, float(E), float(tol))
        return int(c), bool(tiny), "sturm"
    if op.n <= DENSE_LIMIT:
        a = op.matrix.toarray() - E * np.eye(op.n)
        c, tiny = _dense_inertia(a, tol)
        return c, tiny, "dense"
    try:
        c, tiny = _sparse_inertia(op.matrix, E, tol)
        return c, tiny, "sparse-inertia"
    except (RuntimeError, SpectralError):
        # exactly singular or off-diagonal pivoting: caller shifts
        return -1, True, "sparse-inertia"


def inertia_count(H, E: float, shift: float | None = None) -> CountResult:
    """Number of eigenvalues < E with method tag and near-eigenvalue flag."""
    op = as_operator(H)
    scale = max(op.norm, 1.0)
    tol = PIVOT_REL * scale
    eps = SHIFT_REL * scale if shift is None else shift
    c, tiny, method = _inertia_at(op, E, tol)
    if not tiny:
        return CountResult(c, float(E), False, method)
    for k in (1, 2, 4):
        E2 = E + k * eps
        c, tiny, method = _inertia_at(op, E2, tol)
        if not tiny and c >= 0:
            return CountResult(c, float(E2), True, method)
    raise SpectralError(f"could not separate E={E!r} from the spectrum")


def count_below(H, E: float) -> int:
    """n(H, E): eigenvalues strictly below E, with multiplicity."""
    return inertia_count(H, E).count


def count_below_many(H, energies) -> np.ndarray:
    op = as_operator(H)
    return np.array([inertia_count(op, float(E)).count for E in np.atleast_1d(energies)], dtype=np.int64)


# ---------------------------------------------------------------------------
# eigenpairs
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class SpectralSummary:
    threshold: float
    count: int
    ground_energy: float
    energies: np.ndarray
    vectors: np.ndarray | None
    method: str
    complete: bool
    window: tuple | None = None
    cap: int | None = None
    shifted: bool = False
    residuals: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "count": self.count,
            "ground_energy": self.ground_energy,
            "energies": [float(x) for x in self.energies],
            "residuals": [float(x) for x in self.residuals],
            "method": self.method,
            "complete": self.complete,
            "window": list(self.window) if self.window is not None else None,
            "cap": self.cap,
            "shifted": self.shifted,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def save(self, path, realization_id=None) -> None:
        """JSON summary; eigenvectors go to a raw float64 sidecar next to it."""
        data = self.to_dict()
        if self.vectors is not None and realization_id is not None:
            side = f"{path}.vectors-{realization_id}.f64"
            np.ascontiguousarray(self.vectors, dtype="<f8").tofile(side)
            data["vectors"] = {"file": side.split("/")[-1], "shape": list(self.vectors.shape), "dtype": "<f8",
                               "order": "C"}
        with open(path, "w") as fh:
            json.dump(data, fh, sort_keys=True, indent=1)


def load_vectors(json_path) -> np.ndarray:
    with open(json_path) as fh:
        meta = json.load(fh)["vectors"]
    import os

    side = os.path.join(os.path.dirname(str(json_path)), meta["file"])
    return np.fromfile(side, dtype=meta["dtype"]).reshape(meta["shape"])


def _residuals(op: _Operator, w, V) -> np.ndarray:
    if V is None or V.shape[1] == 0:
        return np.zeros(0)
    R = op.matrix @ V - V * w
    return np.linalg.norm(R, axis=0)


def _rayleigh_ritz(op: _Operator, V):
    Q, _ = np.linalg.qr(V)
    T = Q.T @ (op.matrix @ Q)
    w, S = np.linalg.eigh(0.5 * (T + T.T))
    return w, Q @ S


def _solve_window(op: _Operator, a: float, b: float, vectors: bool):
    """All eigenpairs with a < E <= b (dense or tridiagonal routes)."""
    if op.tridiagonal:
        if vectors:
            w, V = sla.eigh_tridiagonal(op.diag, op.off, select="v", select_range=(a, b))
            return w, V
        return sla.eigvalsh_tridiagonal(op.diag, op.off, select="v", select_range=(a, b)), None
    A = op.matrix.toarray()
    if vectors:
        w, V = sla.eigh(A, subset_by_value=(a, b))
        return w, V
    return sla.eigh(A, eigvals_only=True, subset_by_value=(a, b)), None


def _solve_lowest(op: _Operator, k: int, vectors: bool):
    if op.tridiagonal:
        if vectors:
            return sla.eigh_tridiagonal(op.diag, op.off, select="i", select_range=(0, k - 1))
        return sla.eigvalsh_tridiagonal(op.diag, op.off, select="i", select_range=(0, k - 1)), None
    A = op.matrix.toarray()
    if vectors:
        return sla.eigh(A, subset_by_index=(0, k - 1))
    return sla.eigh(A, eigvals_only=True, subset_by_index=(0, k - 1)), None


def _arpack(op: _Operator, sigma: float, k: int, ncv=None):
    w, V = spla.eigsh(op.matrix.tocsc(), k=k, sigma=sigma, which="LM", ncv=ncv, tol=0.0)
    order = np.argsort(w)
    return w[order], V[:, order]


SPARSE_DENSE_LIMIT = 3000


def _sparse_select(op: _Operator, sigma: float, m: int, keep, max_restarts: int):
    """Shift-invert Lanczos for the m eigenvalues nearest sigma; filtered by ``keep``."""
    n = op.n
    extra = 2
    for attempt in range(max_restarts + 1):
        k = min(m + extra, n - 2)
        if k < m or k < 1:
            break
        ncv = min(n - 1, max(2 * k + 1, 20) * (attempt + 1))
        try:
            w, V = _arpack(op, sigma, k, ncv=ncv)
        except (spla.ArpackNoConvergence, RuntimeError):
            extra *= 2
            continue
        sel = keep(w)
        w, V = w[sel], V[:, sel]
        if w.size == m:
            ortho = np.abs(V.T @ V - np.eye(m)).max() if m else 0.0
            if ortho > 1e-10:
                w, V = _rayleigh_ritz(op, V)
            res = _residuals(op, w, V)
            if np.all(res <= 1e-8 * max(op.norm, 1.0)):
                return w, V, True
        extra *= 2
    if "w" not in locals():
        return np.zeros(0), np.zeros((n, 0)), False
    return w, V, False


def lowest_eigenpairs(H, window=None, k: int | None = None, vectors: bool = True, upper: float = 0.0,
                      max_restarts: int = 3) -> SpectralSummary:
    """Eigenpairs in the window ]a, b] or the lowest k eigenpairs below ``upper``.

    Completeness is certified by inertia counts at the window edges; if the
    eigensolver cannot deliver every certified pair the summary is flagged
    incomplete.
    """
    op = as_operator(H)
    if (window is None) == (k is None):
        raise SpectralError("give exactly one of window or k")
    if k is not None:
        if k < 1:
            raise SpectralError("k must be >= 1")
        top = inertia_count(op, upper)
        m = min(k, top.count)
        a, b = -np.inf, upper
        threshold, count, shifted = top.energy, top.count, top.shifted
    else:
        a, b = float(window[0]), float(window[1])
        if not a < b:
            raise SpectralError("window must satisfy a < b")
        lo, hi = inertia_count(op, a), inertia_count(op, b)
        # inertia counts are for ]-inf, E[, the eigensolvers use ]a, b]; any
        # eigenvalue sitting on an edge has been shifted by the count already
        a, b = lo.energy, hi.energy
        m = hi.count - lo.count
        threshold, count, shifted = hi.energy, hi.count, lo.shifted or hi.shifted
    empty = np.zeros((op.n, 0)) if vectors else None
    method = "sturm" if op.tridiagonal else ("dense" if op.n <= DENSE_LIMIT else "sparse-inertia")
    if m == 0:
        g = ground_energy(op)
        return SpectralSummary(threshold, count, g, np.zeros(0), empty, method, True, window, k, shifted)

    route_sparse = not op.tridiagonal and op.n > SPARSE_DENSE_LIMIT
    if not route_sparse:
        if k is not None:
            w, V = _solve_lowest(op, m, vectors)
        else:
            w, V = _solve_window(op, a, b, vectors)
            w, V = _drop_edge(w, V, a, b)
    else:
        if k is not None:
            sigma = op.lower_bound() - 1.0
            # w arrives sorted; with sigma below the spectrum these are the lowest pairs
            got = _sparse_select(op, sigma, m, lambda w: (w < b) & (np.arange(w.size) < m), max_restarts)
        else:
            sigma = 0.5 * (a + b) + 1e-7 * (b - a)
            got = _sparse_select(op, sigma, m, lambda w: (w >= a) & (w < b), max_restarts)
        w, V, _ = got
        if not vectors:
            V = None
    complete = w.size == m
    res = _residuals(op, w, V) if V is not None else np.zeros(0)
    if V is not None and w.size and np.any(res > 1e-8 * max(op.norm, 1.0)):
        w, V = _rayleigh_ritz(op, V)
        res = _residuals(op, w, V)
    g = float(w[0]) if (k is not None or a == -np.inf) and w.size else ground_energy(op)
    return SpectralSummary(threshold, count, g, np.asarray(w), V, method, bool(complete), window, k, shifted, res)


def _drop_edge(w, V, a, b):
    # counts are for [a, b[ while LAPACK returns ]a, b]; reconcile exact-edge cases
    keep = (w >= a) & (w < b)
    if np.all(keep):
        return w, V
    return w[keep], (V[:, keep] if V is not None else None)


def ground_energy(H) -> float:
    op = as_operator(H)
    if op.tridiagonal:
        return float(sla.eigvalsh_tridiagonal(op.diag, op.off, select="i", select_range=(0, 0))[0])
    if op.n <= SPARSE_DENSE_LIMIT:
        return float(sla.eigh(op.matrix.toarray(), eigvals_only=True, subset_by_index=(0, 0))[0])
    sigma = op.lower_bound() - 1.0
    w, _ = _arpack(op, sigma, 1)
    return float(w[0])


def eigenvalues_in(H, a: float, b: float) -> np.ndarray:
    """Eigenvalues in [a, b[ (same edge convention as the inertia counts)."""
    return lowest_eigenpairs(H, window=(a, b), vectors=False).energies


def spectrum_distance(H, E: float, radius: float) -> float:
    """min |E_j - E| over eigenvalues within ``radius`` of E; +inf if there are none."""
    if not radius > 0:
        raise SpectralError("radius must be positive")
    op = as_operator(H)
    lo = inertia_count(op, E - radius)
    hi = inertia_count(op, E + radius)
    if hi.count == lo.count:
        return float("inf")
    # a near-eigenvalue at E itself: the count shift already resolves it
    at = inertia_count(op, E)
    if at.shifted:
        return 0.0
    w = lowest_eigenpairs(op, window=(E - radius, E + radius), vectors=False).energies
    if w.size == 0:
        return float("inf")
    return float(np.min(np.abs(w - E)))
