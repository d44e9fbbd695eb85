"""Experiment data: simulation, data matrices, disturbance bounds, CSV I/O."""

import os
import tempfile
from dataclasses import dataclass

import numpy as np

from .linalg import as_matrix, as_square, as_sym, expm, is_psd, rank_with_tol

DIVERGENCE_LIMIT = 1e12


class DivergenceError(ArithmeticError):
    """Raised when a simulated state leaves the overflow guard."""


class DataFormatError(ValueError):
    pass


def _frozen(M):
    M = np.array(M, dtype=float)
    M.setflags(write=False)
    return M


@dataclass(frozen=True)
class LinearSystem:
    """x(i+1) = A x(i) + B u(i)."""

    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        A = as_square(self.A, "A")
        B = as_matrix(self.B, "B")
        if B.shape[0] != A.shape[0]:
            raise ValueError(f"B has {B.shape[0]} rows but A is {A.shape[0]}x{A.shape[0]}")
        object.__setattr__(self, "A", _frozen(A))
        object.__setattr__(self, "B", _frozen(B))

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    def as_z(self):
        """The stacked unknown ``Z = [A B]^T`` of shape (n+m, n)."""
        return np.vstack([self.A.T, self.B.T])

    @classmethod
    def from_z(cls, Z, n):
        Z = np.asarray(Z, dtype=float)
        return cls(Z[:n].T, Z[n:].T)

    def closed_loop(self, K):
        return self.A + self.B @ np.asarray(K, dtype=float)


@dataclass(frozen=True)
class TrajectoryData:
    U0: np.ndarray
    X0: np.ndarray
    X1: np.ndarray
    D0: np.ndarray = None

    def __post_init__(self):
        U0 = as_matrix(self.U0, "U0")
        X0 = as_matrix(self.X0, "X0")
        X1 = as_matrix(self.X1, "X1")
        N = U0.shape[1]
        if X0.shape[1] != N or X1.shape[1] != N:
            raise ValueError("U0, X0 and X1 must have the same number of columns")
        if X1.shape[0] != X0.shape[0]:
            raise ValueError("X0 and X1 must have the same number of rows")
        object.__setattr__(self, "U0", _frozen(U0))
        object.__setattr__(self, "X0", _frozen(X0))
        object.__setattr__(self, "X1", _frozen(X1))
        if self.D0 is not None:
            D0 = as_matrix(self.D0, "D0")
            if D0.shape != X0.shape:
                raise ValueError("D0 must have the shape of X0")
            object.__setattr__(self, "D0", _frozen(D0))

    @property
    def n(self):
        return self.X0.shape[0]

    @property
    def m(self):
        return self.U0.shape[0]

    @property
    def N(self):
        return self.U0.shape[1]

    @property
    def W0(self):
        return np.vstack([self.X0, self.U0])


@dataclass(frozen=True)
class DisturbanceBound:
    """A-priori energy bound ``D D^T <= bound`` on the disturbance sequence."""

    bound: np.ndarray

    def __post_init__(self):
        S = as_sym(self.bound, "bound", tol=1e-12)
        if not is_psd(S, 1e-12 * max(1.0, float(np.max(np.abs(S))))):
            raise ValueError("disturbance bound must be positive semidefinite")
        object.__setattr__(self, "bound", _frozen(S))

    def admits(self, D, tol=1e-12):
        D = np.asarray(D, dtype=float)
        return is_psd(self.bound - D @ D.T, tol)


def simulate(sys, x0, inputs, disturbances=None):
    """Run the recursion for N steps and assemble U0, X0, X1 (and D0)."""
    inputs = as_matrix(inputs, "inputs")
    if inputs.shape[0] != sys.m:
        raise ValueError(f"inputs must have {sys.m} rows")
    N = inputs.shape[1]
    if disturbances is None:
        disturbances = np.zeros((sys.n, N))
    disturbances = as_matrix(disturbances, "disturbances")
    if disturbances.shape != (sys.n, N):
        raise ValueError(f"disturbances must have shape {(sys.n, N)}")
    x = np.asarray(x0, dtype=float).ravel()
    if x.size != sys.n:
        raise ValueError(f"x0 must have {sys.n} entries")
    X = np.empty((sys.n, N + 1))
    X[:, 0] = x
    for i in range(N):
        x = sys.A @ x + sys.B @ inputs[:, i] + disturbances[:, i]
        if not np.all(np.abs(x) <= DIVERGENCE_LIMIT):
            raise DivergenceError(f"open-loop divergence at step {i + 1}")
        X[:, i + 1] = x
    return TrajectoryData(U0=inputs, X0=X[:, :N], X1=X[:, 1:], D0=disturbances)


def make_random_inputs(m, N, amplitude, seed):
    if amplitude <= 0:
        raise ValueError("amplitude must be positive")
    rng = np.random.default_rng(seed)
    return rng.uniform(-amplitude, amplitude, size=(m, N))


def energy_bound_from_amplitude(n, N, delta):
    """Isotropic bound ``N*n*delta**2*I``.

    Valid whenever every disturbance entry lies in ``[-delta, delta]``:
    ``D D^T <= |D|_F^2 I <= N n delta^2 I``.
    """
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    return DisturbanceBound(N * n * delta**2 * np.eye(n))


def check_full_row_rank(data, rel_tol=1e-10):
    return rank_with_tol(data.W0, rel_tol) == data.n + data.m


def discretize_zoh(Gc, Hc, h):
    """Zero-order-hold discretization via the augmented matrix exponential."""
    if h <= 0:
        raise ValueError("sampling period must be positive")
    Gc = as_square(Gc, "Gc")
    Hc = as_matrix(Hc, "Hc")
    n, m = Hc.shape
    if n != Gc.shape[0]:
        raise ValueError("Hc row count must match Gc")
    M = np.zeros((n + m, n + m))
    M[:n, :n] = Gc
    M[:n, n:] = Hc
    E = expm(h * M)
    return LinearSystem(E[:n, :n], E[:n, n:])


def _rows(M):
    return [",".join("%.17g" % v for v in row) for row in M]


def dumps_data(data):
    has_d = data.D0 is not None
    lines = [f"{data.n},{data.m},{data.N},{int(has_d)}"]
    for M in (data.U0, data.X0, data.X1) + ((data.D0,) if has_d else ()):
        lines.extend(_rows(M))
    return "\n".join(lines) + "\n"


def loads_data(text):
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise DataFormatError("empty data file")
    try:
        n, m, N, has_d = (int(v) for v in lines[0].split(","))
    except ValueError as exc:
        raise DataFormatError(f"bad header line: {lines[0]!r}") from exc
    if min(n, m, N) < 1 or has_d not in (0, 1):
        raise DataFormatError(f"bad header values: {lines[0]!r}")
    expected = m + 2 * n + has_d * n
    body = lines[1:]
    if len(body) != expected:
        raise DataFormatError(f"expected {expected} data rows, found {len(body)}")
    try:
        rows = [[float(v) for v in ln.split(",")] for ln in body]
    except ValueError as exc:
        raise DataFormatError("non-numeric entry") from exc
    if any(len(r) != N for r in rows):
        raise DataFormatError(f"every row must have {N} entries")
    arr = np.array(rows)
    U0, X0, X1 = arr[:m], arr[m : m + n], arr[m + n : m + 2 * n]
    D0 = arr[m + 2 * n :] if has_d else None
    return TrajectoryData(U0, X0, X1, D0)


def atomic_write_bytes(path, payload):
    """Write via a temporary file in the same directory, then rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text):
    atomic_write_bytes(path, text.encode("utf-8"))


def save_data(path, data):
    atomic_write_text(path, dumps_data(data))


def load_data(path):
    with open(path) as fh:
        return loads_data(fh.read())
