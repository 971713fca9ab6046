"""Analytically differentiable loss landscapes with exact Hessian traces.

Every landscape is immutable after construction and evaluates on a flat
float64 parameter vector:

* ``WideningValley(d)``   -- L(u, v) = v^2 |u|^2 / 2 with w = [u_1..u_d, v].
  The zero-loss valley v = 0 has trace |u|^2, so flatness varies along it.
* ``SparseValley(m, d, b)`` -- the one-hidden-unit linear-network reduction
  L(u, v) = v^2 |u|^2 / 2 - 2 v (u_{1:m} . b) with w = [u_1..u_{m+d}, v];
  restricted to the d spurious coordinates it is exactly a widening valley.
* ``QuadRegression``      -- quadratically parametrized linear regression,
  L(w) = |X w^{.2} - y|^2 / (4M).
* ``MatrixSensing``       -- symmetric rank-r recovery from linear
  measurements, L(U) = mean_i (y_i - <A_i, U U^T>)^2 / 2, w = U.ravel().
* ``ZeroLoss`` / ``DiagQuadratic`` -- degenerate landscapes used by the
  calibration and acceptance suites.

Gradients and traces are exact; the finite-difference oracle in
``antipgd.diagnostics`` cross-checks them (grad rel. err < 1e-5, trace
rel. err < 1e-4 at randomized points).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "Landscape",
    "WideningValley",
    "SparseValley",
    "QuadRegression",
    "MatrixSensing",
    "ZeroLoss",
    "DiagQuadratic",
    "gen_quad_regression",
    "gen_matrix_sensing",
    "save_dataset",
    "load_dataset",
]


class Landscape:
    """Base interface: pure functions of a flat parameter vector."""

    dim: int = 0
    n_examples: int = 1
    has_per_example = False
    has_model_outputs = False
    has_test_set = False
    has_uv_split = False

    def loss(self, w: np.ndarray) -> float:
        raise NotImplementedError

    def grad(self, w: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def hessian_trace(self, w: np.ndarray) -> float:
        raise NotImplementedError

    def hessian_trace_grad(self, w: np.ndarray) -> np.ndarray:
        """Gradient of w -> tr(Hess L(w)); analytic where implemented."""
        raise NotImplementedError(f"{type(self).__name__} has no analytic trace gradient")

    def per_example_grad(self, w: np.ndarray, indices) -> np.ndarray:
        raise NotImplementedError(f"{type(self).__name__} has no per-example structure")

    def test_loss(self, w: np.ndarray) -> float:
        raise NotImplementedError(f"{type(self).__name__} has no test set")

    def u_sqnorm(self, w: np.ndarray) -> float:
        raise NotImplementedError(f"{type(self).__name__} has no (u, v) split")

    def _check(self, w: np.ndarray) -> np.ndarray:
        w = np.asarray(w, dtype=np.float64)
        if w.shape != (self.dim,):
            raise ValueError(f"parameter shape {w.shape} != ({self.dim},)")
        return w


@dataclass(frozen=True)
class WideningValley(Landscape):
    """L(u, v) = v^2 |u|^2 / 2; grad = (v^2 u, |u|^2 v); trace = d v^2 + |u|^2."""

    d: int
    has_uv_split = True

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be >= 1")

    @property
    def dim(self) -> int:
        return self.d + 1

    def split(self, w):
        return w[: self.d], float(w[self.d])

    def loss(self, w):
        w = self._check(w)
        u, v = self.split(w)
        return 0.5 * v * v * float(u @ u)

    def grad(self, w):
        w = self._check(w)
        u, v = self.split(w)
        g = np.empty_like(w)
        g[: self.d] = (v * v) * u
        g[self.d] = float(u @ u) * v
        return g

    def hessian_trace(self, w):
        w = self._check(w)
        u, v = self.split(w)
        return self.d * v * v + float(u @ u)

    def hessian_trace_grad(self, w):
        w = self._check(w)
        g = 2.0 * w
        g[self.d] *= self.d
        return g

    def u_sqnorm(self, w):
        w = self._check(w)
        u, _ = self.split(w)
        return float(u @ u)


@dataclass(frozen=True)
class SparseValley(Landscape):
    """Sparse-regression reduction around one hidden unit.

    L(u, v) = v^2 |u|^2 / 2 - 2 v (u_{1:m} . b) where b is the population
    cross-moment between targets and the m informative inputs (a direct
    config input, not estimated from data). The loss restricted to the d
    spurious coordinates u_{m+1:m+d} is a widening valley: their gradient
    block is exactly v^2 u_spur.
    """

    m: int
    d: int
    b: np.ndarray

    has_uv_split = True

    def __post_init__(self):
        if self.m < 1 or self.d < 1:
            raise ValueError("m and d must be >= 1")
        b = np.asarray(self.b, dtype=np.float64)
        if b.shape != (self.m,):
            raise ValueError(f"b must have shape ({self.m},)")
        object.__setattr__(self, "b", b)

    @property
    def dim(self) -> int:
        return self.m + self.d + 1

    @property
    def u_dim(self) -> int:
        return self.m + self.d

    def split(self, w):
        return w[: self.u_dim], float(w[self.u_dim])

    def loss(self, w):
        w = self._check(w)
        u, v = self.split(w)
        return 0.5 * v * v * float(u @ u) - 2.0 * v * float(u[: self.m] @ self.b)

    def grad(self, w):
        w = self._check(w)
        u, v = self.split(w)
        g = np.empty_like(w)
        g[: self.u_dim] = (v * v) * u
        g[: self.m] -= 2.0 * v * self.b
        g[self.u_dim] = float(u @ u) * v - 2.0 * float(u[: self.m] @ self.b)
        return g

    def hessian_trace(self, w):
        w = self._check(w)
        u, v = self.split(w)
        return self.u_dim * v * v + float(u @ u)

    def hessian_trace_grad(self, w):
        w = self._check(w)
        g = 2.0 * w
        g[self.u_dim] *= self.u_dim
        return g

    def u_sqnorm(self, w):
        w = self._check(w)
        u, _ = self.split(w)
        return float(u @ u)

    def spurious_sqnorm(self, w):
        w = self._check(w)
        return float(w[self.m : self.u_dim] @ w[self.m : self.u_dim])


@dataclass(frozen=True, eq=False)
class QuadRegression(Landscape):
    """Quadratically parametrized regression: L(w) = |X w^{.2} - y|^2 / (4M).

    grad(w)  = [X^T (X w^{.2} - y)] .* w / M
    Hess(w)  = 2 diag(w) X^T X diag(w) / M + diag(X^T r) / M
    trace(w) = [2 sum_a w_a^2 |X_:a|^2 + sum_i r_i s_i] / M,  s = X 1.

    The model output is f_w(x) = x . w^{.2}, which gives the label-noise
    machinery its gradient sum  sum_i grad f_w(x_i) = 2 (X^T 1) .* w.
    """

    x_train: np.ndarray
    y_train: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray
    w_star: np.ndarray
    meta: dict = field(default_factory=dict)

    has_per_example = True
    has_model_outputs = True
    has_test_set = True

    def __post_init__(self):
        m, d = self.x_train.shape
        if self.y_train.shape != (m,):
            raise ValueError("y_train shape mismatch")
        if self.x_test.shape[1] != d or self.y_test.shape != (self.x_test.shape[0],):
            raise ValueError("test set shape mismatch")
        # caches for the exact trace and its gradient
        object.__setattr__(self, "_col_sq", np.einsum("ij,ij->j", self.x_train, self.x_train))
        row_sum = self.x_train.sum(axis=1)
        object.__setattr__(self, "_xt_rowsum", self.x_train.T @ row_sum)
        object.__setattr__(self, "_row_sum", row_sum)
        object.__setattr__(self, "_col_sum", self.x_train.sum(axis=0))

    @property
    def dim(self) -> int:
        return self.x_train.shape[1]

    @property
    def n_examples(self) -> int:
        return self.x_train.shape[0]

    def _residual(self, w):
        return self.x_train @ (w * w) - self.y_train

    def loss(self, w):
        w = self._check(w)
        r = self._residual(w)
        return float(r @ r) / (4.0 * self.n_examples)

    def grad(self, w):
        w = self._check(w)
        r = self._residual(w)
        return (self.x_train.T @ r) * w / self.n_examples

    def hessian_trace(self, w):
        w = self._check(w)
        r = self._residual(w)
        quad = 2.0 * float(self._col_sq @ (w * w))
        return (quad + float(r @ self._row_sum)) / self.n_examples

    def hessian_trace_grad(self, w):
        w = self._check(w)
        return 2.0 * w * (2.0 * self._col_sq + self._xt_rowsum) / self.n_examples

    def per_example_grad(self, w, indices):
        w = self._check(w)
        indices = np.asarray(indices)
        if indices.size == 0:
            raise ValueError("empty batch")
        xb = self.x_train[indices]
        rb = xb @ (w * w) - self.y_train[indices]
        return (xb.T @ rb) * w / indices.size

    def test_loss(self, w):
        w = self._check(w)
        r = self.x_test @ (w * w) - self.y_test
        return float(r @ r) / (4.0 * self.x_test.shape[0])

    def model_output_grad_sum(self, w):
        """sum_i grad_w f_w(x_i) for f_w(x) = x . (w .* w)."""
        w = self._check(w)
        return 2.0 * self._col_sum * w

    def loss_label_noised(self, w, xi: float):
        """Training loss with every target shifted to y_i - xi."""
        w = self._check(w)
        r = self._residual(w) + xi
        return float(r @ r) / (4.0 * self.n_examples)

    def grad_label_noised(self, w, xi: float):
        """Exact gradient of ``loss_label_noised``: grad(w) + xi (X^T 1) .* w / M."""
        w = self._check(w)
        r = self._residual(w) + xi
        return (self.x_train.T @ r) * w / self.n_examples


@dataclass(frozen=True, eq=False)
class MatrixSensing(Landscape):
    """Symmetric matrix sensing: L(U) = mean_i (y_i - <A_i, U U^T>)^2 / 2.

    With symmetric A_i and residuals r_i = y_i - <A_i, U U^T>:

    grad(U)   = -(2/M) sum_i r_i A_i U
    d^2 L_i / dU_ab^2 = 4 (A_i U)_ab^2 - 2 r_i (A_i)_aa
    trace(U)  = (1/M) sum_i [4 |A_i U|_F^2 - 2 n r_i tr(A_i)]
    grad trace(U) = (1/M) [8 sum_i A_i^2 + 4 n sum_i tr(A_i) A_i] U

    Parameters are U.ravel() (row-major), U in R^{n x n}.
    """

    a_train: np.ndarray
    y_train: np.ndarray
    a_test: np.ndarray
    y_test: np.ndarray
    x_star: np.ndarray
    meta: dict = field(default_factory=dict)

    has_per_example = True
    has_test_set = True

    def __post_init__(self):
        m, n, n2 = self.a_train.shape
        if n != n2 or self.y_train.shape != (m,):
            raise ValueError("measurement shapes inconsistent")
        tr_a = np.trace(self.a_train, axis1=1, axis2=2)
        a_sq_sum = np.einsum("mij,mjk->ik", self.a_train, self.a_train)
        tr_weighted = np.einsum("m,mij->ij", tr_a, self.a_train)
        object.__setattr__(self, "_tr_a", tr_a)
        object.__setattr__(self, "_trace_grad_mat", (8.0 * a_sq_sum + 4.0 * n * tr_weighted) / m)

    @property
    def n(self) -> int:
        return self.a_train.shape[1]

    @property
    def dim(self) -> int:
        return self.n * self.n

    @property
    def n_examples(self) -> int:
        return self.a_train.shape[0]

    def as_matrix(self, w):
        return self._check(w).reshape(self.n, self.n)

    def _measure(self, a_set, mat_u):
        return np.einsum("mij,ij->m", a_set, mat_u @ mat_u.T)

    def loss(self, w):
        mat_u = self.as_matrix(w)
        r = self.y_train - self._measure(self.a_train, mat_u)
        return float(r @ r) / (2.0 * self.n_examples)

    def grad(self, w):
        mat_u = self.as_matrix(w)
        r = self.y_train - self._measure(self.a_train, mat_u)
        weighted = np.einsum("m,mij->ij", r, self.a_train)
        return (-2.0 / self.n_examples) * (weighted @ mat_u).ravel()

    def hessian_trace(self, w):
        mat_u = self.as_matrix(w)
        r = self.y_train - self._measure(self.a_train, mat_u)
        au = np.einsum("mij,jk->mik", self.a_train, mat_u)
        frob = np.einsum("mik,mik->m", au, au)
        return float(np.sum(4.0 * frob - 2.0 * self.n * r * self._tr_a)) / self.n_examples

    def hessian_trace_grad(self, w):
        mat_u = self.as_matrix(w)
        return (self._trace_grad_mat @ mat_u).ravel()

    def per_example_grad(self, w, indices):
        mat_u = self.as_matrix(w)
        indices = np.asarray(indices)
        if indices.size == 0:
            raise ValueError("empty batch")
        a_b = self.a_train[indices]
        r = self.y_train[indices] - self._measure(a_b, mat_u)
        weighted = np.einsum("m,mij->ij", r, a_b)
        return (-2.0 / indices.size) * (weighted @ mat_u).ravel()

    def test_loss(self, w):
        mat_u = self.as_matrix(w)
        r = self.y_test - self._measure(self.a_test, mat_u)
        return float(r @ r) / (2.0 * self.a_test.shape[0])


@dataclass(frozen=True)
class ZeroLoss(Landscape):
    """L == 0; isolates the pure noise dynamics of an optimizer."""

    n: int

    @property
    def dim(self) -> int:
        return self.n

    def loss(self, w):
        self._check(w)
        return 0.0

    def grad(self, w):
        w = self._check(w)
        return np.zeros_like(w)

    def hessian_trace(self, w):
        self._check(w)
        return 0.0

    def hessian_trace_grad(self, w):
        w = self._check(w)
        return np.zeros_like(w)


@dataclass(frozen=True, eq=False)
class DiagQuadratic(Landscape):
    """L(w) = sum_i lam_i w_i^2 / 2; constant Hessian diag(lam)."""

    curvatures: np.ndarray

    def __post_init__(self):
        lam = np.atleast_1d(np.asarray(self.curvatures, dtype=np.float64))
        object.__setattr__(self, "curvatures", lam)

    @property
    def dim(self) -> int:
        return self.curvatures.shape[0]

    def loss(self, w):
        w = self._check(w)
        return 0.5 * float(self.curvatures @ (w * w))

    def grad(self, w):
        w = self._check(w)
        return self.curvatures * w

    def hessian_trace(self, w):
        self._check(w)
        return float(self.curvatures.sum())

    def hessian_trace_grad(self, w):
        w = self._check(w)
        return np.zeros_like(w)


def gen_quad_regression(d=100, m_train=40, n_nonzero=10, m_test=100, seed=0) -> QuadRegression:
    """Generate a quadratic-regression dataset (deterministic in seed).

    X_train and X_test have i.i.d. standard normal entries (drawn in that
    order from one Philox stream); w_star has n_nonzero leading ones and the
    targets interpolate exactly: y = X (w_star .* w_star).
    """
    if not (1 <= n_nonzero <= d):
        raise ValueError("need 1 <= n_nonzero <= d")
    if m_train < 1 or m_test < 1:
        raise ValueError("need m_train, m_test >= 1")
    rng = np.random.Generator(np.random.Philox(key=seed))
    x_train = rng.standard_normal((m_train, d))
    x_test = rng.standard_normal((m_test, d))
    w_star = np.zeros(d)
    w_star[:n_nonzero] = 1.0
    sq = w_star * w_star
    meta = {
        "kind": "quad_regression",
        "seed": int(seed),
        "params": {"d": d, "m_train": m_train, "n_nonzero": n_nonzero, "m_test": m_test},
    }
    return QuadRegression(x_train, x_train @ sq, x_test, x_test @ sq, w_star, meta)


def gen_matrix_sensing(n=20, rank=5, m_train=100, noise_std=0.01, m_test=100, seed=0) -> MatrixSensing:
    """Generate a matrix-sensing dataset (deterministic in seed).

    X_star = V V^T with standard-normal V (n x rank), normalized to unit
    spectral norm. Measurement matrices are symmetrized standard normal;
    labels are <A_i, X_star> plus N(0, noise_std^2) corruption. Test
    measurements are freshly sampled from the same process. Draw order:
    V, A_train, train noise, A_test, test noise.
    """
    if not (1 <= rank <= n):
        raise ValueError("need 1 <= rank <= n")
    if m_train < 1 or m_test < 1:
        raise ValueError("need m_train, m_test >= 1")
    rng = np.random.Generator(np.random.Philox(key=seed))
    v_star = rng.standard_normal((n, rank))
    x_star = v_star @ v_star.T
    x_star /= np.linalg.norm(x_star, ord=2)

    def measurements(count):
        raw = rng.standard_normal((count, n, n))
        a_set = 0.5 * (raw + raw.transpose(0, 2, 1))
        y = np.einsum("mij,ij->m", a_set, x_star)
        if noise_std > 0:
            y = y + noise_std * rng.standard_normal(count)
        return a_set, y

    a_train, y_train = measurements(m_train)
    a_test, y_test = measurements(m_test)
    meta = {
        "kind": "matrix_sensing",
        "seed": int(seed),
        "params": {
            "n": n,
            "rank": rank,
            "m_train": m_train,
            "noise_std": noise_std,
            "m_test": m_test,
        },
    }
    return MatrixSensing(a_train, y_train, a_test, y_test, x_star, meta)


# ---------------------------------------------------------------------------
# Dataset serialization: CSV matrices + a JSON manifest with seed and shapes.
# ---------------------------------------------------------------------------

_FMT = "%.17g"  # round-trips float64 exactly


def _save_csv(path: Path, arr: np.ndarray):
    np.savetxt(path, np.atleast_2d(arr), fmt=_FMT, delimiter=",")


def _load_csv(path: Path, shape):
    arr = np.loadtxt(path, delimiter=",", ndmin=2)
    return arr.reshape(shape)


def save_dataset(landscape: Landscape, out_dir) -> Path:
    """Write a generated dataset as CSV matrices plus meta.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if isinstance(landscape, QuadRegression):
        files = {
            "x_train": landscape.x_train,
            "y_train": landscape.y_train,
            "x_test": landscape.x_test,
            "y_test": landscape.y_test,
            "w_star": landscape.w_star,
        }
    elif isinstance(landscape, MatrixSensing):
        m, n, _ = landscape.a_train.shape
        files = {
            "a_train": landscape.a_train.reshape(m, n * n),
            "y_train": landscape.y_train,
            "a_test": landscape.a_test.reshape(landscape.a_test.shape[0], n * n),
            "y_test": landscape.y_test,
            "x_star": landscape.x_star,
        }
    else:
        raise ValueError(f"{type(landscape).__name__} has no dataset to serialize")
    meta = dict(landscape.meta)
    meta["format"] = "antipgd-dataset-v1"
    meta["shapes"] = {name: list(arr.shape) for name, arr in files.items()}
    for name, arr in files.items():
        _save_csv(out / f"{name}.csv", arr)
    (out / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return out


def load_dataset(path) -> Landscape:
    """Reconstruct a landscape from ``save_dataset`` output."""
    path = Path(path)
    meta = json.loads((path / "meta.json").read_text())
    shapes = meta["shapes"]
    if meta["kind"] == "quad_regression":
        return QuadRegression(
            _load_csv(path / "x_train.csv", shapes["x_train"]),
            _load_csv(path / "y_train.csv", shapes["y_train"]),
            _load_csv(path / "x_test.csv", shapes["x_test"]),
            _load_csv(path / "y_test.csv", shapes["y_test"]),
            _load_csv(path / "w_star.csv", shapes["w_star"]),
            meta,
        )
    if meta["kind"] == "matrix_sensing":
        m, nsq = shapes["a_train"]
        n = int(round(nsq**0.5))
        return MatrixSensing(
            _load_csv(path / "a_train.csv", (m, n, n)),
            _load_csv(path / "y_train.csv", shapes["y_train"]),
            _load_csv(path / "a_test.csv", (shapes["a_test"][0], n, n)),
            _load_csv(path / "y_test.csv", shapes["y_test"]),
            _load_csv(path / "x_star.csv", shapes["x_star"]),
            meta,
        )
    raise ValueError(f"unknown dataset kind {meta['kind']!r}")
