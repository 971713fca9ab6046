"""Update rules and the run loop for noise-injected gradient descent.

Variants (all sharing one step skeleton w <- w - eta * g + eps):

* ``gd``             -- eps = 0.
* ``pgd``            -- eps = xi_{n+1}, i.i.d. raw draws.
* ``anti_pgd``       -- eps = xi_{n+1} - xi_n; xi_0 is drawn when injection
  starts, so the first applied perturbation is xi_1 - xi_0.
* ``sgd``/``anti_sgd`` -- gradient replaced by a mini-batch gradient
  (shuffle per epoch, without replacement); anti_sgd also adds the
  anticorrelated increment.
* ``label_noise_gd`` -- full-batch gradient of the loss with targets shifted
  by one shared scalar draw per step (no parameter perturbation).

Noise is injected only for steps in [start_step, stop_step); outside the
window every variant reduces to its noiseless gradient step. Runs on the
widening valley with gd/pgd/anti_pgd dispatch to the compiled kernel.

The change-of-variables form z_{n+1} = z_n - eta grad L(z_n + xi_n) is in
``run_zform``; with a shared raw stream its iterates satisfy
z_n = w_n - xi_n up to rounding.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .landscapes import Landscape, WideningValley
from .noise import NoiseSpec, NoiseStream, derive_seed

__all__ = [
    "VARIANTS",
    "LOSS_CAP",
    "InitSpec",
    "RunConfig",
    "Trajectory",
    "run",
    "run_zform",
    "make_initial_point",
]

VARIANTS = ("gd", "pgd", "anti_pgd", "sgd", "anti_sgd", "label_noise_gd")
LOSS_CAP = 1e12  # train loss beyond this flags divergence and halts the run

_PARAM_NOISE = {"pgd", "anti_pgd", "anti_sgd"}
_ANTI = {"anti_pgd", "anti_sgd"}
_BATCHED = {"sgd", "anti_sgd"}
_REQUIRED_CORRELATION = {
    "pgd": "uncorrelated",
    "sgd": "uncorrelated",
    "label_noise_gd": "uncorrelated",
    "anti_pgd": "anticorrelated",
    "anti_sgd": "anticorrelated",
}


@dataclass(frozen=True)
class InitSpec:
    """Initial-point policy.

    kind:
      * ``gaussian``     -- i.i.d. N(0, scale^2) coordinates.
      * ``valley_floor`` -- (u_0, 0) with |u_0|^2 = u_sqnorm and uniformly
        random direction (landscapes with a (u, v) split only).
      * ``point``        -- explicit coordinates.
      * ``zeros``
    """

    kind: str = "gaussian"
    scale: float = 1.0
    u_sqnorm: float = 10.0
    values: tuple = ()

    def __post_init__(self):
        if self.kind not in ("gaussian", "valley_floor", "point", "zeros"):
            raise ValueError(f"unknown init kind {self.kind!r}")


def make_initial_point(init: InitSpec, landscape: Landscape, rng: np.random.Generator) -> np.ndarray:
    if init.kind == "gaussian":
        return init.scale * rng.standard_normal(landscape.dim)
    if init.kind == "valley_floor":
        if not landscape.has_uv_split:
            raise ValueError("valley_floor init needs a (u, v) landscape")
        w = np.zeros(landscape.dim)
        direction = rng.standard_normal(landscape.dim - 1)
        w[:-1] = direction * (np.sqrt(init.u_sqnorm) / np.linalg.norm(direction))
        return w
    if init.kind == "point":
        w = np.asarray(init.values, dtype=np.float64)
        if w.shape != (landscape.dim,):
            raise ValueError(f"init point has shape {w.shape}, expected ({landscape.dim},)")
        return w.copy()
    return np.zeros(landscape.dim)


@dataclass(frozen=True)
class RunConfig:
    """Full specification of one run.

    ``noise`` is a NoiseSpec template: its dim may be 0 (resolved to the
    landscape dimension, or 1 for label noise) and its seed is replaced by
    ``derive_seed(base_seed, name, run_index)`` at run time. The batch rng
    and the initial point use independent derived streams; the init stream
    depends only on (base_seed, run_index) so different variants start from
    the same point under one seed.
    """

    name: str
    variant: str
    eta: float
    steps: int
    noise: NoiseSpec | None = None
    start_step: int = 0
    stop_step: int | None = None
    batch: int | None = None
    record_every: int = 1
    init: InitSpec = field(default_factory=InitSpec)
    record_reg_grad: bool = False
    snapshot_steps: tuple = ()

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.eta <= 0:
            raise ValueError("eta must be > 0")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")
        stop = self.steps if self.stop_step is None else self.stop_step
        if not 0 <= self.start_step <= stop <= self.steps:
            raise ValueError("need 0 <= start_step <= stop_step <= steps")
        if self.variant != "gd" and self.noise is None:
            raise ValueError(f"variant {self.variant!r} needs a noise spec")
        if self.noise is not None:
            want = _REQUIRED_CORRELATION.get(self.variant)
            if want and self.noise.correlation != want:
                raise ValueError(
                    f"{self.variant} requires {want} noise, got {self.noise.correlation}"
                )

    @property
    def noise_window(self) -> tuple[int, int]:
        return self.start_step, self.steps if self.stop_step is None else self.stop_step

    def validate_for(self, landscape: Landscape):
        if self.batch is not None:
            if not landscape.has_per_example:
                raise ValueError("mini-batching needs per-example structure")
            if not 1 <= self.batch <= landscape.n_examples:
                raise ValueError("batch size must be in [1, n_examples]")
        if self.variant in _BATCHED and self.batch is None:
            raise ValueError(f"{self.variant} needs a batch size")
        if self.variant == "label_noise_gd" and not landscape.has_model_outputs:
            raise ValueError("label noise needs model outputs")

    def resolved_noise(self, landscape: Landscape, seed: int) -> NoiseSpec:
        want_dim = 1 if self.variant == "label_noise_gd" else landscape.dim
        if self.noise.dim not in (0, want_dim):
            raise ValueError(f"noise dim {self.noise.dim} != landscape dim {want_dim}")
        return replace(self.noise, dim=want_dim, seed=seed)


@dataclass
class Trajectory:
    """Recorded time series of one run (NaN where a metric does not apply)."""

    steps: np.ndarray
    train_loss: np.ndarray
    test_loss: np.ndarray
    hessian_trace: np.ndarray
    u_sqnorm: np.ndarray
    reg_grad_sqnorm: np.ndarray
    final_w: np.ndarray
    final_step: int
    diverged: bool
    diverged_at: int | None
    snapshots: dict
    seed: int

    def column(self, name: str) -> np.ndarray:
        return getattr(self, name)


_METRICS = ("train_loss", "test_loss", "hessian_trace", "u_sqnorm", "reg_grad_sqnorm")


class _Recorder:
    def __init__(self, landscape: Landscape, sigma2: float, record_reg_grad: bool):
        self.landscape = landscape
        self.sigma2 = sigma2
        self.record_reg_grad = record_reg_grad
        self.rows: list[tuple] = []

    def metrics(self, w) -> tuple:
        lsc = self.landscape
        train = lsc.loss(w)
        test = lsc.test_loss(w) if lsc.has_test_set else np.nan
        trace = lsc.hessian_trace(w)
        usq = lsc.u_sqnorm(w) if lsc.has_uv_split else np.nan
        if self.record_reg_grad:
            from .diagnostics import ModifiedLossSpec, modified_grad

            g = modified_grad(ModifiedLossSpec(lsc, self.sigma2), w)
            reg = float(g @ g)
        else:
            reg = np.nan
        return train, test, trace, usq, reg

    def record(self, step: int, w) -> bool:
        """Append a row; returns False (and drops the row) on divergence."""
        vals = self.metrics(w)
        finite = all(np.isfinite(v) or np.isnan(v) for v in vals)
        if not finite or not (vals[0] <= LOSS_CAP):
            return False
        self.rows.append((step, *vals))
        return True

    def valley_record(self, step: int, usq: float, v: float) -> bool:
        train = 0.5 * v * v * usq
        if not (np.isfinite(train) and train <= LOSS_CAP):
            return False
        d = self.landscape.dim - 1
        self.rows.append((step, train, np.nan, d * v * v + usq, usq, np.nan))
        return True


def _build_trajectory(rec: _Recorder, w, final_step, diverged, diverged_at, snaps, seed) -> Trajectory:
    rows = rec.rows
    steps = np.array([r[0] for r in rows], dtype=np.int64)
    cols = {m: np.array([r[i + 1] for r in rows]) for i, m in enumerate(_METRICS)}
    return Trajectory(
        steps=steps,
        final_w=np.asarray(w, dtype=np.float64).copy(),
        final_step=final_step,
        diverged=diverged,
        diverged_at=diverged_at,
        snapshots=snaps,
        seed=seed,
        **cols,
    )


def _record_steps(n_steps: int, every: int) -> list[int]:
    marks = list(range(0, n_steps + 1, every))
    if marks[-1] != n_steps:
        marks.append(n_steps)
    return marks


def run(config: RunConfig, landscape: Landscape, base_seed: int, run_index: int = 0) -> Trajectory:
    """Execute one seeded run and return its recorded trajectory.

    Metrics are recorded at steps 0, record_every, 2*record_every, ... and
    at the final step. A non-finite gradient or a recorded train loss above
    LOSS_CAP flags divergence and truncates the run.
    """
    config.validate_for(landscape)
    init_rng = np.random.Generator(np.random.Philox(key=derive_seed(base_seed, "init", run_index)))
    w = make_initial_point(config.init, landscape, init_rng)
    noise_seed = derive_seed(base_seed, config.name, run_index)

    stream = None
    if config.variant != "gd" and config.noise is not None:
        stream = NoiseStream(config.resolved_noise(landscape, noise_seed))
    sigma2 = 0.0 if config.noise is None else config.noise.variance
    rec = _Recorder(landscape, sigma2, config.record_reg_grad)

    fast = (
        isinstance(landscape, WideningValley)
        and config.variant in ("gd", "pgd", "anti_pgd")
        and config.batch is None
        and not config.record_reg_grad
    )
    if fast:
        return _run_valley(config, landscape, w, stream, rec, noise_seed)
    return _run_generic(config, landscape, w, stream, rec, noise_seed)


def _run_generic(config, landscape, w, stream, rec, noise_seed) -> Trajectory:
    start, stop = config.noise_window
    n_steps = config.steps
    marks = set(_record_steps(n_steps, config.record_every))
    snapshot_at = set(config.snapshot_steps)
    snaps = {}
    if 0 in snapshot_at:
        snaps[0] = w.copy()

    batcher = None
    if config.batch is not None:
        batcher = _Batcher(landscape.n_examples, config.batch, derive_seed(noise_seed, "batch"))

    primed = False
    diverged = False
    diverged_at = None
    for n in range(n_steps):
        if n in marks and not rec.record(n, w):
            diverged, diverged_at = True, n
            break

        noise_active = start <= n < stop and config.variant != "gd"
        if config.variant == "label_noise_gd" and noise_active:
            g = landscape.grad_label_noised(w, float(stream.next_xi()[0]))
        elif config.variant in _BATCHED:
            g = landscape.per_example_grad(w, batcher.next_batch())
        else:
            g = landscape.grad(w)
        if not np.all(np.isfinite(g)):
            diverged, diverged_at = True, n
            break

        w = w - config.eta * g
        if noise_active and config.variant in _PARAM_NOISE:
            if config.variant in _ANTI and not primed:
                stream.next_xi()
                primed = True
            w = w + stream.next_perturbation()
        if n + 1 in snapshot_at:
            snaps[n + 1] = w.copy()
    else:
        if not rec.record(n_steps, w):
            diverged, diverged_at = True, n_steps
    final_step = diverged_at if diverged else n_steps
    return _build_trajectory(rec, w, final_step, diverged, diverged_at, snaps, noise_seed)


def _run_valley(config, landscape, w, stream, rec, noise_seed) -> Trajectory:
    d = landscape.d
    eta = config.eta
    start, stop = config.noise_window
    n_steps = config.steps
    noisy = config.variant in ("pgd", "anti_pgd") and stream is not None

    marks = _record_steps(n_steps, config.record_every)
    bounds = set(marks) | set(config.snapshot_steps) | {n_steps}
    if noisy:
        bounds |= {start, stop}
    bounds = sorted(b for b in bounds if 0 <= b <= n_steps)
    snapshot_at = set(config.snapshot_steps)

    u = w[:d].copy()
    v = float(w[d])
    marks = set(marks)
    snaps = {}
    primed = False
    diverged = False
    diverged_at = None

    def emit(step):
        nonlocal diverged, diverged_at
        if step in snapshot_at:
            snaps[step] = np.append(u, v)
        if step in marks and not diverged:
            if not rec.valley_record(step, float(u @ u), v):
                diverged, diverged_at = True, step

    emit(0)
    pos = 0
    for b in bounds:
        if b <= pos or diverged:
            continue
        length = b - pos
        active = noisy and start <= pos < stop
        if active:
            if config.variant == "anti_pgd" and not primed:
                stream.next_xi()
                primed = True
            eps = stream.next_perturbation_block(length)
        else:
            eps = np.zeros((length, d + 1))
        done, v, div = kernels.valley_block(u, v, eta, eps, LOSS_CAP)
        pos += done
        if div:
            diverged, diverged_at = True, pos
            # keep the final (finite-loss-capped) state; drop no rows
            break
        emit(pos)

    w_out = np.append(u, v)
    final_step = pos
    return _build_trajectory(rec, w_out, final_step, diverged, diverged_at, snaps, noise_seed)


class _Batcher:
    """Shuffle-per-epoch mini-batch index source (without replacement)."""

    def __init__(self, n_examples: int, batch: int, seed: int):
        self.n = n_examples
        self.batch = batch
        self.rng = np.random.Generator(np.random.Philox(key=seed))
        self._order = None
        self._pos = 0

    def next_batch(self) -> np.ndarray:
        if self._order is None or self._pos >= self.n:
            self._order = self.rng.permutation(self.n)
            self._pos = 0
        out = self._order[self._pos : self._pos + self.batch]
        self._pos += self.batch
        return out


@dataclass
class ZTrajectory:
    """Iterates of the change-of-variables run."""

    reg_grad_sqnorm: np.ndarray
    final_z: np.ndarray
    final_step: int
    zs: np.ndarray | None
    seed: int


def run_zform(
    config: RunConfig,
    landscape: Landscape,
    base_seed: int,
    run_index: int = 0,
    keep_path: bool = False,
) -> ZTrajectory:
    """Run z_{n+1} = z_n - eta grad L(z_n + xi_n) with raw i.i.d. draws.

    Seeding matches ``run`` (same derived init and noise streams), and the
    raw-draw consumption is aligned with the anti_pgd w-form: xi_0 at
    initialization, one fresh draw per step. z_0 = w_0 - xi_0, and
    thereafter z_n = w_n - xi_n up to rounding.

    Per-step squared norms of the trace-regularized gradient
    grad L(z) + (sigma^2/2) grad tr(Hess L)(z) are always recorded (the
    running average is the convergence diagnostic for this scheme).
    """
    if config.variant != "anti_pgd" or config.noise is None:
        raise ValueError("the z-form runner is defined for anti_pgd configs with a noise spec")
    config.validate_for(landscape)
    init_rng = np.random.Generator(np.random.Philox(key=derive_seed(base_seed, "init", run_index)))
    w0 = make_initial_point(config.init, landscape, init_rng)
    noise_seed = derive_seed(base_seed, config.name, run_index)
    stream = NoiseStream(config.resolved_noise(landscape, noise_seed))

    from .diagnostics import ModifiedLossSpec, modified_grad

    spec = ModifiedLossSpec(landscape, config.noise.variance)
    xi = stream.next_xi()
    z = w0 - xi
    n_steps = config.steps
    reg = np.empty(n_steps)
    zs = np.empty((n_steps + 1, landscape.dim)) if keep_path else None
    if keep_path:
        zs[0] = z
    for n in range(n_steps):
        mg = modified_grad(spec, z)
        reg[n] = float(mg @ mg)
        z = z - config.eta * landscape.grad(z + xi)
        xi = stream.next_xi()
        if keep_path:
            zs[n + 1] = z
    return ZTrajectory(reg, z, n_steps, zs, noise_seed)
