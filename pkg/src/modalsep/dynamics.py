"""Linear multi-DOF structural dynamics: models, exact modes, Newmark simulation."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import NonClassicalDamping, NotPositiveDefinite, SingularEffectiveStiffness

_SYM_RTOL = 1e-12
_RAYLEIGH_TOL = 1e-8


@dataclass
class SystemModel:
    """Mass, stiffness and damping matrices of an n-DOF linear system.

    ``rayleigh_alpha``/``rayleigh_beta`` record the proportional-damping
    coefficients that ``damping`` was built from (see :meth:`from_rayleigh`).
    """

    mass: np.ndarray
    stiffness: np.ndarray
    damping: np.ndarray
    rayleigh_alpha: float = 0.0
    rayleigh_beta: float = 0.0

    def __post_init__(self):
        self.mass = np.atleast_2d(np.asarray(self.mass, dtype=float))
        self.stiffness = np.atleast_2d(np.asarray(self.stiffness, dtype=float))
        self.damping = np.atleast_2d(np.asarray(self.damping, dtype=float))
        n = self.mass.shape[0]
        for name in ("mass", "stiffness", "damping"):
            mat = getattr(self, name)
            if mat.shape != (n, n):
                raise ValueError(f"{name} must be {n}x{n}, got {mat.shape}")
        for name in ("mass", "stiffness"):
            mat = getattr(self, name)
            scale = max(np.abs(mat).max(), np.finfo(float).tiny)
            if np.abs(mat - mat.T).max() > _SYM_RTOL * scale:
                raise ValueError(f"{name} matrix is not symmetric")
        if self.rayleigh_alpha < 0 or self.rayleigh_beta < 0:
            raise ValueError("Rayleigh coefficients must be non-negative")

    @classmethod
    def from_rayleigh(cls, mass, stiffness, alpha=0.0, beta=0.0) -> "SystemModel":
        mass = np.asarray(mass, dtype=float)
        stiffness = np.asarray(stiffness, dtype=float)
        return cls(mass, stiffness, alpha * mass + beta * stiffness, alpha, beta)

    @property
    def n_dof(self) -> int:
        return self.mass.shape[0]


@dataclass
class ModalTruth:
    frequencies: np.ndarray  # Hz, ascending
    damping_ratios: np.ndarray
    damped_frequencies: np.ndarray  # Hz
    shapes: np.ndarray  # column i is mode i, mass-normalized

    def to_dict(self) -> dict:
        return {
            "frequencies": self.frequencies.tolist(),
            "damping_ratios": self.damping_ratios.tolist(),
            "damped_frequencies": self.damped_frequencies.tolist(),
            "shapes": self.shapes.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModalTruth":
        return cls(*(np.asarray(d[k], dtype=float) for k in
                     ("frequencies", "damping_ratios", "damped_frequencies", "shapes")))


@dataclass
class ExcitationSpec:
    kind: str = "gaussian-white"  # or "none"
    std_per_dof: np.ndarray | float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("gaussian-white", "none"):
            raise ValueError(f"unknown excitation kind {self.kind!r}")
        if np.any(np.asarray(self.std_per_dof) < 0):
            raise ValueError("std_per_dof must be non-negative")

    def forces(self, n_samples: int, n_dof: int) -> np.ndarray:
        """Sampled force history, shape (n_samples, n_dof)."""
        if self.kind == "none":
            return np.zeros((n_samples, n_dof))
        std = np.broadcast_to(np.asarray(self.std_per_dof, dtype=float), (n_dof,))
        rng = np.random.default_rng(self.seed)
        return rng.standard_normal((n_samples, n_dof)) * std


@dataclass
class ResponseRecord:
    samples: np.ndarray  # (N, m)
    sample_rate: float
    channel_labels: list[str] = field(default_factory=list)
    quantity: str = "acceleration"
    units: str = "m/s^2"
    seed: int | None = None
    # per-channel divisor applied by standardization; multiply shapes by it to unscale
    channel_scale: np.ndarray | None = None

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.ndim == 1:
            self.samples = self.samples[:, None]
        if self.samples.shape[0] < 2:
            raise ValueError("a response record needs at least 2 samples")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("response record contains non-finite values")
        if not self.sample_rate > 0:
            raise ValueError("sample_rate must be positive")
        if not self.channel_labels:
            self.channel_labels = [f"ch{i + 1}" for i in range(self.samples.shape[1])]
        if len(self.channel_labels) != self.samples.shape[1]:
            raise ValueError("one label per channel required")

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def n_channels(self) -> int:
        return self.samples.shape[1]

    @property
    def time(self) -> np.ndarray:
        return np.arange(self.n_samples) / self.sample_rate


def _sign_normalize(shapes: np.ndarray) -> np.ndarray:
    """Flip columns so the largest-magnitude entry is positive (first index on ties)."""
    idx = np.argmax(np.abs(shapes), axis=0)
    signs = np.sign(shapes[idx, np.arange(shapes.shape[1])])
    signs[signs == 0] = 1.0
    return shapes * signs


def eigen_modes(model: SystemModel) -> ModalTruth:
    """Exact undamped modes of a classically damped system.

    Solves K phi = w^2 M phi through the Cholesky factor of M, so the
    returned shapes are mass-normalized. Damping ratios follow from the
    Rayleigh coefficients: zeta = alpha / (2 w) + beta w / 2.
    """
    alpha, beta = model.rayleigh_alpha, model.rayleigh_beta
    expected = alpha * model.mass + beta * model.stiffness
    scale = max(1.0, np.abs(expected).max())
    if np.abs(model.damping - expected).max() > _RAYLEIGH_TOL * scale:
        raise NonClassicalDamping(
            "damping is not alpha*M + beta*K for the stored Rayleigh coefficients")
    try:
        chol = sla.cholesky(model.mass, lower=True)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite("mass matrix is not positive definite") from exc

    # L^-1 K L^-T, symmetrized against round-off
    tmp = sla.solve_triangular(chol, model.stiffness, lower=True)
    a = sla.solve_triangular(chol, tmp.T, lower=True)
    a = 0.5 * (a + a.T)
    lam, y = np.linalg.eigh(a)
    shapes = sla.solve_triangular(chol.T, y, lower=False)
    order = np.argsort(lam)
    lam, shapes = lam[order], shapes[:, order]
    omega = np.sqrt(np.clip(lam, 0.0, None))

    with np.errstate(divide="ignore"):
        zeta = np.where(omega > 0, alpha / (2 * omega) + beta * omega / 2, np.inf if alpha else 0.0)
    freqs = omega / (2 * np.pi)
    damped = freqs * np.sqrt(np.clip(1 - zeta**2, 0.0, None))
    return ModalTruth(freqs, zeta, damped, _sign_normalize(shapes))


def newmark_apparent_frequencies(frequencies, sample_rate: float) -> np.ndarray:
    """Oscillation frequencies seen in average-acceleration Newmark output.

    The trapezoidal scheme maps a continuous frequency w to
    (2/dt) * arctan(w dt / 2), i.e. the period elongation of the integrator.
    """
    dt = 1.0 / sample_rate
    omega = 2 * np.pi * np.asarray(frequencies, dtype=float)
    return (2.0 / dt) * np.arctan(omega * dt / 2) / (2 * np.pi)


def benchmark_4dof(alpha: float = 0.1, beta: float = 0.0) -> SystemModel:
    """The 4-DOF spring-mass chain with mass-proportional damping."""
    mass = np.diag([1.0, 2.0, 3.0, 4.0])
    stiffness = np.array([
        [1000.0, -800.0, 0.0, 0.0],
        [-800.0, 2400.0, -1600.0, 0.0],
        [0.0, -1600.0, 4800.0, -3200.0],
        [0.0, 0.0, -3200.0, 8000.0],
    ])
    return SystemModel.from_rayleigh(mass, stiffness, alpha, beta)


@dataclass
class NewmarkResult:
    displacement: np.ndarray
    velocity: np.ndarray
    acceleration: np.ndarray


def newmark(model: SystemModel, force: np.ndarray, dt: float,
            x0=None, v0=None, gamma: float = 0.5, beta: float = 0.25) -> NewmarkResult:
    """Integrate M a + C v + K x = f(t_k) over the rows of ``force``."""
    force = np.atleast_2d(np.asarray(force, dtype=float))
    n_steps, n = force.shape
    if n != model.n_dof:
        raise ValueError(f"force has {n} columns, model has {model.n_dof} DOFs")
    M, C, K = model.mass, model.damping, model.stiffness
    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).copy()
    v = np.zeros(n) if v0 is None else np.asarray(v0, dtype=float).copy()
    a = np.linalg.solve(M, force[0] - C @ v - K @ x)

    a0 = 1.0 / (beta * dt * dt)
    a1 = gamma / (beta * dt)
    a2 = 1.0 / (beta * dt)
    a3 = 1.0 / (2 * beta) - 1.0
    a4 = gamma / beta - 1.0
    a5 = dt * (gamma / (2 * beta) - 1.0)
    k_eff = K + a1 * C + a0 * M
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", sla.LinAlgWarning)
            lu = sla.lu_factor(k_eff, check_finite=True)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise SingularEffectiveStiffness(str(exc)) from exc
    if np.any(np.abs(np.diag(lu[0])) <= np.finfo(float).eps * np.abs(k_eff).max()):
        raise SingularEffectiveStiffness("effective stiffness matrix is singular")

    X = np.empty((n_steps, n))
    V = np.empty((n_steps, n))
    A = np.empty((n_steps, n))
    X[0], V[0], A[0] = x, v, a
    for k in range(1, n_steps):
        rhs = force[k] + M @ (a0 * x + a2 * v + a3 * a) + C @ (a1 * x + a4 * v + a5 * a)
        x_new = sla.lu_solve(lu, rhs)
        a_new = a0 * (x_new - x) - a2 * v - a3 * a
        v = v + dt * ((1 - gamma) * a + gamma * a_new)
        x, a = x_new, a_new
        X[k], V[k], A[k] = x, v, a
    return NewmarkResult(X, V, A)


def newmark_integrate(model: SystemModel, excitation: ExcitationSpec, duration: float,
                      sample_rate: float, initial_state=None,
                      output: str = "acceleration") -> ResponseRecord:
    """Simulate the model under ``excitation`` and return the sampled response.

    ``initial_state`` is an optional ``(x0, v0)`` pair. ``output`` selects
    ``"acceleration"`` (default) or ``"displacement"``.
    """
    n_samples = int(round(duration * sample_rate))
    if n_samples < 2:
        raise ValueError("duration * sample_rate must be at least 2")
    if output not in ("acceleration", "displacement"):
        raise ValueError(f"unknown output {output!r}")
    fmax = eigen_modes(model).frequencies.max() if _is_classical(model) else None
    if fmax is not None and sample_rate <= 2 * fmax:
        warnings.warn(f"sample rate {sample_rate} Hz is below twice the highest "
                      f"natural frequency ({fmax:.3f} Hz)", stacklevel=2)
    x0, v0 = (None, None) if initial_state is None else initial_state
    force = excitation.forces(n_samples, model.n_dof)
    res = newmark(model, force, 1.0 / sample_rate, x0, v0)
    if output == "acceleration":
        data, units = res.acceleration, "m/s^2"
    else:
        data, units = res.displacement, "m"
    labels = [f"dof{i + 1}" for i in range(model.n_dof)]
    return ResponseRecord(data, sample_rate, labels, output, units, excitation.seed)


def _is_classical(model: SystemModel) -> bool:
    expected = model.rayleigh_alpha * model.mass + model.rayleigh_beta * model.stiffness
    return np.abs(model.damping - expected).max() <= _RAYLEIGH_TOL * max(1.0, np.abs(expected).max())


def mechanical_energy(model: SystemModel, x: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Kinetic plus strain energy for each row of ``x``/``v``."""
    x = np.atleast_2d(x)
    v = np.atleast_2d(v)
    return 0.5 * np.einsum("ti,ij,tj->t", v, model.mass, v) + \
        0.5 * np.einsum("ti,ij,tj->t", x, model.stiffness, x)
