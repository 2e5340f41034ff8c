"""Self-coding separation network.

Four layers, no biases::

    X (B x m) --W1^T--> H (B x m) --W2, tanh--> Q (B x n) --W3--> X_hat (B x m)

Training minimizes a composite loss of covariance, non-Gaussianity,
orthogonality and reconstruction terms with RMSProp. After training the
layer-3 outputs estimate the modal responses and the rows of W3 the mode
shapes.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .errors import DegenerateBatch, Diverged, RankDeficient, ShapeMismatch, ZeroVariance

_LN2 = math.log(2.0)
LOSS_TERMS = ("l_cov_h", "l_gauss", "l_orth_w1", "l_cov_q", "l_recon")


@dataclass
class NetworkConfig:
    input_dim: int
    separation_dim: int
    lambdas: tuple[float, float, float, float] = (0.1, 0.1, 0.1, 0.1)
    g_function: str = "G3"
    g_a1: float = 1.0
    learning_rate: float = 0.01
    rms_decay: float = 0.9
    rms_epsilon: float = 1e-8
    batch_size: int = 128
    epochs: int = 10000
    seed: int = 0

    def __post_init__(self):
        self.lambdas = tuple(float(v) for v in self.lambdas)
        if self.input_dim < 1 or self.separation_dim < 1:
            raise ValueError("layer dimensions must be positive")
        if self.separation_dim > self.input_dim:
            raise ValueError("separation_dim must not exceed input_dim")
        if len(self.lambdas) != 4 or not all(0.0 <= v <= 1.0 for v in self.lambdas):
            raise ValueError("lambdas must be four values in [0, 1]")
        if self.g_function not in _G_FUNCS:
            raise ValueError(f"g_function must be one of {sorted(_G_FUNCS)}")
        if not 1.0 <= self.g_a1 <= 2.0:
            raise ValueError("g_a1 must lie in [1, 2]")
        if self.learning_rate <= 0 or self.rms_epsilon <= 0:
            raise ValueError("learning_rate and rms_epsilon must be positive")
        if not 0.0 < self.rms_decay < 1.0:
            raise ValueError("rms_decay must lie in (0, 1)")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be positive and epochs non-negative")

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown network config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambdas"] = list(self.lambdas)
        return d


@dataclass
class NetworkParams:
    w1: np.ndarray  # (m, m)
    w2: np.ndarray  # (m, n)
    w3: np.ndarray  # (n, m)

    def __post_init__(self):
        self.w1 = np.asarray(self.w1, dtype=float)
        self.w2 = np.asarray(self.w2, dtype=float)
        self.w3 = np.asarray(self.w3, dtype=float)
        m = self.w1.shape[0]
        n = self.w2.shape[1] if self.w2.ndim == 2 else -1
        if self.w1.shape != (m, m) or self.w2.shape != (m, n) or self.w3.shape != (n, m):
            raise ShapeMismatch(
                f"inconsistent weight shapes {self.w1.shape}, {self.w2.shape}, {self.w3.shape}")

    @property
    def input_dim(self) -> int:
        return self.w1.shape[0]

    @property
    def separation_dim(self) -> int:
        return self.w2.shape[1]

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.w1, self.w2, self.w3

    def copy(self) -> "NetworkParams":
        return NetworkParams(self.w1.copy(), self.w2.copy(), self.w3.copy())

    def to_json(self) -> str:
        doc = {
            "input_dim": self.input_dim,
            "separation_dim": self.separation_dim,
            "w1": self.w1.ravel().tolist(),
            "w2": self.w2.ravel().tolist(),
            "w3": self.w3.ravel().tolist(),
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "NetworkParams":
        doc = json.loads(text)
        m, n = int(doc["input_dim"]), int(doc["separation_dim"])
        return cls(np.reshape(doc["w1"], (m, m)), np.reshape(doc["w2"], (m, n)),
                   np.reshape(doc["w3"], (n, m)))

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "NetworkParams":
        return cls.from_json(Path(path).read_text())


@dataclass
class Activations:
    h: np.ndarray  # layer 2, (B, m)
    z: np.ndarray  # layer 3 pre-activation, (B, n)
    q: np.ndarray  # layer 3, (B, n)
    x_hat: np.ndarray  # layer 4, (B, m)


@dataclass
class LossBreakdown:
    l_cov_h: float
    l_gauss: float
    l_orth_w1: float
    l_cov_q: float
    l_recon: float
    total: float

    def as_tuple(self) -> tuple[float, ...]:
        return tuple(getattr(self, k) for k in LOSS_TERMS) + (self.total,)


@dataclass
class OptimizerState:
    accum_g: tuple[np.ndarray, np.ndarray, np.ndarray]
    step: int = 0

    @classmethod
    def zeros_like(cls, params: NetworkParams) -> "OptimizerState":
        return cls(tuple(np.zeros_like(w) for w in params.arrays()), 0)


# ---------------------------------------------------------------------------
# contrast functions: value and derivative

def _g1(s, a1):
    # log2 cosh(a s) / a, overflow-safe
    val = (np.logaddexp(a1 * s, -a1 * s) - _LN2) / (a1 * _LN2)
    return val, np.tanh(a1 * s) / _LN2


def _g2(s, a1):
    e = np.exp(-0.5 * s * s)
    return -e, s * e


def _g3(s, a1):
    s2 = s * s
    return 0.25 * s2 * s2, s2 * s


_G_FUNCS = {"G1": _g1, "G2": _g2, "G3": _g3}


def contrast(s, g_function: str = "G3", a1: float = 1.0) -> np.ndarray:
    """Evaluate a non-Gaussianity contrast G elementwise."""
    return _G_FUNCS[g_function](np.asarray(s, dtype=float), a1)[0]


# ---------------------------------------------------------------------------

def _induced_l1(a: np.ndarray) -> tuple[float, int]:
    """Maximum absolute column sum and the (first) column attaining it."""
    sums = np.abs(a).sum(axis=0)
    k = int(np.argmax(sums))
    return float(sums[k]), k


def _cov_residual(y: np.ndarray):
    yc = y - y.mean(axis=0)
    cov = yc.T @ yc / (y.shape[0] - 1)
    return cov - np.eye(y.shape[1]), yc


def _check_batch(params: NetworkParams, batch: np.ndarray) -> np.ndarray:
    batch = np.atleast_2d(np.asarray(batch, dtype=float))
    if batch.shape[1] != params.input_dim:
        raise ShapeMismatch(f"batch has {batch.shape[1]} columns, network expects {params.input_dim}")
    return batch


def forward(params: NetworkParams, batch: np.ndarray, check_centered: bool = True) -> Activations:
    batch = _check_batch(params, batch)
    if check_centered and batch.shape[0] > 1:
        mean = np.abs(batch.mean(axis=0))
        scale = np.abs(batch).max(axis=0)
        if np.any(mean > 1e-6 * np.maximum(scale, 1e-300)):
            warnings.warn("forward() batch columns are not zero-mean", stacklevel=2)
    h = batch @ params.w1.T
    z = h @ params.w2
    q = np.tanh(z)
    return Activations(h, z, q, q @ params.w3)


def _loss_and_grad(params: NetworkParams, batch: np.ndarray, config: NetworkConfig,
                   need_grad: bool):
    batch = _check_batch(params, batch)
    b = batch.shape[0]
    if b < 2:
        raise DegenerateBatch("loss needs at least 2 rows in a batch")
    lam1, lam2, lam3, lam4 = config.lambdas
    w1, w2, w3 = params.arrays()
    m = w1.shape[0]
    act = forward(params, batch, check_centered=False)
    h, q, x_hat = act.h, act.q, act.x_hat

    res_h, hc = _cov_residual(h)
    l_cov_h, kh = _induced_l1(res_h)

    g_val, g_der = _G_FUNCS[config.g_function](h, config.g_a1)
    l_gauss, kg = _induced_l1(g_val)

    res_w = w1 @ w1.T - np.eye(m)
    l_orth, kw = _induced_l1(res_w)

    res_q, qc = _cov_residual(q)
    l_cov_q, kq = _induced_l1(res_q)

    resid = batch - x_hat
    l_recon = float(np.sum(resid * resid)) / b

    total = lam1 * l_cov_h + lam2 * l_gauss + lam3 * l_orth + lam4 * l_cov_q + l_recon
    breakdown = LossBreakdown(l_cov_h, l_gauss, l_orth, l_cov_q, l_recon, total)
    if not need_grad:
        return breakdown, None

    # d||A||_1 / dA is sign(A) on the maximizing column, zero elsewhere
    def col_sign(a, k):
        s = np.zeros_like(a)
        s[:, k] = np.sign(a[:, k])
        return s

    s_h = col_sign(res_h, kh)
    d_h = (lam1 / (b - 1)) * hc @ (s_h + s_h.T)
    d_h[:, kg] += lam2 * np.sign(g_val[:, kg]) * g_der[:, kg]

    s_w = col_sign(res_w, kw)
    d_w1 = lam3 * (s_w + s_w.T) @ w1

    s_q = col_sign(res_q, kq)
    d_q = (lam4 / (b - 1)) * qc @ (s_q + s_q.T)

    d_xhat = (-2.0 / b) * resid
    d_w3 = q.T @ d_xhat
    d_q += d_xhat @ w3.T
    d_z = d_q * (1.0 - q * q)
    d_w2 = h.T @ d_z
    d_h += d_z @ w2.T
    d_w1 += d_h.T @ batch
    return breakdown, NetworkParams(d_w1, d_w2, d_w3)


def loss(params: NetworkParams, batch: np.ndarray, config: NetworkConfig) -> LossBreakdown:
    """Evaluate the five loss terms and their weighted total on one batch.

    Matrix norms are induced 1-norms (maximum absolute column sum);
    covariances use the unbiased 1/(B-1) estimator with per-batch means.
    The reconstruction term is the summed squared error divided by B.
    """
    return _loss_and_grad(params, batch, config, need_grad=False)[0]


def gradients(params: NetworkParams, batch: np.ndarray, config: NetworkConfig) -> NetworkParams:
    """Exact (sub)gradient of the total loss, packed like the parameters.

    At kinks sign(0) = 0 and max ties resolve to the first column.
    """
    return _loss_and_grad(params, batch, config, need_grad=True)[1]


def loss_and_gradients(params, batch, config) -> tuple[LossBreakdown, NetworkParams]:
    return _loss_and_grad(params, batch, config, need_grad=True)


def rmsprop_step(params: NetworkParams, grads: NetworkParams, state: OptimizerState,
                 config: NetworkConfig) -> tuple[NetworkParams, OptimizerState]:
    """One RMSProp update; epsilon sits inside the square root."""
    decay, lr, eps = config.rms_decay, config.learning_rate, config.rms_epsilon
    new_w, new_acc = [], []
    for w, g, acc in zip(params.arrays(), grads.arrays(), state.accum_g):
        if acc.shape != w.shape:
            raise ShapeMismatch("optimizer state does not match parameter shapes")
        acc = decay * acc + (1.0 - decay) * g * g
        new_acc.append(acc)
        new_w.append(w - lr / np.sqrt(acc + eps) * g)
    return NetworkParams(*new_w), OptimizerState(tuple(new_acc), state.step + 1)


def init_params(config: NetworkConfig, rng: np.random.Generator) -> NetworkParams:
    m, n = config.input_dim, config.separation_dim
    bound = 1.0 / math.sqrt(m)
    w1 = rng.uniform(-bound, bound, (m, m))
    w2 = rng.uniform(-bound, bound, (m, n))
    w3 = rng.uniform(-bound, bound, (n, m))
    return NetworkParams(w1, w2, w3)


def _as_array(data) -> np.ndarray:
    samples = getattr(data, "samples", data)
    return np.atleast_2d(np.asarray(samples, dtype=float))


def train(data, config: NetworkConfig, callback=None) -> tuple[NetworkParams, list[LossBreakdown]]:
    """Fit the network by mini-batch RMSProp.

    ``data`` is a ResponseRecord or an (N, m) array; channels are centered
    internally. Each epoch reshuffles the rows with the seeded generator and
    records the batch-averaged loss terms. A final batch with a single row is
    skipped because its covariance is undefined.
    """
    x = _as_array(data)
    n_rows, m = x.shape
    if m != config.input_dim:
        raise ShapeMismatch(f"data has {m} channels, config expects {config.input_dim}")
    if config.batch_size > n_rows:
        raise ValueError(f"batch_size {config.batch_size} exceeds the {n_rows} available samples")
    if config.batch_size < 2:
        raise DegenerateBatch("batch_size must be at least 2")
    x = x - x.mean(axis=0)

    rng = np.random.default_rng(config.seed)
    params = init_params(config, rng)
    state = OptimizerState.zeros_like(params)
    trace: list[LossBreakdown] = []
    bs = config.batch_size
    for epoch in range(config.epochs):
        order = rng.permutation(n_rows)
        sums = np.zeros(6)
        count = 0
        for start in range(0, n_rows, bs):
            idx = order[start:start + bs]
            if idx.size < 2:
                continue
            breakdown, grads = _loss_and_grad(params, x[idx], config, need_grad=True)
            if not math.isfinite(breakdown.total):
                raise Diverged(f"loss became non-finite at epoch {epoch}")
            params, state = rmsprop_step(params, grads, state, config)
            sums += breakdown.as_tuple()
            count += 1
        mean = sums / count
        trace.append(LossBreakdown(*mean))
        if callback is not None:
            callback(epoch, trace[-1])
    if not all(np.all(np.isfinite(w)) for w in params.arrays()):
        raise Diverged("weights became non-finite")
    return params, trace


def save_trace_csv(trace: list[LossBreakdown], path) -> None:
    lines = ["epoch," + ",".join(LOSS_TERMS) + ",total"]
    for i, lb in enumerate(trace):
        lines.append(f"{i}," + ",".join(repr(float(v)) for v in lb.as_tuple()))
    Path(path).write_text("\n".join(lines) + "\n")


def load_trace_csv(path) -> list[LossBreakdown]:
    rows = Path(path).read_text().strip().splitlines()[1:]
    return [LossBreakdown(*(float(v) for v in r.split(",")[1:])) for r in rows]


# ---------------------------------------------------------------------------
# extraction

def max_abs_normalize(a: np.ndarray, axis: int = 0) -> np.ndarray:
    """Scale slices along ``axis`` to unit max-abs; all-zero slices stay zero."""
    peak = np.abs(a).max(axis=axis, keepdims=True)
    return np.divide(a, peak, out=np.zeros_like(a, dtype=float), where=peak > 0)


def sign_normalize_rows(shapes: np.ndarray) -> np.ndarray:
    """Max-abs normalize rows and flip each so its largest entry is +1."""
    shapes = np.atleast_2d(np.asarray(shapes, dtype=float))
    idx = np.argmax(np.abs(shapes), axis=1)
    signs = np.sign(shapes[np.arange(shapes.shape[0]), idx])
    signs[signs == 0] = 1.0
    return max_abs_normalize(shapes * signs[:, None], axis=1)


def extract_modal_responses(params: NetworkParams, data, normalize: bool = True) -> np.ndarray:
    """Layer-3 outputs for every sample of ``data`` (centered first).

    With ``normalize`` each column is scaled to unit max-abs for reporting.
    """
    x = _as_array(data)
    x = x - x.mean(axis=0)
    q = forward(params, x, check_centered=False).q
    return max_abs_normalize(q, axis=0) if normalize else q


def extract_mode_shapes(params: NetworkParams) -> np.ndarray:
    return sign_normalize_rows(params.w3)


def refit_shapes(selected_responses: np.ndarray, data, normalize: bool = True,
                 tol: float = 1e-10) -> np.ndarray:
    """Least-squares reconstruction weights for a fixed set of responses.

    This is the minimizer of the reconstruction loss over a new W3 with the
    layer-3 outputs held fixed. Returns a (k, m) array.
    """
    q = np.asarray(selected_responses, dtype=float)
    if q.ndim == 1:
        q = q[:, None]
    x = _as_array(data)
    if q.shape[0] != x.shape[0]:
        raise ShapeMismatch("responses and data must have the same number of samples")
    x = x - x.mean(axis=0)
    sv = np.linalg.svd(q, compute_uv=False)
    if sv.size == 0 or sv[0] == 0 or sv[-1] / sv[0] < tol:
        raise RankDeficient("selected responses are collinear")
    w3, *_ = np.linalg.lstsq(q, x, rcond=None)
    return sign_normalize_rows(w3) if normalize else w3


def negentropy_estimate(signal, g_function: str = "G3", mc_samples: int = 200_000,
                        seed: int = 0, a1: float = 1.0) -> float:
    """Approximate negentropy [E G(s) - E G(v)]^2 with a Monte Carlo Gaussian reference."""
    s = np.asarray(signal, dtype=float).ravel()
    sd = s.std()
    if not sd > 0:
        raise ZeroVariance("signal has zero variance")
    s = (s - s.mean()) / sd
    v = np.random.default_rng(seed).standard_normal(mc_samples)
    g = _G_FUNCS[g_function]
    return float((g(s, a1)[0].mean() - g(v, a1)[0].mean()) ** 2)
