"""Dense tanh networks, second-order forward-mode jets, parameter gradients.

Architectures follow the ``[20, 20, 1]`` notation: hidden widths followed by
the output width; the input width is supplied separately.  Weights are
stored ``(out, in)``.

Derivatives with respect to the network input are computed by pushing a
truncated Taylor jet (value, first and pure second derivative along one
input coordinate) through every layer.  The jet arithmetic is written with
plain array operators, so running it on :class:`~pde_arena.autodiff.Var`
leaves a tape that reverse mode can walk: parameter gradients of losses
built from Laplacians come out exactly (reverse-over-forward).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Var


class GradientError(FloatingPointError):
    pass


@dataclass(frozen=True, eq=False)
class MlpParams:
    layers: tuple          # ((W, b), ...) with W of shape (out, in)

    @property
    def n_in(self) -> int:
        return ad.value_of(self.layers[0][0]).shape[1]

    @property
    def arch(self) -> tuple:
        return tuple(ad.value_of(w).shape[0] for w, _ in self.layers)

    @property
    def n_params(self) -> int:
        return sum(ad.value_of(w).size + ad.value_of(b).size for w, b in self.layers)

    def flat(self) -> np.ndarray:
        return np.concatenate([np.concatenate([ad.value_of(w).ravel(), ad.value_of(b)])
                               for w, b in self.layers])

    def with_flat(self, vec) -> "MlpParams":
        return unflatten(self.arch, self.n_in, vec)


def unflatten(arch, n_in: int, vec) -> MlpParams:
    vec = np.asarray(vec, dtype=float)
    layers, pos, fan_in = [], 0, n_in
    for width in arch:
        w = vec[pos: pos + width * fan_in].reshape(width, fan_in)
        pos += width * fan_in
        b = vec[pos: pos + width]
        pos += width
        layers.append((w.copy(), b.copy()))
        fan_in = width
    if pos != vec.size:
        raise ValueError(f"parameter vector has {vec.size} entries, architecture needs {pos}")
    return MlpParams(tuple(layers))


def param_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), 0])))


def glorot_bound(fan_in: int, fan_out: int) -> float:
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def init_params(arch, seed: int, n_in: int = 1) -> MlpParams:
    """Glorot-uniform weights, zero biases, fully determined by ``seed``."""
    arch = tuple(int(a) for a in arch)
    if not arch or min(arch) < 1 or n_in < 1:
        raise ValueError(f"invalid architecture {arch} with {n_in} inputs")
    rng = param_rng(seed)
    layers, fan_in = [], n_in
    for width in arch:
        lim = glorot_bound(fan_in, width)
        layers.append((rng.uniform(-lim, lim, size=(width, fan_in)), np.zeros(width)))
        fan_in = width
    return MlpParams(tuple(layers))


def _as_batch(params: MlpParams, x):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != params.n_in:
        raise ValueError(f"network takes {params.n_in} inputs, got points of width {x.shape[1]}")
    return x, single


def forward(params: MlpParams, x):
    """Network output for one point (n_in,) or a batch (m, n_in)."""
    x, single = _as_batch(params, x)
    a = x
    last = len(params.layers) - 1
    for i, (w, b) in enumerate(params.layers):
        a = a @ w.T + b
        if i < last:
            a = ad.tanh(a)
    return a[0] if single else a


def predict(params: MlpParams, x, chunk: int = 2048) -> np.ndarray:
    """Inference-only forward pass on plain arrays, shape (m, n_out).

    Works through the points in cache-sized chunks with in-place bias and
    activation updates; numerically identical to :func:`forward`.
    """
    x, _ = _as_batch(params, x)
    layers = [(np.ascontiguousarray(ad.value_of(w).T), ad.value_of(b)) for w, b in params.layers]
    last = len(layers) - 1
    out = np.empty((len(x), layers[-1][0].shape[1]))
    for s in range(0, len(x), chunk):
        a = x[s:s + chunk]
        for i, (wt, b) in enumerate(layers):
            z = a @ wt
            z += b
            if i < last:
                np.tanh(z, out=z)
            a = z
        out[s:s + chunk] = a
    return out


@dataclass
class Jet2:
    """Value and per-coordinate first / pure second derivatives.

    ``value`` is (m, n_out); ``first`` and ``second`` are (k, m, n_out) for
    the k differentiated input coordinates listed in ``coords``.
    """

    value: object
    first: object
    second: object
    coords: tuple

    def d(self, coord: int):
        return self.first[self.coords.index(coord)]

    def dd(self, coord: int):
        return self.second[self.coords.index(coord)]

    def laplacian(self, coords=None):
        coords = self.coords if coords is None else coords
        total = 0.0
        for c in coords:
            total = total + self.dd(c)
        return total


def jet2(params: MlpParams, x, coords=None) -> Jet2:
    """Propagate second-order jets along each coordinate in ``coords``."""
    x, single = _as_batch(params, x)
    m = x.shape[0]
    coords = tuple(range(params.n_in)) if coords is None else tuple(coords)
    seeds = np.zeros((len(coords), m, params.n_in))
    for k, c in enumerate(coords):
        seeds[k, :, c] = 1.0

    v, d, s = x, seeds, None
    last = len(params.layers) - 1
    for i, (w, b) in enumerate(params.layers):
        wt = w.T
        z = v @ wt + b
        dz = d @ wt
        sz = None if s is None else s @ wt
        if i == last:
            v, d, s = z, dz, sz
            break
        y = ad.tanh(z)
        y1 = 1.0 - y * y
        y2 = -2.0 * y * y1
        v = y
        d = y1 * dz
        s = y2 * dz * dz if sz is None else y2 * dz * dz + y1 * sz
    if s is None:                       # purely affine network
        s = np.zeros((len(coords), m, ad.value_of(v).shape[1]))
    jet = Jet2(v, d, s, coords)
    if single:
        jet = Jet2(v[0], d[:, 0], s[:, 0], coords)
    return jet


def as_vars(params: MlpParams) -> MlpParams:
    return MlpParams(tuple((Var(w), Var(b)) for w, b in params.layers))


def value_and_grad(loss, params: MlpParams):
    """Evaluate ``loss(params)`` and its gradient w.r.t. all parameters.

    The gradient is flattened in the same order as :meth:`MlpParams.flat`.
    """
    traced = as_vars(params)
    out = loss(traced)
    if not isinstance(out, Var):
        raise TypeError("loss must depend on the parameters")
    val = float(out.value)
    if not np.isfinite(val):
        raise GradientError(f"loss is not finite ({val}); cannot differentiate")
    ad.backward(out)
    parts = []
    for w, b in traced.layers:
        parts.append(np.zeros(w.shape).ravel() if w.grad is None else w.grad.ravel())
        parts.append(np.zeros(b.shape) if b.grad is None else b.grad)
    grad = np.concatenate(parts)
    if not np.all(np.isfinite(grad)):
        raise GradientError("gradient contains non-finite entries")
    return val, grad


def loss_gradient(loss, params: MlpParams) -> np.ndarray:
    return value_and_grad(loss, params)[1]


def save_checkpoint(params: MlpParams, seed: int) -> str:
    return json.dumps({"arch": list(params.arch), "n_in": params.n_in, "seed": int(seed),
                       "params": params.flat().tolist()})


def load_checkpoint(text: str):
    doc = json.loads(text)
    return unflatten(doc["arch"], doc["n_in"], doc["params"]), doc["seed"]
