"""Dense MLP numerics: forward/backward, Adam, Polyak, gradient checking.

Everything is float64 and seeded; no parallel reductions, so repeated runs
are bit-identical. Backward also returns the gradient with respect to the
input, which the actor-critic updates chain through.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np


class Activation(str, Enum):
    RELU = "relu"
    TANH = "tanh"
    IDENTITY = "identity"


class NnError(Exception):
    pass


class DimMismatch(NnError):
    pass


class NonFiniteInput(NnError):
    pass


class StaleCache(NnError):
    pass


class ShapeMismatch(NnError):
    pass


class ArchitectureMismatch(NnError):
    pass


@dataclass
class Mlp:
    layer_sizes: tuple[int, ...]
    activations: tuple[Activation, ...]
    weights: list[np.ndarray]  # (fan_in, fan_out) per layer
    biases: list[np.ndarray]  # (fan_out,) per layer
    init_seed: int

    @property
    def in_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def out_dim(self) -> int:
        return self.layer_sizes[-1]

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out


@dataclass
class Gradients:
    d_weights: list[np.ndarray]
    d_biases: list[np.ndarray]

    def as_list(self) -> list[np.ndarray]:
        out = []
        for dw, db in zip(self.d_weights, self.d_biases):
            out.append(dw)
            out.append(db)
        return out


@dataclass
class ForwardCache:
    net: Mlp
    inputs: list[np.ndarray]  # input to each layer, (B, fan_in)
    zs: list[np.ndarray]  # pre-activations
    outs: list[np.ndarray]  # post-activations
    squeezed: bool


def init_mlp(layer_sizes: list[int], activations: list[Activation], seed: int) -> Mlp:
    """Uniform(-a, a) init with a = sqrt(6 / (fan_in + fan_out)), one seeded
    stream per layer; biases start at zero."""
    if len(activations) != len(layer_sizes) - 1:
        raise ArchitectureMismatch("need one activation per layer")
    if activations[-1] not in (Activation.IDENTITY, Activation.TANH):
        raise ArchitectureMismatch("output activation must be identity or tanh")
    weights, biases = [], []
    for layer, (fan_in, fan_out) in enumerate(zip(layer_sizes[:-1], layer_sizes[1:])):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, layer])))
        a = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-a, a, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out, dtype=np.float64))
    return Mlp(
        layer_sizes=tuple(layer_sizes),
        activations=tuple(activations),
        weights=weights,
        biases=biases,
        init_seed=seed,
    )


def clone_mlp(net: Mlp) -> Mlp:
    return Mlp(
        layer_sizes=net.layer_sizes,
        activations=net.activations,
        weights=[w.copy() for w in net.weights],
        biases=[b.copy() for b in net.biases],
        init_seed=net.init_seed,
    )


def _apply_activation(z: np.ndarray, act: Activation) -> np.ndarray:
    if act == Activation.RELU:
        return np.maximum(z, 0.0)
    if act == Activation.TANH:
        return np.tanh(z)
    return z


def _activation_grad(z: np.ndarray, out: np.ndarray, act: Activation) -> np.ndarray:
    if act == Activation.RELU:
        return (z > 0.0).astype(np.float64)
    if act == Activation.TANH:
        return 1.0 - out * out
    return np.ones_like(z)


def forward(net: Mlp, x: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    x = np.asarray(x, dtype=np.float64)
    squeezed = x.ndim == 1
    if squeezed:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != net.in_dim:
        raise DimMismatch(f"input shape {x.shape}, expected (*, {net.in_dim})")
    if not np.all(np.isfinite(x)):
        raise NonFiniteInput("non-finite values in network input")
    inputs, zs, outs = [], [], []
    h = x
    for w, b, act in zip(net.weights, net.biases, net.activations):
        inputs.append(h)
        z = h @ w + b
        out = _apply_activation(z, act)
        zs.append(z)
        outs.append(out)
        h = out
    y = h[0] if squeezed else h
    return y, ForwardCache(net=net, inputs=inputs, zs=zs, outs=outs, squeezed=squeezed)


def backward(net: Mlp, cache: ForwardCache, upstream: np.ndarray) -> tuple[Gradients, np.ndarray]:
    """Exact reverse-mode gradients of sum(upstream * output)."""
    if cache.net is not net:
        raise StaleCache("cache does not belong to this network")
    up = np.asarray(upstream, dtype=np.float64)
    if cache.squeezed:
        up = up[None, :]
    if up.shape != cache.outs[-1].shape:
        raise DimMismatch(f"upstream shape {up.shape}, expected {cache.outs[-1].shape}")
    d_weights: list[np.ndarray] = [None] * len(net.weights)  # type: ignore[list-item]
    d_biases: list[np.ndarray] = [None] * len(net.biases)  # type: ignore[list-item]
    delta = up
    for layer in range(len(net.weights) - 1, -1, -1):
        dz = delta * _activation_grad(cache.zs[layer], cache.outs[layer], net.activations[layer])
        d_weights[layer] = cache.inputs[layer].T @ dz
        d_biases[layer] = dz.sum(axis=0)
        delta = dz @ net.weights[layer].T
    dx = delta[0] if cache.squeezed else delta
    return Gradients(d_weights=d_weights, d_biases=d_biases), dx


@dataclass
class AdamState:
    lr: float
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: list[np.ndarray] | None = None
    v: list[np.ndarray] | None = None


def adam_step(state: AdamState, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
    """One bias-corrected Adam update, in place."""
    if state.m is None:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    if len(params) != len(grads) or any(p.shape != g.shape for p, g in zip(params, grads)):
        raise ShapeMismatch("parameter/gradient shapes do not match")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**state.step
    bc2 = 1.0 - b2**state.step
    for i, (p, g) in enumerate(zip(params, grads)):
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * (g * g)
        m_hat = state.m[i] / bc1
        v_hat = state.v[i] / bc2
        p -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


def polyak_update(target: Mlp, online: Mlp, tau: float) -> None:
    """theta_target <- tau * theta_online + (1 - tau) * theta_target."""
    if target.layer_sizes != online.layer_sizes or target.activations != online.activations:
        raise ArchitectureMismatch("target and online architectures differ")
    if not 0.0 < tau <= 1.0:
        raise ValueError(f"tau must be in (0, 1], got {tau}")
    for tp, op in zip(target.params(), online.params()):
        tp *= 1.0 - tau
        tp += tau * op


@dataclass(frozen=True)
class GradCheckReport:
    max_rel_err: float
    n_checked: int
    passed: bool
    worst: tuple[int, tuple[int, ...]]  # (param index, coordinate)


def gradient_check(
    net: Mlp,
    loss_fn,
    tolerance: float = 1e-4,
    max_params: int = 200,
    seed: int = 0,
    h: float = 1e-5,
) -> GradCheckReport:
    """Central finite differences on a seeded subsample of parameters.

    loss_fn(net) must return (loss, Gradients) computed via forward/backward.
    """
    _, grads = loss_fn(net)
    flat_coords: list[tuple[int, tuple[int, ...]]] = []
    params = net.params()
    grad_list = grads.as_list()
    for pi, p in enumerate(params):
        for coord in np.ndindex(*p.shape):
            flat_coords.append((pi, coord))
    rng = np.random.Generator(np.random.PCG64(seed))
    if len(flat_coords) > max_params:
        picked = rng.choice(len(flat_coords), size=max_params, replace=False)
        coords = [flat_coords[int(i)] for i in picked]
    else:
        coords = flat_coords
    max_rel = 0.0
    worst = coords[0]
    for pi, coord in coords:
        p = params[pi]
        orig = p[coord]
        p[coord] = orig + h
        plus = loss_fn(net)[0]
        p[coord] = orig - h
        minus = loss_fn(net)[0]
        p[coord] = orig
        fd = (plus - minus) / (2.0 * h)
        an = grad_list[pi][coord]
        rel = abs(an - fd) / max(abs(an), abs(fd), 1e-6)
        if rel > max_rel:
            max_rel = rel
            worst = (pi, coord)
    return GradCheckReport(
        max_rel_err=float(max_rel),
        n_checked=len(coords),
        passed=bool(max_rel < tolerance),
        worst=worst,
    )


def mlp_to_json_dict(net: Mlp) -> dict:
    return {
        "sizes": list(net.layer_sizes),
        "activations": [a.value for a in net.activations],
        "weights": [w.tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
        "init_seed": net.init_seed,
    }


def mlp_from_json_dict(d: dict) -> Mlp:
    sizes = tuple(int(s) for s in d["sizes"])
    weights = [np.array(w, dtype=np.float64) for w in d["weights"]]
    biases = [np.array(b, dtype=np.float64) for b in d["biases"]]
    for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        if weights[i].shape != (fan_in, fan_out) or biases[i].shape != (fan_out,):
            raise ArchitectureMismatch(f"layer {i}: shape mismatch against sizes {sizes}")
    return Mlp(
        layer_sizes=sizes,
        activations=tuple(Activation(a) for a in d["activations"]),
        weights=weights,
        biases=biases,
        init_seed=int(d.get("init_seed", 0)),
    )
