"""Small fully connected networks with hand-written gradients.

Covers what the agent and the energy model need: batched forward passes,
parameter and input gradients, the parameter gradient of a loss that
depends on the input gradient (double backprop), Adam, finite-difference
checking and a bit-exact checkpoint format.

Arrays are batched row-wise: an input of shape (n, d) gives an output of
shape (n, d_out). Weight ``W[l]`` has shape (fan_in, fan_out).
"""

from __future__ import annotations

import json

import numpy as np

ACTIVATIONS = ("relu", "tanh", "softplus", "linear")
SMOOTH = ("tanh", "softplus", "linear")
_MAGIC = b"SAMRO-ARRAYS 1\n"


def _act(kind, z):
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "tanh":
        return np.tanh(z)
    if kind == "softplus":
        return np.logaddexp(0.0, z)
    return z


def _dact(kind, z, a):
    """First derivative, given pre-activation z and activation a."""
    if kind == "relu":
        return (z > 0).astype(z.dtype)
    if kind == "tanh":
        return 1.0 - a * a
    if kind == "softplus":
        return 0.5 * (1.0 + np.tanh(0.5 * z))  # logistic sigmoid, overflow-free
    return np.ones_like(z)


def _d2act(kind, z, a):
    if kind == "tanh":
        return -2.0 * a * (1.0 - a * a)
    if kind == "softplus":
        s = 0.5 * (1.0 + np.tanh(0.5 * z))
        return s * (1.0 - s)
    if kind == "linear":
        return np.zeros_like(z)
    raise ValueError(f"activation {kind!r} has no usable second derivative")


class Mlp:
    """Multilayer perceptron.

    Parameters
    ----------
    sizes : sequence of int
        Layer widths including input and output, e.g. ``(208, 128, 64, 32, 136)``.
    hidden, output : str
        Activation of hidden layers and of the output layer.
    seed : int or numpy Generator
        Initialisation uses U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
    """

    def __init__(self, sizes, hidden="relu", output="linear", seed=0):
        sizes = [int(s) for s in sizes]
        if len(sizes) < 2 or min(sizes) < 1:
            raise ValueError("need at least an input and an output width, all >= 1")
        for kind in (hidden, output):
            if kind not in ACTIVATIONS:
                raise ValueError(f"unknown activation {kind!r}")
        self.sizes = sizes
        self.hidden = hidden
        self.output = output
        rng = np.random.default_rng(seed)
        self.W, self.b = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            lim = 1.0 / np.sqrt(fan_in)
            self.W.append(rng.uniform(-lim, lim, (fan_in, fan_out)))
            self.b.append(rng.uniform(-lim, lim, fan_out))

    # -- parameters -----------------------------------------------------
    @property
    def n_layers(self):
        return len(self.W)

    @property
    def in_dim(self):
        return self.sizes[0]

    @property
    def out_dim(self):
        return self.sizes[-1]

    def params(self):
        """Parameter arrays in canonical order W0, b0, W1, b1, ... (live views)."""
        out = []
        for W, b in zip(self.W, self.b):
            out += [W, b]
        return out

    def set_params(self, arrays):
        for p, a in zip(self.params(), arrays):
            if p.shape != np.shape(a):
                raise ValueError("parameter shape mismatch")
            p[...] = a

    def copy(self):
        new = Mlp.__new__(Mlp)
        new.sizes, new.hidden, new.output = list(self.sizes), self.hidden, self.output
        new.W = [w.copy() for w in self.W]
        new.b = [b.copy() for b in self.b]
        return new

    def n_params(self):
        return sum(p.size for p in self.params())

    def _kind(self, layer):
        return self.output if layer == self.n_layers - 1 else self.hidden

    # -- evaluation -----------------------------------------------------
    def _rows(self, x):
        x = np.asarray(x, float)
        single = x.ndim == 1
        x2 = x[None, :] if single else x
        if x2.ndim != 2 or x2.shape[1] != self.in_dim:
            raise ValueError(f"input width {x2.shape[-1]} != {self.in_dim}")
        return x2, single

    def forward_cache(self, x):
        """Batched forward pass returning (output, cache)."""
        a, _ = self._rows(x)
        zs, acts = [], [a]
        for layer, (W, b) in enumerate(zip(self.W, self.b)):
            z = a @ W + b
            a = _act(self._kind(layer), z)
            zs.append(z)
            acts.append(a)
        return a, (zs, acts)

    def forward(self, x):
        x2, single = self._rows(x)
        out, _ = self.forward_cache(x2)
        return out[0] if single else out

    __call__ = forward

    def backward(self, cache, grad_out, need_input=False):
        """Reverse pass for a loss with dL/d(output) = ``grad_out`` (n, d_out).

        Returns parameter gradients in :meth:`params` order, and the input
        gradient as well when ``need_input`` is true.
        """
        zs, acts = cache
        delta = np.asarray(grad_out, float).reshape(acts[-1].shape)
        grads = [None] * (2 * self.n_layers)
        for layer in reversed(range(self.n_layers)):
            delta = delta * _dact(self._kind(layer), zs[layer], acts[layer + 1])
            grads[2 * layer] = acts[layer].T @ delta
            grads[2 * layer + 1] = delta.sum(axis=0)
            if layer or need_input:
                delta = delta @ self.W[layer].T
        return (grads, delta) if need_input else grads

    def backward_params(self, cache, grad_out):
        return self.backward(cache, grad_out)

    def input_gradient(self, x):
        """Gradient of the scalar output with respect to each input row."""
        if self.out_dim != 1:
            raise ValueError("input_gradient needs a scalar-output model")
        x2, single = self._rows(x)
        out, cache = self.forward_cache(x2)
        _, g = self.backward(cache, np.ones_like(out), need_input=True)
        return g[0] if single else g

    def grad_through_input_gradient(self, x, g_bar):
        """Parameter gradient of a loss L(g) where g = d(output)/d(input) per row.

        ``g_bar`` is dL/dg with the same shape as the inputs, or a callable
        mapping g to dL/dg when the cotangent depends on g itself. Requires
        smooth activations everywhere. Returns ``(grads, g)``.
        """
        if self.out_dim != 1:
            raise ValueError("double backprop needs a scalar-output model")
        for kind in {self.hidden, self.output}:
            if kind not in SMOOTH:
                raise ValueError(f"activation {kind!r} is not smooth enough for double backprop")
        x2, _ = self._rows(x)
        out, (zs, acts) = self.forward_cache(x2)
        L = self.n_layers
        fp = [_dact(self._kind(l), zs[l], acts[l + 1]) for l in range(L)]
        fpp = [_d2act(self._kind(l), zs[l], acts[l + 1]) for l in range(L)]
        # backward chain: d[L-1] = fp[L-1]; u[l] = d[l] W[l]^T; d[l-1] = u[l] * fp[l-1]
        d = [None] * L
        u = [None] * L
        d[L - 1] = fp[L - 1]
        for l in range(L - 1, -1, -1):
            u[l] = d[l] @ self.W[l].T
            if l:
                d[l - 1] = u[l] * fp[l - 1]
        g = u[0]
        if callable(g_bar):
            g_bar = g_bar(g)
        g_bar = np.asarray(g_bar, float).reshape(x2.shape)
        # reverse through the backward chain, input side first
        gW = [np.zeros_like(W) for W in self.W]
        gb = [np.zeros_like(b) for b in self.b]
        z_bar = [None] * L
        u_bar = g_bar
        for l in range(L):
            d_bar = u_bar @ self.W[l]
            gW[l] += u_bar.T @ d[l]
            if l < L - 1:
                z_bar[l] = d_bar * u[l + 1] * fpp[l]
                u_bar = d_bar * fp[l]
            else:
                z_bar[l] = d_bar * fpp[l]
        # reverse through the forward pass, output side first
        carry = np.zeros_like(zs[L - 1])
        for l in range(L - 1, -1, -1):
            zt = z_bar[l] + carry * fp[l] if l < L - 1 else z_bar[l]
            gW[l] += acts[l].T @ zt
            gb[l] += zt.sum(axis=0)
            if l:
                carry = zt @ self.W[l].T
        grads = []
        for W, b in zip(gW, gb):
            grads += [W, b]
        return grads, g

    # -- persistence ----------------------------------------------------
    def header(self):
        return dict(kind="mlp", sizes=self.sizes, hidden=self.hidden, output=self.output)

    def save(self, path):
        save_arrays(path, self.header(), self.params())

    @classmethod
    def load(cls, path):
        head, arrays = load_arrays(path)
        if head.get("kind") != "mlp":
            raise ValueError(f"{path} is not an MLP checkpoint")
        net = cls(head["sizes"], head["hidden"], head["output"], seed=0)
        net.set_params(arrays)
        return net


# -- optimisation --------------------------------------------------------

def clip_grad_norm(grads, max_norm):
    """Scale ``grads`` in place so their global L2 norm is at most ``max_norm``."""
    norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))
    if max_norm is not None and norm > max_norm > 0:
        for g in grads:
            g *= max_norm / norm
    return norm


class Adam:
    """Adam with bias correction over a fixed list of parameter arrays."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8, clip=None):
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.clip = clip
        self.m = [np.zeros_like(p) for p in self.params]
        self.v = [np.zeros_like(p) for p in self.params]
        self.t = 0

    def step(self, grads):
        if len(grads) != len(self.params):
            raise ValueError("gradient list does not match parameters")
        grads = [np.array(g, float) for g in grads]
        if self.clip is not None:
            clip_grad_norm(grads, self.clip)
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            if p.shape != g.shape:
                raise ValueError("gradient shape mismatch")
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state_arrays(self):
        return self.m + self.v

    def load_state(self, t, arrays):
        n = len(self.params)
        for dst, src in zip(self.m + self.v, arrays[: 2 * n]):
            dst[...] = src
        self.t = int(t)


def adam_step(adam: Adam, grads):
    adam.step(grads)
    return adam.params


def soft_update(target: Mlp, source: Mlp, tau):
    for t, s in zip(target.params(), source.params()):
        t *= 1.0 - tau
        t += tau * s


# -- gradient checking ---------------------------------------------------

def numeric_gradient(loss, arrays, h=1e-5):
    """Central differences of the scalar ``loss()`` w.r.t. each array, perturbed in place."""
    out = []
    for a in arrays:
        g = np.zeros_like(a)
        flat, gflat = a.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            up = loss()
            flat[i] = old - h
            down = loss()
            flat[i] = old
            gflat[i] = (up - down) / (2 * h)
        out.append(g)
    return out


def max_relative_error(analytic, numeric, floor=1e-10):
    worst = 0.0
    for a, n in zip(analytic, numeric):
        a, n = np.asarray(a, float), np.asarray(n, float)
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        err = np.abs(a - n) / denom
        # differences below the finite-difference noise floor count as exact
        err = np.where(np.abs(a - n) < floor, 0.0, err)
        worst = max(worst, float(err.max(initial=0.0)))
    return worst


# -- flat binary checkpoint ----------------------------------------------

def save_arrays(path, header: dict, arrays):
    """Write a JSON header line followed by float64 little-endian row-major data.

    The header records the shape of every array so the file is self-describing.
    """
    head = dict(header, shapes=[list(np.shape(a)) for a in arrays])
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(json.dumps(head, sort_keys=True).encode() + b"\n")
        for a in arrays:
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_arrays(path):
    with open(path, "rb") as fh:
        if fh.readline() != _MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        head = json.loads(fh.readline())
        arrays = []
        for shape in head.pop("shapes"):
            n = int(np.prod(shape)) if shape else 1
            buf = fh.read(8 * n)
            if len(buf) != 8 * n:
                raise ValueError(f"{path}: truncated checkpoint")
            arrays.append(np.frombuffer(buf, dtype="<f8").reshape(shape).astype(float))
        if fh.read(1):
            raise ValueError(f"{path}: trailing bytes in checkpoint")
    return head, arrays
