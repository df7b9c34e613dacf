"""Energy-based density surrogate over state-action pairs.

The energy network is fitted by denoising score matching: for noisy copies
y = x + e of the data, ``y - sigma**2 * grad E(y)`` is trained to recover x,
i.e. the loss is mean ||e - sigma**2 * grad E(y)||^2. Low energy then means "looks
like the training data". The reward regularizer subtracts a multiple of the
(standardized) energy.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .nn import Adam, Mlp, load_arrays, save_arrays


def deen_loss(net: Mlp, x, sigma, rng, with_grad=True, antithetic=False):
    """Denoising score-matching loss of ``net`` on rows ``x``.

    With ``antithetic`` every row is used twice, with noise e and -e; each
    copy is still marginally Gaussian, but the leading noise term of the
    gradient cancels within a pair. Returns ``(loss, grads)``; ``grads`` is
    None when ``with_grad`` is false.
    """
    x = np.asarray(x, float)
    if x.ndim != 2 or len(x) == 0:
        raise ValueError("need a non-empty 2-D batch")
    eps = rng.normal(0.0, sigma, x.shape)
    if antithetic:
        x = np.vstack([x, x])
        eps = np.vstack([eps, -eps])
    return deen_loss_given_noise(net, x, eps, sigma, with_grad)


def deen_loss_given_noise(net: Mlp, x, eps, sigma, with_grad=True):
    """Same as :func:`deen_loss` with the noise supplied by the caller."""
    y = x + eps
    s2 = sigma * sigma
    if not with_grad:
        g = net.input_gradient(y)
        res = eps - s2 * g
        return float(np.mean(np.sum(res * res, axis=1))), None
    n = len(x)
    grads, g = net.grad_through_input_gradient(y, lambda g: (-2.0 * s2 / n) * (eps - s2 * g))
    res = eps - s2 * g
    return float(np.mean(np.sum(res * res, axis=1))), grads


def regularize_reward(r, energy, alpha):
    """Energy-penalized reward ``r - alpha * energy``."""
    return np.asarray(r, float) - alpha * np.asarray(energy, float)


class EnergyModel(BaseEstimator):
    """Softplus energy network with a scikit-learn style interface.

    ``fit`` runs ``n_batches`` minibatch steps; a second call continues from
    the current weights (``warm_start``), which is how periodic refreshes
    work. After every fit the mean and std of the energy over the fitted data
    are stored and :meth:`standardized_energy` uses them.

    Parameters
    ----------
    hidden : tuple of int
    sigma : float
        Noise scale of the denoising objective.
    alpha : float
        Regularizer weight used by :meth:`regularize`.
    standardize : bool
        Whether :meth:`regularize` uses standardized energies.
    """

    def __init__(self, hidden=(256, 64, 32), sigma=0.1, batch_size=32, n_batches=200, lr=1e-3,
                 alpha=0.1, standardize=True, warm_start=True, antithetic=True, clip_norm=10.0,
                 random_state=0):
        self.hidden = hidden
        self.sigma = sigma
        self.batch_size = batch_size
        self.n_batches = n_batches
        self.lr = lr
        self.alpha = alpha
        self.standardize = standardize
        self.warm_start = warm_start
        self.antithetic = antithetic
        self.clip_norm = clip_norm
        self.random_state = random_state

    def _init(self, dim):
        if self.sigma <= 0 or self.alpha < 0:
            raise ValueError("sigma must be > 0 and alpha >= 0")
        ss = np.random.SeedSequence(self.random_state)
        s_net, s_rng = ss.spawn(2)
        self.net_ = Mlp([dim, *self.hidden, 1], "softplus", "linear",
                        seed=np.random.default_rng(s_net))
        self.opt_ = Adam(self.net_.params(), self.lr, clip=self.clip_norm)
        self.rng_ = np.random.default_rng(s_rng)
        self.n_fits_ = 0
        self.energy_mean_, self.energy_std_ = 0.0, 1.0

    def fit(self, X, y=None, n_batches=None):
        X = check_array(X)
        if len(X) == 0:
            raise ValueError("cannot fit on an empty set")
        if not (self.warm_start and hasattr(self, "net_")):
            self._init(X.shape[1])
        elif X.shape[1] != self.net_.in_dim:
            raise ValueError("input width changed between fits")
        self.opt_.lr = self.lr
        steps = self.n_batches if n_batches is None else n_batches
        self.loss_curve_ = []
        for _ in range(int(steps)):
            idx = self.rng_.integers(0, len(X), self.batch_size)
            loss, grads = deen_loss(self.net_, X[idx], self.sigma, self.rng_,
                                    antithetic=self.antithetic)
            self.opt_.step(grads)
            self.loss_curve_.append(loss)
        e = self.energy(X)
        self.energy_mean_ = float(e.mean())
        self.energy_std_ = float(e.std()) if e.std() > 0 else 1.0
        self.n_fits_ += 1
        return self

    def energy(self, X):
        check_is_fitted(self, "net_")
        X = np.asarray(X, float)
        if X.shape[-1] != self.net_.in_dim:
            raise ValueError(f"input width {X.shape[-1]} != {self.net_.in_dim}")
        out = self.net_.forward(np.atleast_2d(X))[:, 0]
        return out if X.ndim == 2 else out[0]

    def standardized_energy(self, X):
        return (self.energy(X) - self.energy_mean_) / self.energy_std_

    def score_samples(self, X):
        """Unnormalized log-density (negative energy), as sklearn density models report."""
        return -self.energy(X)

    def score(self, X, y=None):
        return float(np.mean(self.score_samples(X)))

    def regularize(self, r, X, alpha=None):
        alpha = self.alpha if alpha is None else alpha
        if alpha == 0:
            return np.asarray(r, float).copy()
        e = self.standardized_energy(X) if self.standardize else self.energy(X)
        return regularize_reward(r, e, alpha)

    def save(self, path):
        check_is_fitted(self, "net_")
        head = dict(self.net_.header(), kind="energy", energy_mean=self.energy_mean_,
                    energy_std=self.energy_std_, adam_t=self.opt_.t, n_fits=self.n_fits_,
                    rng=self.rng_.bit_generator.state)
        save_arrays(path, head, self.net_.params() + self.opt_.state_arrays())

    def load(self, path):
        """Restore weights saved by :meth:`save` into this estimator."""
        head, arrays = load_arrays(path)
        if head.get("kind") != "energy":
            raise ValueError(f"{path} is not an energy checkpoint")
        self.hidden = tuple(head["sizes"][1:-1])
        self._init(head["sizes"][0])
        n = len(self.net_.params())
        self.net_.set_params(arrays[:n])
        self.opt_.load_state(head["adam_t"], arrays[n:])
        self.energy_mean_, self.energy_std_ = head["energy_mean"], head["energy_std"]
        self.n_fits_ = head["n_fits"]
        if "rng" in head:
            self.rng_.bit_generator.state = head["rng"]
        return self
