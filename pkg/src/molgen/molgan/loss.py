from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from molgen.diff import Tensor, as_tensor, concat, grad, l2_norm, mean
from molgen.molgan.model import Discriminator


@dataclass
class CriticLoss:
    d_loss: Tensor
    g_loss: Tensor
    wasserstein: float  # mean D(real) - mean D(fake)
    penalty: float


def interpolate(real: tuple, fake: tuple, eps: np.ndarray) -> tuple[Tensor, Tensor]:
    """Per-sample mix ``eps * real + (1 - eps) * fake``, shared by X and A; leaves with grad."""
    eps = np.asarray(eps, dtype=np.float64).reshape(-1)
    Xr, Ar = (as_tensor(t).data for t in real)
    Xf, Af = (as_tensor(t).data for t in fake)
    ex = eps.reshape(-1, 1, 1)
    ea = eps.reshape(-1, 1, 1, 1)
    X = Tensor(ex * Xr + (1.0 - ex) * Xf, requires_grad=True)
    A = Tensor(ea * Ar + (1.0 - ea) * Af, requires_grad=True)
    return X, A


def gradient_penalty(D: Discriminator, X_hat: Tensor, A_hat: Tensor) -> Tensor:
    """Per-sample ``(||grad D(x_hat)|| - 1)**2`` with the norm over X and A jointly.

    The critic runs deterministically here (dropout off), so the penalty stays
    twice differentiable.
    """
    scores = D(X_hat, A_hat, training=False)
    gx, ga = grad(scores.sum(), [X_hat, A_hat], create_graph=True)
    b = X_hat.shape[0]
    flat = concat([gx.reshape(b, -1), ga.reshape(b, -1)], axis=1)
    return (l2_norm(flat, axis=1) - 1.0) ** 2


def wgan_gp_loss(
    D: Discriminator,
    real: tuple,
    fake: tuple,
    alpha: float,
    eps: np.ndarray,
    training: bool = False,
    rng=None,
) -> CriticLoss:
    Xr, Ar = (as_tensor(t) for t in real)
    Xf, Af = (as_tensor(t) for t in fake)
    d_real = D(Xr, Ar, training=training, rng=rng)
    d_fake = D(Xf, Af, training=training, rng=rng)
    X_hat, A_hat = interpolate((Xr, Ar), (Xf, Af), eps)
    pen = gradient_penalty(D, X_hat, A_hat)
    d_loss = mean(-d_real + d_fake + pen * alpha)
    g_loss = -mean(d_fake)
    return CriticLoss(
        d_loss=d_loss,
        g_loss=g_loss,
        wasserstein=float(d_real.data.mean() - d_fake.data.mean()),
        penalty=float(pen.data.mean()),
    )
