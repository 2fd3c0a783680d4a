"""Hinge adversarial, perceptual and feature-matching objectives.

Expectations are means over the supplied batch; a scalar is a batch of one.
Everything here is forward-only. Gradients, where needed, come from central
finite differences (``fd_gradient``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .network import conv2d, leaky_relu
from .prng import SplitMix64, derive_seed


class DivergenceError(FloatingPointError):
    """A loss evaluation produced a non-finite value."""


@dataclass(frozen=True)
class LossWeights:
    lambda_p: float = 1.0
    lambda_fm: float = 1.0

    def __post_init__(self):
        if self.lambda_p < 0 or self.lambda_fm < 0:
            raise ValueError("loss weights must be non-negative")


@dataclass
class CriticOutput:
    score: float | np.ndarray
    features: list[np.ndarray] = field(default_factory=list)


class Critic:
    """Three stride-2 3x3 conv layers with leaky ReLU; score is the mean of the last map."""

    def __init__(self, in_channels: int = 3, channels: Sequence[int] = (8, 16, 32), seed: int = 0):
        self.layers = []
        cin = in_channels
        for i, cout in enumerate(channels):
            rng = SplitMix64(derive_seed(seed, f"critic.{i}.w"))
            w = ((2.0 * rng.uniform_block(cout * cin * 9) - 1.0) * 0.1).astype(np.float32)
            self.layers.append((w.reshape(cout, cin, 3, 3), np.zeros(cout, dtype=np.float32)))
            cin = cout

    def __call__(self, x) -> CriticOutput:
        feats = []
        h = np.asarray(x, dtype=np.float32)
        for w, b in self.layers:
            h = leaky_relu(conv2d(h, w, b, stride=2))
            feats.append(h)
        return CriticOutput(float(h.mean()), feats)


def _expect(x) -> float:
    return float(np.mean(np.asarray(x, dtype=np.float64)))


def _check_pairs(a, b, what):
    if len(a) != len(b):
        raise ValueError(f"{what}: {len(a)} vs {len(b)} layers")
    for i, (x, y) in enumerate(zip(a, b)):
        if np.shape(x) != np.shape(y):
            raise ValueError(f"{what} layer {i}: shape {np.shape(x)} vs {np.shape(y)}")


def perceptual_loss(g_feats, c_feats) -> float:
    """Mean over levels of the per-level mean squared feature difference."""
    _check_pairs(g_feats, c_feats, "perceptual loss")
    if not len(g_feats):
        return 0.0
    return float(np.mean([
        np.mean((np.asarray(a, np.float64) - np.asarray(b, np.float64)) ** 2)
        for a, b in zip(g_feats, c_feats)
    ]))


def feature_matching_loss(g_feats, s_feats) -> float:
    """Mean over critic layers of the mean absolute feature difference."""
    _check_pairs(g_feats, s_feats, "feature matching loss")
    if not len(g_feats):
        return 0.0
    return float(np.mean([
        np.mean(np.abs(np.asarray(a, np.float64) - np.asarray(b, np.float64)))
        for a, b in zip(g_feats, s_feats)
    ]))


def generator_loss(
    d_g: CriticOutput,
    g,
    xc_feats,
    xs_critic: CriticOutput,
    w: LossWeights = LossWeights(),
    extractor: Callable | None = None,
) -> float:
    """-E[D(g)] + lambda_p * L_P(g, x^c) + lambda_fm * L_FM(g, x^s).

    ``extractor`` maps the generated image ``g`` to the feature pyramid that
    is compared with ``xc_feats``; without one, ``g`` must already be that
    pyramid.
    """
    g_feats = extractor(g) if extractor is not None else g
    lp = perceptual_loss(g_feats, xc_feats)
    lfm = feature_matching_loss(d_g.features, xs_critic.features)
    return -_expect(d_g.score) + w.lambda_p * lp + w.lambda_fm * lfm


def discriminator_loss(d_real, d_fake) -> float:
    """-E[min(-1 + D(x^s), 0)] - E[min(-1 - D(g), 0)]."""
    real = np.asarray(d_real, dtype=np.float64)
    fake = np.asarray(d_fake, dtype=np.float64)
    if not (np.all(np.isfinite(real)) and np.all(np.isfinite(fake))):
        raise ValueError("critic scores must be finite")
    loss = -np.mean(np.minimum(-1.0 + real, 0.0)) - np.mean(np.minimum(-1.0 - fake, 0.0))
    return float(loss) + 0.0  # no negative zero


def fd_gradient(loss: Callable[[np.ndarray], float], at, h: float = 1e-3) -> np.ndarray:
    """Central-difference gradient of a scalar loss, evaluated in float64."""
    if not h > 0:
        raise ValueError("step h must be > 0")
    x = np.array(at, dtype=np.float64)
    grad = np.empty_like(x)
    flat, gflat = x.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = loss(x)
        flat[i] = orig - h
        down = loss(x)
        flat[i] = orig
        if not (np.isfinite(up) and np.isfinite(down)):
            raise DivergenceError(f"non-finite loss while differentiating element {i}")
        gflat[i] = (up - down) / (2.0 * h)
    return grad


def target_matching_objective(target, extractor: Callable | None = None,
                              weights: LossWeights = LossWeights(lambda_fm=0.0)):
    """Perceptual-only generator objective with a frozen extractor and critic.

    The adversarial and feature-matching terms are constant under a frozen
    critic with lambda_fm = 0, so this is lambda_p * L_P(extractor(g), extractor(target)).
    """
    extractor = extractor or (lambda x: [x])
    target_feats = [np.asarray(f, np.float64) for f in extractor(np.asarray(target, np.float64))]
    frozen = CriticOutput(0.0, [])

    def loss(g):
        return generator_loss(frozen, g, target_feats, frozen, weights, extractor)

    return loss


def pixel_descent_demo(g0, loss: Callable[[np.ndarray], float], steps: int, lr: float,
                       h: float = 1e-3) -> list[float]:
    """Gradient descent on the pixels of ``g0``; returns losses before and after each step."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    g = np.array(g0, dtype=np.float64)
    trace = [float(loss(g))]
    for step in range(steps):
        g = g - lr * fd_gradient(loss, g, h)
        value = float(loss(g))
        if not np.isfinite(value):
            raise DivergenceError(f"loss became non-finite at step {step + 1}")
        trace.append(value)
    return trace


def invariant_suite(seed: int = 0) -> list[tuple[str, bool, str]]:
    """Numerical self-checks behind ``rainsd loss-check``."""
    rng = np.random.default_rng(seed)
    results = []

    def record(name, ok, detail=""):
        results.append((name, bool(ok), detail))

    for (r, f), want in (((1, -1), 0.0), ((0, 0), 2.0), ((-2, 3), 7.0)):
        got = discriminator_loss(r, f)
        record(f"L_D({r},{f}) = {want:g}", got == want, f"got {got:g}")

    scores = rng.normal(scale=3.0, size=(200, 2))
    vals = [discriminator_loss(a, b) for a, b in scores]
    record("L_D >= 0", min(vals) >= 0, f"min {min(vals):.3g}")
    zero_iff = all((v == 0) == (a >= 1 and b <= -1) for v, (a, b) in zip(vals, scores))
    record("L_D = 0 iff hinge satisfied", zero_iff)

    feats = [rng.normal(size=(2, 4, 4)) for _ in range(3)]
    crit = CriticOutput(0.5, [rng.normal(size=(4, 2, 2))])
    base = generator_loss(crit, feats, feats, crit)
    record("L_G = -D(g) at zero distances", base == -0.5, f"got {base:g}")
    higher = generator_loss(CriticOutput(0.75, crit.features), feats, feats, crit)
    record("L_G decreases with D(g)", higher < base)

    other = [f + rng.normal(scale=0.1, size=f.shape) for f in feats]
    record("L_P > 0 for distinct features", perceptual_loss(other, feats) > 0)
    record("L_P symmetric", perceptual_loss(other, feats) == perceptual_loss(feats, other))

    g, c = rng.normal(size=(2, 3, 3)), rng.normal(size=(2, 3, 3))
    fd = fd_gradient(lambda x: perceptual_loss([x], [c]), g, 1e-3)
    an = 2.0 * (g - c) / g.size
    rel = float(np.linalg.norm(fd - an) / np.linalg.norm(an))
    record("fd grad L_P vs analytic (1e-4)", rel <= 1e-4, f"rel {rel:.2e}")

    target = rng.uniform(-1, 1, size=(1, 4, 4))
    trace = pixel_descent_demo(np.zeros((1, 4, 4)), target_matching_objective(target), 50, 0.1)
    drop = 1.0 - trace[-1] / trace[0]
    record("pixel descent halves L_P in 50 steps", drop >= 0.5, f"drop {drop:.1%}")
    return results
