"""Deterministic synthetic data streams mixing adversarial and stochastic parts.

Each (node i, round t) sample is produced from its own Philox counter
stream keyed on (seed, stream tag) with counter block (0, 0, i, t), so any
query order, thread schedule, or parallel split reproduces identical bits.

Draw plan per sample, in order, all from 53-bit uniforms u = (raw >> 11) * 2^-53:
    u[0]            label: y = +1 if u[0] < 0.5 else -1
    u[1 : dim+1]    adversarial part: a~ = (sin(i) - 0.5) + u, entrywise
    u[dim+1 : ]     stochastic part via inverse normal CDF (scipy ndtri) on
                    u * (1 - 2^-53) + 2^-54 (keeps the argument inside (0, 1)):
                    a^ = (y + 0.5 sin(t)) + ndtri(.)

Features are beta * a~ + (1 - beta) * a^. The same underlying draws are
used for every beta, which makes the mix exactly linear in beta at fixed
(seed, i, t).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .losses import LabeledSample

#: Stream tag separating this generator's randomness from any other consumer.
STREAM_TAG = 0x646F6773

_U53 = 2.0 ** -53
_SHIFT = np.uint64(11)


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of the synthetic stream."""

    dim: int
    beta: float
    n: int
    seed: int

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must be in [0, 1], got {self.beta}")
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")


def _uniforms(raw: np.ndarray) -> np.ndarray:
    return (raw >> _SHIFT) * _U53


def _mix(u: np.ndarray, spec: SyntheticSpec, node: int, round: int) -> tuple:
    dim = spec.dim
    y = 1 if u[..., 0] < 0.5 else -1
    adv = (math.sin(node) - 0.5) + u[..., 1 : dim + 1]
    gauss_u = u[..., dim + 1 :] * (1.0 - _U53) + 0.5 * _U53
    sto = (y + 0.5 * math.sin(round)) + ndtri(gauss_u)
    return spec.beta * adv + (1.0 - spec.beta) * sto, y


def synthetic_sample(spec: SyntheticSpec, node: int, round: int) -> LabeledSample:
    """Sample for (node, round), a pure function of (spec.seed, node, round)."""
    if not 0 <= node < spec.n:
        raise ValueError(f"node must be in [0, {spec.n}), got {node}")
    if round < 1:
        raise ValueError(f"round must be >= 1, got {round}")
    bg = np.random.Philox(counter=[0, 0, node, round], key=[spec.seed, STREAM_TAG])
    u = _uniforms(bg.random_raw(2 * spec.dim + 1))
    features, y = _mix(u, spec, node, round)
    return LabeledSample(features, y)


class SyntheticStream:
    """Round-batched view of the same stream for the simulation hot path.

    Reuses a single Philox bit generator by resetting its counter per
    (node, round), which produces bits identical to ``synthetic_sample``
    but several times faster. Instances are not safe for concurrent use;
    create one per run (the pure function above is safe anywhere).
    """

    def __init__(self, spec: SyntheticSpec):
        self.spec = spec
        self._bg = np.random.Philox(key=[spec.seed, STREAM_TAG])
        # math.sin, not np.sin, so entries match the scalar path bit for bit
        self._node_center = np.array(
            [math.sin(i) - 0.5 for i in range(spec.n)]
        )

    def _raw(self, node: int, round: int) -> np.ndarray:
        st = self._bg.state
        st["state"]["counter"][:] = (0, 0, node, round)
        st["buffer_pos"] = 4  # discard buffered bits from the previous key
        self._bg.state = st
        return self._bg.random_raw(2 * self.spec.dim + 1)

    def round_batch(self, round: int) -> tuple:
        """All nodes' samples for one round: (features (n, dim), labels (n,))."""
        spec = self.spec
        dim = spec.dim
        u = np.empty((spec.n, 2 * dim + 1))
        for i in range(spec.n):
            u[i] = _uniforms(self._raw(i, round))
        labels = np.where(u[:, 0] < 0.5, 1.0, -1.0)
        adv = self._node_center[:, None] + u[:, 1 : dim + 1]
        gauss_u = u[:, dim + 1 :] * (1.0 - _U53) + 0.5 * _U53
        sto = (labels + 0.5 * math.sin(round))[:, None] + ndtri(gauss_u)
        return spec.beta * adv + (1.0 - spec.beta) * sto, labels
