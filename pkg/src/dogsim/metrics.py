"""Per-round measures, empirical bound constants, and the a-priori regret bound.

The headline performance number is the average loss (1/nT) sum_{i,t}
f_{i,t}(x_{i,t}); regret is reported against the best fixed model in
hindsight, found by full-batch gradient descent on the pooled empirical
loss. Dynamic-regret comparators over a drift budget are deliberately not
computed; average loss stands in for them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateParameters,
    DimensionMismatch,
    EmptyDataset,
    EmptyRun,
    NonConvergence,
)
from .losses import smoothness_bound

CSV_HEADER = "t,avg_loss,consensus_error,cum_loss"


def fmt17(x: float) -> str:
    """Decimal rendering at 17 significant digits (float64 round-trips)."""
    return "%.17g" % x


@dataclass(frozen=True)
class MetricsRecord:
    """Scalars recorded before the update of round t."""

    t: int
    avg_loss: float
    consensus_error: float
    cum_loss: float


@dataclass(frozen=True)
class BoundParams:
    """Constants entering the regret bound; rho < 1 required to evaluate."""

    n: int
    T: int
    eta: float
    G: float
    sigma: float
    L: float
    rho: float
    R: float
    M: float


def average_loss(records) -> float:
    """(1/T) sum_t avg_loss(t), i.e. (1/nT) of the total instantaneous loss."""
    records = list(records)
    if not records:
        raise EmptyRun("average loss needs at least one recorded round")
    return float(np.mean([r.avg_loss for r in records]))


def consensus_error(x_rows: np.ndarray) -> float:
    """(1/n) sum_i ||x_i - mean||^2; zero iff all rows agree."""
    x_rows = np.asarray(x_rows, dtype=float)
    centered = x_rows - x_rows.mean(axis=0)
    return float((centered * centered).sum() / x_rows.shape[0])


def gradient_descent(
    grad_fn,
    dim: int,
    step: float,
    grad_tol: float = 1e-8,
    max_iters: int = 100_000,
) -> np.ndarray:
    """Fixed-step descent from the origin until ||grad|| <= grad_tol.

    Raises:
        NonConvergence: iteration cap reached; carries the final norm.
    """
    x = np.zeros(dim)
    for _ in range(max_iters):
        g = grad_fn(x)
        norm = float(np.linalg.norm(g))
        if norm <= grad_tol:
            return x
        x = x - step * g
    raise NonConvergence("comparator descent stalled", float(np.linalg.norm(grad_fn(x))))


def offline_comparator(events, grad_tol: float = 1e-8, max_iters: int = 100_000) -> np.ndarray:
    """Best fixed model in hindsight for a set of (sample, spec) loss events.

    Minimizes the summed empirical loss by full-batch gradient descent with
    step 1/L_total where L_total is the pooled smoothness bound times the
    event count. Unique for gamma > 0 (strong convexity).
    """
    events = list(events)
    if not events:
        raise EmptyDataset("comparator needs at least one loss event")
    feats = np.stack([s.features for s, _ in events])
    labels = np.array([float(s.label) for s, _ in events])
    gammas = np.array([spec.gamma for _, spec in events])
    gamma_total = float(gammas.sum())
    count = len(events)
    max_gamma_spec = max((spec for _, spec in events), key=lambda sp: sp.gamma)
    l_total = count * smoothness_bound((s for s, _ in events), max_gamma_spec)

    def grad(x):
        z = -labels * (feats @ x)
        sig = np.empty_like(z)
        pos = z >= 0
        sig[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        ez = np.exp(z[~pos])
        sig[~pos] = ez / (1.0 + ez)
        return feats.T @ (-labels * sig) + gamma_total * x

    return gradient_descent(grad, feats.shape[1], 1.0 / l_total, grad_tol, max_iters)


def static_regret(records, events, comparator: np.ndarray) -> float:
    """Total loss of the run minus total loss of the fixed comparator."""
    records = list(records)
    if not records:
        raise EmptyRun("regret needs at least one recorded round")
    events = list(events)
    comparator = np.asarray(comparator, dtype=float)
    feats = np.stack([s.features for s, _ in events])
    if comparator.shape != (feats.shape[1],):
        raise DimensionMismatch(
            f"comparator dim {comparator.shape} != feature dim {feats.shape[1]}"
        )
    labels = np.array([float(s.label) for s, _ in events])
    gammas = np.array([spec.gamma for _, spec in events])
    z = -labels * (feats @ comparator)
    values = np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))
    total_star = float(values.sum() + 0.5 * gammas.sum() * float(comparator @ comparator))
    return records[-1].cum_loss - total_star


def estimate_gradient_bounds(grad_norms: np.ndarray) -> tuple:
    """Empirical stand-ins for the gradient magnitude and noise constants.

    g_hat is the largest observed per-sample gradient norm (an
    over-estimate of the mean-gradient bound in general). sigma_hat is the
    sample standard deviation of the norms around their per-node means,
    pooled with denominator (count - 1); zero when only one norm exists.
    """
    norms = np.asarray(grad_norms, dtype=float)
    if norms.size == 0:
        raise EmptyRun("no gradients recorded")
    if norms.ndim != 2:
        raise ValueError("expected a (rounds, nodes) array of gradient norms")
    g_hat = float(norms.max())
    count = norms.size
    if count == 1:
        return g_hat, 0.0
    dev = norms - norms.mean(axis=0)
    sigma_hat = float(np.sqrt((dev * dev).sum() / (count - 1)))
    return g_hat, sigma_hat


def regret_bound(p: BoundParams) -> float:
    """Closed-form a-priori bound on the dynamic regret of the gossip method.

    With c0 = 2L(G^2+s^2)/(1-rho)^2, c1 = 4L^2(G^2+s^2)/(1-rho)^2 and
    c2 = 2 + 1/(1-rho):

        eta*T*s^2 + c0*n*T*eta^2 + c1*n*T*eta^3
        + (n/(2 eta)) * (4 sqrt(R) M + R) + c2*n*eta*T*G^2
    """
    if p.rho >= 1.0:
        raise DegenerateParameters(f"bound requires rho < 1, got {p.rho}")
    if p.eta <= 0.0:
        raise DegenerateParameters(f"bound requires eta > 0, got {p.eta}")
    gap = 1.0 - p.rho
    noise = p.G**2 + p.sigma**2
    c0 = 2.0 * p.L * noise / gap**2
    c1 = 4.0 * p.L**2 * noise / gap**2
    c2 = 2.0 + 1.0 / gap
    return (
        p.eta * p.T * p.sigma**2
        + c0 * p.n * p.T * p.eta**2
        + c1 * p.n * p.T * p.eta**3
        + (p.n / (2.0 * p.eta)) * (4.0 * np.sqrt(p.R) * p.M + p.R)
        + c2 * p.n * p.eta * p.T * p.G**2
    )


def metrics_to_csv(records) -> str:
    """Render records in the fixed CSV schema (17 significant digits, LF)."""
    lines = [CSV_HEADER]
    for r in records:
        lines.append(
            f"{r.t},{fmt17(r.avg_loss)},{fmt17(r.consensus_error)},{fmt17(r.cum_loss)}"
        )
    return "\n".join(lines) + "\n"
