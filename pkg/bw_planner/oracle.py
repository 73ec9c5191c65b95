"""Brute-force reference chains for the finite buffer.

Both chains model the same system as the simulator: capacity N, arrivals
blocked at N, and at every departure epoch the content drops by
min(content, C).
"""

import math
from dataclasses import dataclass

import numpy as np

from .distributions import InterarrivalDistribution
from .errors import DomainError, NumericalDegeneracy

MAX_STATES = 201


@dataclass(frozen=True)
class FiniteChain:
    """Dense chain on contents 0..N.

    ``kind`` is ``generator`` (rows sum to 0) or ``transition`` (rows sum to 1).
    """
    matrix: np.ndarray
    kind: str

    def __post_init__(self):
        target = 0.0 if self.kind == "generator" else 1.0
        rows = self.matrix.sum(axis=1)
        if np.max(np.abs(rows - target)) > 1e-12:
            raise NumericalDegeneracy(f"{self.kind} rows do not sum to {target:g}")

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def stationary(self) -> np.ndarray:
        """Stationary row vector, normalised to one.

        Grassmann-Taksar-Heyman elimination on the off-diagonal rates; it
        never subtracts, so tiny tail probabilities keep full relative accuracy.
        """
        A = self.matrix.astype(float).copy()
        np.fill_diagonal(A, 0.0)
        n = self.size
        for k in range(n - 1, 0, -1):
            s = A[k, :k].sum()
            if not s > 0.0:
                raise NumericalDegeneracy(f"state {k} cannot reach lower states; chain is reducible")
            A[:k, k] /= s
            A[:k, :k] += np.outer(A[:k, k], A[k, :k])
        pi = np.zeros(n)
        pi[0] = 1.0
        for k in range(1, n):
            pi[k] = pi[:k] @ A[:k, k]
        return pi / pi.sum()

    def balance_residual(self) -> float:
        """Max absolute residual of the balance equations at the stationary vector."""
        pi = self.stationary()
        M = self.matrix if self.kind == "generator" else self.matrix - np.eye(self.size)
        return float(np.max(np.abs(pi @ M)))


def _check_size(N: int, C: int) -> None:
    if N < 1 or N + 1 > MAX_STATES:
        raise DomainError(f"oracle quota must lie in 1..{MAX_STATES - 1}, got {N}")
    if C < 1:
        raise DomainError(f"depletion rate must be positive, got {C}")


def ctmc_chain(lam: float, mu: float, C: int, N: int) -> FiniteChain:
    _check_size(N, C)
    Q = np.zeros((N + 1, N + 1))
    for m in range(N + 1):
        if m < N:
            Q[m, m + 1] += lam
        if m > 0:
            Q[m, max(0, m - C)] += mu
        Q[m, m] = -Q[m].sum()
    return FiniteChain(Q, "generator")


def ctmc_loss(lam: float, mu: float, C: int, N: int) -> float:
    """Loss fraction of M/M^C/1/N: the stationary probability of a full buffer."""
    return float(ctmc_chain(lam, mu, C, N).stationary()[N])


def embedded_chain(dist: InterarrivalDistribution, mu: float, C: int, N: int) -> FiniteChain:
    """Chain of contents seen by successive arrivals."""
    _check_size(N, C)
    w = dist.batch_weights(mu, N // C + 2)
    P = np.zeros((N + 1, N + 1))
    for m in range(N + 1):
        admitted = min(m + 1, N)
        for K in range(admitted // C + 1):
            j = admitted - C * K
            if j > 0:
                P[m, j] = w[K]
        # every larger number of epochs empties the buffer
        P[m, 0] += max(0.0, 1.0 - math.fsum(P[m, 1:]))
    return FiniteChain(P, "transition")


def embedded_loss(dist: InterarrivalDistribution, mu: float, C: int, N: int) -> float:
    """Loss fraction of GI/M^C/1/N from the pre-arrival chain."""
    return float(embedded_chain(dist, mu, C, N).stationary()[N])
