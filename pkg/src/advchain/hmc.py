"""Hamiltonian Monte Carlo over arbitrary differentiable potentials.

The sampler targets p(theta) proportional to exp(-H(theta, v)) with
H = U + K.  Each transition refreshes the momentum, integrates Hamilton's
equations with the palindromic leapfrog scheme (half kick, T drifts with
full kicks between them, half kick), and applies a Metropolis-Hastings
correction.

Two acceptance conventions exist behind an explicit flag:

* ``"standard"`` accepts with min(1, exp(H_current - H_proposal)) and is the
  rule validated against analytic targets here;
* ``"attack"`` accepts with the opposite exponent, min(1, exp(H_proposal -
  H_current)), favouring transitions that *raise* the energy.  Attack chains
  use it because their energy is a misclassification loss to be maximized.

Neither convention is silently rewritten into the other; callers choose.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .rng import SeededRng

__all__ = [
    "CONVENTIONS",
    "HamiltonianSystem",
    "ChainState",
    "ChainTrace",
    "IntegrationError",
    "leapfrog",
    "mh_accept",
    "accept_probability",
    "run_chain",
    "gaussian_system",
    "rosenbrock_system",
    "write_trace_csv",
    "gaussian_momentum",
]

CONVENTIONS = ("standard", "attack")


class IntegrationError(RuntimeError):
    """Leapfrog encountered a non-finite gradient or energy."""


@dataclass
class HamiltonianSystem:
    """Potential/kinetic pair with their gradients.

    ``potential``/``kinetic`` map an array to a float; the gradient callables
    map an array to an array of the same shape.  The total energy
    H(theta, v) = U(theta) + K(v) must stay finite on the admissible domain.
    """

    potential: Callable[[np.ndarray], float]
    grad_potential: Callable[[np.ndarray], np.ndarray]
    kinetic: Callable[[np.ndarray], float]
    grad_kinetic: Callable[[np.ndarray], np.ndarray]

    def energy(self, position: np.ndarray, momentum: np.ndarray) -> float:
        return float(self.potential(position)) + float(self.kinetic(momentum))


@dataclass
class ChainState:
    position: np.ndarray
    momentum: np.ndarray
    energy: float
    step_index: int = 0


@dataclass
class ChainTrace:
    """Post-decision states of a chain, one entry per retained transition."""

    positions: list[np.ndarray] = field(default_factory=list)
    momenta: list[np.ndarray] = field(default_factory=list)
    accept_flags: list[bool] = field(default_factory=list)
    energies: list[float] = field(default_factory=list)
    aborted: bool = False

    def __len__(self) -> int:
        return len(self.positions)

    def acceptance_rate(self) -> float:
        return float(np.mean(self.accept_flags)) if self.accept_flags else 0.0

    def positions_array(self) -> np.ndarray:
        return np.stack(self.positions) if self.positions else np.zeros((0,))


def _grad(fn, x, what: str) -> np.ndarray:
    g = np.asarray(fn(x), dtype=np.float64)
    if not np.isfinite(g).all():
        raise IntegrationError(f"non-finite {what} gradient")
    return g


def leapfrog(sys: HamiltonianSystem, start: ChainState, step: float, n_steps: int) -> ChainState:
    """Integrate for ``n_steps`` position updates from ``start``.

    Scheme: half momentum kick, then alternating full position drifts and
    momentum kicks with the final kick halved, so the map is symmetric and
    time-reversible.  ``n_steps == 0`` applies the two half kicks only.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    if n_steps < 0:
        raise ValueError("n_steps must be >= 0")
    theta = np.array(start.position, dtype=np.float64)
    v = np.array(start.momentum, dtype=np.float64)
    v -= 0.5 * step * _grad(sys.grad_potential, theta, "potential")
    for t in range(1, n_steps + 1):
        theta += step * _grad(sys.grad_kinetic, v, "kinetic")
        if t < n_steps:
            v -= step * _grad(sys.grad_potential, theta, "potential")
    v -= 0.5 * step * _grad(sys.grad_potential, theta, "potential")
    energy = sys.energy(theta, v)
    if not np.isfinite(energy):
        raise IntegrationError("non-finite energy after integration")
    return ChainState(theta, v, energy, start.step_index + n_steps)


def accept_probability(h_current: float, h_proposal: float, convention: str) -> float:
    if convention not in CONVENTIONS:
        raise ValueError(f"unknown convention {convention!r}, expected one of {CONVENTIONS}")
    diff = h_current - h_proposal if convention == "standard" else h_proposal - h_current
    return 1.0 if diff >= 0.0 else float(np.exp(diff))


def mh_accept(rng: SeededRng, h_current: float, h_proposal: float, convention: str = "standard") -> bool:
    """Metropolis-Hastings decision; always consumes exactly one uniform."""
    u = rng.uniform()
    return u < accept_probability(h_current, h_proposal, convention)


def gaussian_momentum(rng: SeededRng, shape) -> np.ndarray:
    return rng.standard_normal(shape)


def run_chain(
    sys: HamiltonianSystem,
    init,
    step: float,
    n_steps: int,
    n_samples: int,
    momentum_sampler: Callable[[SeededRng, tuple], np.ndarray] = gaussian_momentum,
    convention: str = "standard",
    seed: int = 0,
    burn_in: int = 0,
    thin: int = 1,
) -> ChainTrace:
    """Run ``burn_in + n_samples*thin`` transitions, keeping every ``thin``-th
    after burn-in.  Each transition refreshes the momentum, integrates, and
    accepts or repeats the previous position.  An integration failure aborts
    the chain and returns the partial trace with ``aborted=True``.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    if burn_in < 0 or thin < 1:
        raise ValueError("burn_in must be >= 0 and thin >= 1")
    rng = SeededRng(seed)
    position = np.array(getattr(init, "data", init), dtype=np.float64)
    trace = ChainTrace()
    total = burn_in + n_samples * thin
    for s in range(total):
        v0 = np.asarray(momentum_sampler(rng, position.shape), dtype=np.float64)
        h_current = sys.energy(position, v0)
        try:
            proposal = leapfrog(sys, ChainState(position, v0, h_current, s), step, n_steps)
        except IntegrationError:
            trace.aborted = True
            return trace
        accepted = mh_accept(rng, h_current, proposal.energy, convention)
        if accepted:
            position = proposal.position
            state = (proposal.position, proposal.momentum, proposal.energy)
        else:
            state = (position, v0, h_current)
        if s >= burn_in and (s - burn_in) % thin == 0:
            trace.positions.append(np.array(state[0]))
            trace.momenta.append(np.array(state[1]))
            trace.accept_flags.append(bool(accepted))
            trace.energies.append(float(state[2]))
    return trace


def gaussian_system() -> HamiltonianSystem:
    """Standard normal target: U = ||theta||^2/2 with Gaussian kinetic energy."""
    return HamiltonianSystem(
        potential=lambda q: 0.5 * float(q @ q),
        grad_potential=lambda q: q,
        kinetic=lambda p: 0.5 * float(p @ p),
        grad_kinetic=lambda p: p,
    )


def rosenbrock_system(a: float = 1.0, b: float = 100.0, scale: float = 20.0) -> HamiltonianSystem:
    """Banana-shaped 2-D target U = ((a-x)^2 + b(y-x^2)^2) / scale."""

    def u(q):
        x, y = q
        return ((a - x) ** 2 + b * (y - x * x) ** 2) / scale

    def grad_u(q):
        x, y = q
        gx = (-2.0 * (a - x) - 4.0 * b * x * (y - x * x)) / scale
        gy = (2.0 * b * (y - x * x)) / scale
        return np.array([gx, gy])

    return HamiltonianSystem(
        potential=u,
        grad_potential=grad_u,
        kinetic=lambda p: 0.5 * float(p @ p),
        grad_kinetic=lambda p: p,
    )


def write_trace_csv(trace: ChainTrace, path) -> None:
    """Columns: step, accepted (0/1), energy, then the flattened position."""
    dim = trace.positions[0].size if trace.positions else 0
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["step", "accepted", "energy"] + [f"pos_{i}" for i in range(dim)])
        for i, (pos, flag, energy) in enumerate(
            zip(trace.positions, trace.accept_flags, trace.energies)
        ):
            writer.writerow([i, int(flag), repr(energy)] + [repr(v) for v in pos.ravel()])
