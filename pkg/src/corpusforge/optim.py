"""Adam and QHAdam with linear warm-up / inverse-square-root decay, plus a
small bench of analytic test problems for comparing them."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Callable

import numpy as np

from .errors import ConfigError, DataError

DIVERGED_LOSS = 1e12


@dataclass(frozen=True)
class OptimizerConfig:
    kind: str = "adam"
    lr0: float = 0.0005
    warmup: int = 1600
    beta1: float = 0.9
    beta2: float = 0.98
    eps: float = 1e-9
    nu1: float = 0.8
    nu2: float = 0.7

    def __post_init__(self) -> None:
        if self.kind not in ("adam", "qhadam"):
            raise ConfigError(f"unknown optimizer kind {self.kind!r}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("betas must lie in [0, 1)")
        if not (0 <= self.nu1 <= 1 and 0 <= self.nu2 <= 1):
            raise ConfigError("nu1, nu2 must lie in [0, 1]")
        if self.lr0 <= 0:
            raise ConfigError("lr0 must be positive")
        if self.warmup < 1:
            raise ConfigError("warmup must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


# Translation-model and language-model presets.
NMT_PRESET = OptimizerConfig()
LM_PRESET = OptimizerConfig(lr0=0.0003)


@dataclass
class OptimizerState:
    step: int
    m: np.ndarray
    v: np.ndarray

    @classmethod
    def zeros(cls, dim: int) -> "OptimizerState":
        return cls(0, np.zeros(dim), np.zeros(dim))


def lr_at(step: int, config: OptimizerConfig) -> float:
    """Linear warm-up to lr0, then decay proportional to 1/sqrt(step)."""
    if step < 1:
        raise ConfigError(f"step must be >= 1, got {step}")
    if step <= config.warmup:
        return config.lr0 * step / config.warmup
    return config.lr0 * math.sqrt(config.warmup / step)


def _moments(state: OptimizerState, grad: np.ndarray, config: OptimizerConfig):
    grad = np.asarray(grad, dtype=float)
    if grad.shape != state.m.shape:
        raise DataError(f"gradient shape {grad.shape} does not match state {state.m.shape}")
    if not np.all(np.isfinite(grad)):
        raise DataError("non-finite gradient")
    t = state.step + 1
    m = config.beta1 * state.m + (1 - config.beta1) * grad
    v = config.beta2 * state.v + (1 - config.beta2) * grad * grad
    m_hat = m / (1 - config.beta1**t)
    v_hat = v / (1 - config.beta2**t)
    return grad, OptimizerState(t, m, v), m_hat, v_hat


def adam_step(state: OptimizerState, grad: np.ndarray, config: OptimizerConfig) -> tuple[OptimizerState, np.ndarray]:
    """One Adam step; the returned update is subtracted from the parameters."""
    _, new, m_hat, v_hat = _moments(state, grad, config)
    return new, lr_at(new.step, config) * m_hat / (np.sqrt(v_hat) + config.eps)


def qhadam_step(state: OptimizerState, grad: np.ndarray, config: OptimizerConfig) -> tuple[OptimizerState, np.ndarray]:
    """One QHAdam step: Adam's bias-corrected moments blended with the raw
    gradient by nu1 (numerator) and nu2 (denominator); eps outside the root."""
    g, new, m_hat, v_hat = _moments(state, grad, config)
    num = (1 - config.nu1) * g + config.nu1 * m_hat
    den = np.sqrt((1 - config.nu2) * g * g + config.nu2 * v_hat) + config.eps
    return new, lr_at(new.step, config) * num / den


STEPPERS = {"adam": adam_step, "qhadam": qhadam_step}


# --- problems -----------------------------------------------------------------

@dataclass
class Problem:
    name: str
    dim: int
    loss: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]
    x0: np.ndarray
    optimum: np.ndarray | None = None


def quadratic(dim: int, seed: int = 0, cond: float = 10.0) -> Problem:
    """f(x) = 0.5 (x - c)^T A (x - c) with a random SPD A of condition ``cond``."""
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    eig = np.geomspace(1.0, cond, dim)
    a = (q * eig) @ q.T
    a = 0.5 * (a + a.T)
    c = rng.standard_normal(dim)
    x0 = c + rng.standard_normal(dim)
    return Problem(
        f"quadratic{dim}",
        dim,
        lambda x: float(0.5 * (x - c) @ a @ (x - c)),
        lambda x: a @ (x - c),
        x0,
        c,
    )


def rosenbrock() -> Problem:
    def loss(x):
        return float((1 - x[0]) ** 2 + 100 * (x[1] - x[0] ** 2) ** 2)

    def grad(x):
        return np.array([-2 * (1 - x[0]) - 400 * x[0] * (x[1] - x[0] ** 2), 200 * (x[1] - x[0] ** 2)])

    return Problem("rosenbrock", 2, loss, grad, np.array([-1.2, 1.0]), np.array([1.0, 1.0]))


def sphere(dim: int = 10) -> Problem:
    return Problem("sphere", dim, lambda x: float(x @ x), lambda x: 2 * x, np.ones(dim), np.zeros(dim))


def problem_by_name(name: str, seed: int = 0) -> Problem:
    if name == "rosenbrock":
        return rosenbrock()
    if name == "sphere":
        return sphere()
    if name.startswith("quadratic"):
        dim = int(name[len("quadratic"):] or 10)
        return quadratic(dim, seed)
    raise ConfigError(f"unknown problem {name!r}; choose rosenbrock, sphere or quadratic<dim>")


def bundled_problems() -> list[Problem]:
    return [rosenbrock(), sphere(), quadratic(10, seed=0), quadratic(50, seed=1)]


def grad_check(problem: Problem, theta: np.ndarray, h: float = 1e-5) -> float:
    """Max over coordinates of |central difference - grad| / max(1, |grad|)."""
    theta = np.asarray(theta, dtype=float)
    g = np.asarray(problem.grad(theta), dtype=float)
    worst = 0.0
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = h
        hi, lo = problem.loss(theta + e), problem.loss(theta - e)
        if not (math.isfinite(hi) and math.isfinite(lo)):
            raise DataError(f"loss is not finite around coordinate {i}")
        fd = (hi - lo) / (2 * h)
        worst = max(worst, abs(fd - g[i]) / max(1.0, abs(g[i])))
    return worst


# --- trials -------------------------------------------------------------------

@dataclass
class TrialResult:
    problem: str
    config: OptimizerConfig
    losses: list[float]
    final_loss: float
    best_loss: float
    steps_to_threshold: int | None
    diverged: bool
    theta: np.ndarray = field(repr=False, default=None)

    def report(self, max_points: int = 200) -> dict:
        stride = max(1, math.ceil(len(self.losses) / max_points))
        picked = list(range(0, len(self.losses), stride))
        if picked and picked[-1] != len(self.losses) - 1:
            picked.append(len(self.losses) - 1)
        return {
            "problem": self.problem,
            "config": self.config.to_dict(),
            "trajectory": [[i, self.losses[i]] for i in picked],
            "final_loss": self.final_loss,
            "best_loss": self.best_loss,
            "steps_to_threshold": self.steps_to_threshold,
            "diverged": self.diverged,
        }


def run_trial(
    problem: Problem,
    config: OptimizerConfig,
    steps: int,
    seed: int = 0,
    threshold: float = 1e-6,
    init_noise: float = 0.0,
) -> TrialResult:
    """Optimize ``problem`` from its start point (optionally jittered by
    ``init_noise`` * N(0, 1) drawn from ``seed``).

    ``losses[0]`` is the starting loss and ``losses[t]`` the loss after step t.
    A loss above 1e12, a non-finite one or an overflow while evaluating it
    ends the run as diverged.
    """
    rng = np.random.default_rng(seed)
    theta = problem.x0.astype(float) + init_noise * rng.standard_normal(problem.dim)
    state = OptimizerState.zeros(problem.dim)
    step_fn = STEPPERS[config.kind]
    losses = [problem.loss(theta)]
    hit = 0 if losses[0] <= threshold else None
    diverged = False
    for t in range(1, steps + 1):
        state, update = step_fn(state, problem.grad(theta), config)
        theta = theta - update
        try:
            loss = problem.loss(theta)
        except OverflowError:
            loss = math.inf
        losses.append(loss)
        if not math.isfinite(loss) or loss > DIVERGED_LOSS:
            diverged = True
            break
        if hit is None and loss <= threshold:
            hit = t
    finite = [x for x in losses if math.isfinite(x)]
    return TrialResult(problem.name, config, losses, losses[-1], min(finite), hit, diverged, theta)


def compare(problems: list[Problem], configs: list[OptimizerConfig], steps: int, seed: int = 0) -> list[TrialResult]:
    """Run every config on every problem."""
    return [run_trial(p, c, steps, seed) for p in problems for c in configs]


def with_kind(config: OptimizerConfig, kind: str) -> OptimizerConfig:
    return replace(config, kind=kind)
