"""Simulated button user: Gaussian policy, REINFORCE, meta-adaptation.

The policy is a small tanh network mapping a 5-feature observation to a
mean commanded force, with one global log-std.  Training is REINFORCE
with a batch-mean baseline; meta-training follows the first-order
scheme: adapt a copy per task, then apply the mean post-adaptation
gradient to the shared initialization.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import seeds
from .button import (
    DEFAULT_DT_S,
    DEFAULT_MASS_KG,
    DESIGN_BOUNDS,
    FORCE_CEILING_N,
    ButtonDesignParams,
    FdvvModel,
    design_to_fdvv,
)

_log = logging.getLogger(__name__)

GAMMA = 0.995
ACTION_MAX_N = 6.0
STEP_PENALTY = -0.01
EFFORT_COEF = 1e-4
SUCCESS_REWARD = 10.0
TIMEOUT_PENALTY = -5.0
# Observation scaling constants.
VELOCITY_SCALE = 500.0
LOG_STD_INIT = -0.5
# Fresh policies start with a pressing prior so an activation signal exists.
OUTPUT_BIAS_INIT_N = 2.0

DEFAULT_LAYER_SIZES = (5, 32, 32, 1)
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


def param_count(layer_sizes: tuple[int, ...]) -> int:
    n = sum(a * b + b for a, b in zip(layer_sizes, layer_sizes[1:]))
    return n + 1  # global log-std


@dataclass(frozen=True)
class PolicyParams:
    """Flat parameter vector plus the architecture that shapes it.

    Layout: per layer the weight matrix (row-major) then the bias, with
    the global log-std as the final entry.
    """

    layer_sizes: tuple[int, ...]
    vector: np.ndarray

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        vec = np.asarray(self.vector, dtype=float).ravel()
        if len(sizes) < 2 or sizes[0] != 5 or sizes[-1] != 1:
            raise ValueError(f"layer sizes must run 5 -> ... -> 1, got {sizes}")
        if vec.size != param_count(sizes):
            raise ValueError(f"expected {param_count(sizes)} parameters, got {vec.size}")
        if not np.all(np.isfinite(vec)):
            raise ValueError("policy parameters must be finite")
        object.__setattr__(self, "layer_sizes", sizes)
        object.__setattr__(self, "vector", vec)

    @property
    def log_std(self) -> float:
        return float(self.vector[-1])

    @cached_property
    def weights(self) -> tuple[tuple[np.ndarray, np.ndarray], ...]:
        out = []
        at = 0
        for n_in, n_out in zip(self.layer_sizes, self.layer_sizes[1:]):
            w = self.vector[at : at + n_in * n_out].reshape(n_in, n_out)
            at += n_in * n_out
            b = self.vector[at : at + n_out]
            at += n_out
            out.append((w, b))
        return tuple(out)

    def replaced(self, vector: np.ndarray) -> "PolicyParams":
        return PolicyParams(self.layer_sizes, vector)


def init_policy(seed, layer_sizes: tuple[int, ...] = DEFAULT_LAYER_SIZES) -> PolicyParams:
    """Seeded random initialization with a pressing output bias."""
    rng = np.random.default_rng(seed)
    parts = []
    for n_in, n_out in zip(layer_sizes, layer_sizes[1:]):
        parts.append(rng.normal(0.0, 1.0 / math.sqrt(n_in), size=n_in * n_out))
        parts.append(np.zeros(n_out))
    parts[-1] = np.full(layer_sizes[-1], OUTPUT_BIAS_INIT_N)
    parts.append(np.array([LOG_STD_INIT]))
    return PolicyParams(tuple(layer_sizes), np.concatenate(parts))


def policy_mean(params: PolicyParams, obs) -> float:
    """Deterministic mean force for one observation."""
    h = np.asarray(obs, dtype=float)
    layers = params.weights
    for w, b in layers[:-1]:
        h = np.tanh(h @ w + b)
    w, b = layers[-1]
    return float((h @ w + b)[0])


def _mean_batch(params: PolicyParams, obs: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    """Batched forward pass; returns means and hidden activations."""
    layers = params.weights
    hidden = []
    h = obs
    for w, b in layers[:-1]:
        h = np.tanh(h @ w + b)
        hidden.append(h)
    w, b = layers[-1]
    return (h @ w + b)[:, 0], hidden


def policy_act(params: PolicyParams, obs, rng) -> tuple[float, float]:
    """Sample one action: Normal(mean, exp(log_std)) clamped to [0, 6] N.

    The log-probability is of the raw (pre-clamp) draw.
    """
    o = np.asarray(obs, dtype=float)
    if o.shape != (5,) or not np.all(np.isfinite(o)):
        raise ValueError(f"observation must be 5 finite values, got {o}")
    mean = policy_mean(params, o)
    sigma = math.exp(params.log_std)
    z = float(rng.standard_normal())
    raw = mean + sigma * z
    log_prob = -0.5 * z * z - params.log_std - _HALF_LOG_2PI
    return min(max(raw, 0.0), ACTION_MAX_N), log_prob


@dataclass(frozen=True)
class TaskSpec:
    """One press task: reach activation, then release, within the horizon."""

    design: ButtonDesignParams
    horizon: int = 1000
    sensory_delay: int = 50
    dwell_limit: int = 300

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.sensory_delay < 0 or self.dwell_limit < 1:
            raise ValueError("sensory_delay must be >= 0 and dwell_limit >= 1")


@dataclass(frozen=True)
class Trajectory:
    observations: np.ndarray
    actions: np.ndarray
    raw_actions: np.ndarray
    log_probs: np.ndarray
    rewards: np.ndarray
    success: bool
    activation_step: int | None
    return_: float

    def __len__(self) -> int:
        return self.actions.size

    @cached_property
    def returns_to_go(self) -> np.ndarray:
        out = np.empty_like(self.rewards)
        acc = 0.0
        for i in range(self.rewards.size - 1, -1, -1):
            acc = self.rewards[i] + GAMMA * acc
            out[i] = acc
        return out


def rollout(params: PolicyParams, task: TaskSpec, model: FdvvModel, seed) -> Trajectory:
    """One seeded episode against the simulated button at 1 kHz.

    Physics matches the public stepper exactly (same arithmetic on the
    same spring lookup); the loop is inlined so training stays at desk
    scale.  Pre-drawing the noise makes the episode a pure function of
    (params, task, model, seed).
    """
    rng = np.random.default_rng(seed)
    horizon = task.horizon
    z = rng.standard_normal(horizon)
    sigma = math.exp(params.log_std)
    log_std = params.log_std
    layers = params.weights
    hidden_wb = layers[:-1]
    w_out, b_out = layers[-1]

    travel = model.travel
    act_disp = model.activation_disp
    rel_disp = model.release_disp
    damping = model.damping
    dt = DEFAULT_DT_S
    mass_kg = DEFAULT_MASS_KG

    obs_buf = np.empty((horizon, 5))
    actions = np.empty(horizon)
    raws = np.empty(horizon)
    lps = np.empty(horizon)
    rewards = np.empty(horizon)

    d = 0.0
    v = 0.0
    activated = False
    activation_step: int | None = None
    success = False
    steps = 0
    for t in range(horizon):
        spring = model._spring_force(d, v)
        cue = 1.0 if activation_step is not None and t >= activation_step + task.sensory_delay else 0.0
        obs = obs_buf[t]
        obs[0] = d / travel
        obs[1] = v / VELOCITY_SCALE
        obs[2] = spring / FORCE_CEILING_N
        obs[3] = cue
        obs[4] = (horizon - t) / horizon

        h = obs
        for w, b in hidden_wb:
            h = np.tanh(h @ w + b)
        mean = float((h @ w_out)[0]) + b_out[0]
        raw = mean + sigma * z[t]
        a = min(max(raw, 0.0), ACTION_MAX_N)
        actions[t] = a
        raws[t] = raw
        lps[t] = -0.5 * z[t] * z[t] - log_std - _HALF_LOG_2PI

        # Same operation order as the public stepper, for bit-identical replay.
        accel = (a - spring - damping * v) * 1000.0 / mass_kg
        v = v + accel * dt
        d_new = d + v * dt
        if d_new <= 0.0:
            d_new, v = 0.0, 0.0
        elif d_new >= travel:
            d_new, v = travel, 0.0

        reward = STEP_PENALTY - EFFORT_COEF * a * a
        done = False
        if not activated and d < act_disp <= d_new:
            activated = True
            activation_step = t
        elif activated and d_new <= rel_disp < d:
            activated = False
            success = True
            reward += SUCCESS_REWARD
            done = True
        d = d_new

        if not done and activated and t - activation_step >= task.dwell_limit:
            reward += TIMEOUT_PENALTY
            done = True
        if not done and t == horizon - 1:
            reward += TIMEOUT_PENALTY
            done = True
        rewards[t] = reward
        steps = t + 1
        if done:
            break

    rewards = rewards[:steps]
    ret = 0.0
    for i in range(steps - 1, -1, -1):
        ret = rewards[i] + GAMMA * ret
    return Trajectory(
        observations=obs_buf[:steps].copy(),
        actions=actions[:steps].copy(),
        raw_actions=raws[:steps].copy(),
        log_probs=lps[:steps].copy(),
        rewards=rewards.copy(),
        success=success,
        activation_step=activation_step,
        return_=float(ret),
    )


def _pooled(trajectories: list[Trajectory], baseline: float | None):
    obs = np.concatenate([t.observations for t in trajectories])
    raws = np.concatenate([t.raw_actions for t in trajectories])
    gains = np.concatenate([t.returns_to_go for t in trajectories])
    b = float(np.mean([t.return_ for t in trajectories])) if baseline is None else baseline
    return obs, raws, gains - b


def surrogate_objective(
    trajectories: list[Trajectory], params: PolicyParams, baseline: float | None = None
) -> float:
    """Mean over pooled steps of log-probability times advantage.

    Its gradient at the sampling parameters is exactly what
    :func:`policy_gradient` returns, which makes it the finite-difference
    reference for gradient checks.
    """
    if not trajectories:
        raise ValueError("need at least one trajectory")
    obs, raws, adv = _pooled(trajectories, baseline)
    means, _ = _mean_batch(params, obs)
    sigma = math.exp(params.log_std)
    zs = (raws - means) / sigma
    lps = -0.5 * zs * zs - params.log_std - _HALF_LOG_2PI
    return float(np.mean(lps * adv))


def policy_gradient(
    trajectories: list[Trajectory], params: PolicyParams, baseline: float | None = None
) -> np.ndarray:
    """REINFORCE gradient, averaged over all pooled steps.

    Advantage is the discounted return-to-go minus a constant baseline
    (the batch-mean return unless one is supplied).

    Raises:
        ValueError: empty batch.
    """
    if not trajectories:
        raise ValueError("need at least one trajectory")
    obs, raws, adv = _pooled(trajectories, baseline)
    n = obs.shape[0]
    means, hidden = _mean_batch(params, obs)
    sigma = math.exp(params.log_std)
    zs = (raws - means) / sigma

    layers = params.weights
    # d(surrogate)/d(mean_i), including the 1/n of the pooled mean.
    delta = (adv * zs / sigma / n)[:, None]
    grads: list[np.ndarray] = []
    for li in range(len(layers) - 1, -1, -1):
        w, _ = layers[li]
        x = obs if li == 0 else hidden[li - 1]
        grads.append(np.concatenate([(x.T @ delta).ravel(), delta.sum(axis=0)]))
        if li > 0:
            delta = (delta @ w.T) * (1.0 - hidden[li - 1] ** 2)
    grads.reverse()
    g_log_std = float(np.mean(adv * (zs * zs - 1.0)))
    return np.concatenate(grads + [np.array([g_log_std])])


@dataclass(frozen=True)
class MetaPolicy:
    """Shared initialization plus the adaptation recipe."""

    init_params: PolicyParams
    inner_lr: float = 0.05
    adapt_episodes: int = 8

    def __post_init__(self):
        if self.inner_lr <= 0:
            raise ValueError("inner_lr must be > 0")
        if self.adapt_episodes < 0:
            raise ValueError("adapt_episodes must be >= 0")


_BATCH = 4


def adapt(meta: MetaPolicy, task: TaskSpec, model: FdvvModel, seed) -> PolicyParams:
    """Per-task adaptation: K episodes in batches of 4, one step per batch."""
    params = meta.init_params
    remaining = meta.adapt_episodes
    batch_index = 0
    while remaining > 0:
        size = min(_BATCH, remaining)
        batch = [
            rollout(params, task, model, seeds.seed_for(seed, "adapt", batch_index, j))
            for j in range(size)
        ]
        grad = policy_gradient(batch, params)
        params = params.replaced(params.vector + meta.inner_lr * grad)
        remaining -= size
        batch_index += 1
    return params


def default_task_sampler(rng) -> ButtonDesignParams:
    """Uniform draw over the optimizer's design box."""
    values = {name: float(rng.uniform(lo, hi)) for name, (lo, hi) in DESIGN_BOUNDS.items()}
    return ButtonDesignParams(**values)


def meta_train(
    task_sampler,
    iterations: int,
    meta_lr: float = 0.05,
    seed: int = 0,
    layer_sizes: tuple[int, ...] = DEFAULT_LAYER_SIZES,
    inner_lr: float = 0.05,
    adapt_episodes: int = 8,
    tasks_per_iteration: int = 8,
    log_every: int = 0,
) -> MetaPolicy:
    """First-order meta-training of the policy initialization.

    Per iteration: sample tasks, adapt each with one inner batch, roll
    out 4 post-adaptation episodes per task, and move the initialization
    along the mean post-adaptation gradient.

    Raises:
        ValueError: iterations < 0.
    """
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    init = init_policy(seeds.seed_for(seed, "meta_init"), layer_sizes)
    for it in range(iterations):
        grads = []
        for j in range(tasks_per_iteration):
            design = task_sampler(seeds.rng_for(seed, "meta_task", it, j))
            model = design_to_fdvv(design)
            task = TaskSpec(design)
            adapted = adapt(
                MetaPolicy(init, inner_lr, _BATCH),
                task,
                model,
                seeds.seed_int(seed, "meta_inner", it, j),
            )
            post = [
                rollout(adapted, task, model, seeds.seed_for(seed, "meta_post", it, j, r))
                for r in range(_BATCH)
            ]
            grads.append(policy_gradient(post, adapted))
        init = init.replaced(init.vector + meta_lr * np.mean(grads, axis=0))
        if log_every and (it + 1) % log_every == 0:
            _log.info("meta iteration %d of %d done", it + 1, iterations)
    return MetaPolicy(init, inner_lr, adapt_episodes)
