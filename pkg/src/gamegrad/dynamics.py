"""Learning dynamics: the ascent update, step-size schedules, noise, runner.

The runner iterates x_{t+1} = x_t + eta_{t+1} (v(x_t) + xi_{t+1}) and records
per-step diagnostics. Step order per iteration: obtain eta, evaluate the
field, sample noise, step, then feed the schedule the post-step observations.
Hot loops come in three bodies (scalar, unrolled 2-d affine, generic numpy)
that execute the identical recursion; tests pin them against each other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError
from .games import Game, JointAction

Array = np.ndarray

_CHUNK = 4096


# ---------------------------------------------------------------------------
# Step-size schedules
# ---------------------------------------------------------------------------

@dataclass
class StepFeedback:
    """Observations available to a schedule after one step has been taken."""

    t: int                    # 0-based index of the step just completed
    eta: float                # step size used for that step
    grad_norm_sq: float       # ||v(x_t)||^2 (or its noisy observation)
    next_grad_norm_sq: float  # ||v(x_{t+1})||^2
    step_norm_sq: float       # ||x_{t+1} - x_t||^2


def _validate_feedback(fb: StepFeedback) -> None:
    if fb.grad_norm_sq < 0 or fb.next_grad_norm_sq < 0 or fb.step_norm_sq < 0:
        raise ValueError("feedback norms must be nonnegative")
    if fb.eta <= 0:
        raise ValueError("feedback step size must be positive")


class ConstantSchedule:
    """Fixed step size eta."""

    kind = "constant"
    needs_exact_gradients = False
    tracks_beta = False

    def __init__(self, eta: float):
        if eta <= 0:
            raise ConfigError("constant step size must be positive")
        self.eta = float(eta)

    def fresh(self) -> "ConstantSchedule":
        return ConstantSchedule(self.eta)

    def first_step(self) -> float:
        return self.eta

    def next_step_fast(self, t, eta, g_prev, g_next, step_sq) -> float:
        return self.eta

    def next_step(self, fb: StepFeedback) -> float:
        _validate_feedback(fb)
        return self.eta

    def to_dict(self) -> dict:
        return {"kind": self.kind, "eta": self.eta}


class PowerSchedule:
    """Polynomial decay eta_t = c / t^p for the t-th step (1-indexed), eta_1 = c."""

    kind = "power"
    needs_exact_gradients = False
    tracks_beta = False

    def __init__(self, c: float, p: float):
        if c <= 0:
            raise ConfigError("power schedule scale c must be positive")
        if not 0.0 <= p <= 1.0:
            raise ConfigError("power schedule exponent p must lie in [0, 1]")
        self.c = float(c)
        self.p = float(p)

    def fresh(self) -> "PowerSchedule":
        return PowerSchedule(self.c, self.p)

    def first_step(self) -> float:
        return self.c

    def next_step_fast(self, t, eta, g_prev, g_next, step_sq) -> float:
        # step t (0-based) just finished; the next one is the (t+2)-th.
        return self.c / (t + 2.0) ** self.p

    def next_step(self, fb: StepFeedback) -> float:
        _validate_feedback(fb)
        return self.next_step_fast(fb.t, fb.eta, fb.grad_norm_sq, fb.next_grad_norm_sq, fb.step_norm_sq)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "c": self.c, "p": self.p}


class GradNormSchedule:
    """Adaptive step rule driven by exact gradient norms.

    Maintains an offset beta (multiplied by r whenever the gradient norm
    increased over the last step) plus the running sum of squared gradient
    norms; emits 1/sqrt(beta + sum). The first step uses 1/sqrt(beta1) so the
    whole sequence is nonincreasing.
    """

    kind = "grad_norm"
    needs_exact_gradients = True
    tracks_beta = True

    def __init__(self, beta1: float, r: float):
        if beta1 <= 0:
            raise ConfigError("beta1 must be positive")
        if r <= 1:
            raise ConfigError("growth factor r must exceed 1")
        self.beta1 = float(beta1)
        self.r = float(r)
        self.reset()

    def reset(self) -> None:
        self.beta = self.beta1
        self.grad_sq_sum = 0.0

    def fresh(self) -> "GradNormSchedule":
        return GradNormSchedule(self.beta1, self.r)

    def first_step(self) -> float:
        return 1.0 / math.sqrt(self.beta1)

    def next_step_fast(self, t, eta, g_prev, g_next, step_sq) -> float:
        if g_next > g_prev:
            self.beta *= self.r
        self.grad_sq_sum += g_prev
        return 1.0 / math.sqrt(self.beta + self.grad_sq_sum)

    def next_step(self, fb: StepFeedback) -> float:
        _validate_feedback(fb)
        return self.next_step_fast(fb.t, fb.eta, fb.grad_norm_sq, fb.next_grad_norm_sq, fb.step_norm_sq)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "beta1": self.beta1, "r": self.r}


class StepNormSchedule:
    """Adaptive step rule driven by realized step norms, usable under noise.

    Accumulates eta^{-2} ||x_t - x_{t+1}||^2 and emits
    1/sqrt(beta + log(t+2) + accumulator); natural log. The first step uses
    1/sqrt(beta) so the sequence is nonincreasing.
    """

    kind = "step_norm"
    needs_exact_gradients = False
    tracks_beta = False

    def __init__(self, beta: float):
        if beta <= 0:
            raise ConfigError("beta must be positive")
        self.beta = float(beta)
        self.reset()

    def reset(self) -> None:
        self.delta = 0.0

    def fresh(self) -> "StepNormSchedule":
        return StepNormSchedule(self.beta)

    def first_step(self) -> float:
        return 1.0 / math.sqrt(self.beta)

    def next_step_fast(self, t, eta, g_prev, g_next, step_sq) -> float:
        self.delta += step_sq / (eta * eta)
        return 1.0 / math.sqrt(self.beta + math.log(t + 2.0) + self.delta)

    def next_step(self, fb: StepFeedback) -> float:
        _validate_feedback(fb)
        return self.next_step_fast(fb.t, fb.eta, fb.grad_norm_sq, fb.next_grad_norm_sq, fb.step_norm_sq)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "beta": self.beta}


Schedule = ConstantSchedule | PowerSchedule | GradNormSchedule | StepNormSchedule

_SCHEDULE_KINDS = {
    "constant": lambda d: ConstantSchedule(d["eta"]),
    "power": lambda d: PowerSchedule(d["c"], d["p"]),
    "grad_norm": lambda d: GradNormSchedule(d["beta1"], d["r"]),
    "step_norm": lambda d: StepNormSchedule(d["beta"]),
}


def schedule_from_dict(doc: dict) -> Schedule:
    kind = doc.get("kind")
    if kind not in _SCHEDULE_KINDS:
        raise ConfigError(f"unknown schedule kind {kind!r}; available: {sorted(_SCHEDULE_KINDS)}")
    try:
        return _SCHEDULE_KINDS[kind](doc)
    except KeyError as exc:
        raise ConfigError(f"schedule {kind!r} is missing parameter {exc}") from None


def next_step_size(schedule: Schedule, feedback: StepFeedback) -> float:
    """Advance the schedule one step and return the step size for the next one."""
    return schedule.next_step(feedback)


# ---------------------------------------------------------------------------
# Noise models
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VarianceSchedule:
    """Nonincreasing nonnegative sequence used as tau_t or sigma_t^2.

    kinds: "constant" -> c; "power" -> c/(t+1)^q; "inv_t_log" -> c/((t+1) ln(t+2));
    "inv_loglog" -> c/ln(ln(t+3)).
    """

    kind: str
    c: float
    q: float = 1.0

    def __post_init__(self):
        if self.kind not in ("constant", "power", "inv_t_log", "inv_loglog"):
            raise ConfigError(f"unknown variance schedule kind {self.kind!r}")
        if self.c < 0:
            raise ConfigError("variance scale must be nonnegative")
        if self.kind == "power" and self.q < 0:
            raise ConfigError("variance decay exponent must be nonnegative")

    def value(self, t: int) -> float:
        return float(self.values(t, 1)[0])

    def values(self, t0: int, count: int) -> Array:
        t = np.arange(t0, t0 + count, dtype=float)
        if self.kind == "constant":
            return np.full(count, self.c)
        if self.kind == "power":
            return self.c / (t + 1.0) ** self.q
        if self.kind == "inv_t_log":
            return self.c / ((t + 1.0) * np.log(t + 2.0))
        return self.c / np.log(np.log(t + 3.0))

    def to_dict(self) -> dict:
        doc = {"kind": self.kind, "c": self.c}
        if self.kind == "power":
            doc["q"] = self.q
        return doc

    @staticmethod
    def from_dict(doc: dict) -> "VarianceSchedule":
        try:
            return VarianceSchedule(doc["kind"], doc["c"], doc.get("q", 1.0))
        except KeyError as exc:
            raise ConfigError(f"variance schedule is missing parameter {exc}") from None


@dataclass(frozen=True)
class NoNoise:
    kind: str = "none"

    def to_dict(self) -> dict:
        return {"kind": "none"}


@dataclass(frozen=True)
class RelativeNoise:
    """Zero-mean noise with second moment tau_t ||v(x_t)||^2 (exact for sphere shape)."""

    tau: VarianceSchedule
    shape: str = "sphere"
    kind: str = field(default="relative", init=False)

    def __post_init__(self):
        _check_shape(self.shape)

    def to_dict(self) -> dict:
        return {"kind": "relative", "tau": self.tau.to_dict(), "shape": self.shape}


@dataclass(frozen=True)
class AbsoluteNoise:
    """Zero-mean noise with second moment sigma_t^2 (exact for sphere shape)."""

    sigma_sq: VarianceSchedule
    shape: str = "sphere"
    kind: str = field(default="absolute", init=False)

    def __post_init__(self):
        _check_shape(self.shape)

    def to_dict(self) -> dict:
        return {"kind": "absolute", "sigma_sq": self.sigma_sq.to_dict(), "shape": self.shape}


NoiseModel = NoNoise | RelativeNoise | AbsoluteNoise


def _check_shape(shape: str) -> None:
    if shape not in ("sphere", "gaussian"):
        raise ConfigError(f"unknown noise shape {shape!r}")


def noise_from_dict(doc: dict) -> NoiseModel:
    kind = doc.get("kind", "none")
    if kind == "none":
        return NoNoise()
    if kind == "relative":
        return RelativeNoise(VarianceSchedule.from_dict(doc["tau"]), doc.get("shape", "sphere"))
    if kind == "absolute":
        return AbsoluteNoise(VarianceSchedule.from_dict(doc["sigma_sq"]), doc.get("shape", "sphere"))
    raise ConfigError(f"unknown noise kind {kind!r}")


def sample_noise(model: NoiseModel, t: int, v, rng: np.random.Generator):
    """Draw one noise vector for step t given the current gradient v.

    Returns the same container type it was given (JointAction in, JointAction
    out). Sphere shape has exactly the specified squared norm per draw;
    gaussian shape matches it in expectation. The generator is advanced by
    exactly n normal draws for both shapes, so chunked pre-draws in the
    runner consume the stream identically.
    """
    joint = isinstance(v, JointAction)
    vec = v.flat if joint else np.asarray(v, dtype=float).reshape(-1)
    n = vec.size
    if isinstance(model, NoNoise):
        out = np.zeros(n)
        return JointAction.from_flat(out, v.dims) if joint else out
    g = rng.standard_normal(n)
    if isinstance(model, RelativeNoise):
        target_sq = model.tau.value(t) * float(vec @ vec)
        shape = model.shape
    else:
        target_sq = model.sigma_sq.value(t)
        shape = model.shape
    if shape == "sphere":
        nrm = float(np.sqrt(g @ g))
        unit = g / nrm if nrm > 0 else g
        out = math.sqrt(target_sq) * unit
    else:
        out = math.sqrt(target_sq / n) * g
    return JointAction.from_flat(out, v.dims) if joint else out


# ---------------------------------------------------------------------------
# Single update and trajectory configuration
# ---------------------------------------------------------------------------

def step_ogd(x: JointAction, v_hat: JointAction, eta: float) -> JointAction:
    """One ascent step x + eta * v_hat, blockwise; pure function."""
    if x.dims != v_hat.dims:
        raise ValueError(f"action blocks {x.dims} do not match gradient blocks {v_hat.dims}")
    if eta <= 0:
        raise ValueError("step size must be positive")
    with np.errstate(over="ignore", invalid="ignore"):
        blocks = tuple(xb + eta * vb for xb, vb in zip(x.blocks, v_hat.blocks))
    for i, b in enumerate(blocks):
        if not np.all(np.isfinite(b)):
            raise ValueError(f"step diverged: non-finite result in player block {i}")
    return JointAction(blocks)


@dataclass(frozen=True)
class DynamicsConfig:
    """Everything the runner needs besides the game itself.

    thinning = 0 logs full states at step 0, dyadic steps and the horizon;
    thinning = k >= 1 additionally logs every k-th step.
    """

    schedule: Schedule
    horizon: int
    x0: tuple[float, ...]
    noise: NoiseModel = field(default_factory=NoNoise)
    blow_up_radius: Optional[float] = None
    thinning: int = 0

    def __post_init__(self):
        if self.horizon < 1:
            raise ConfigError("horizon must be at least 1")
        x0 = tuple(float(v) for v in self.x0)
        if not x0:
            raise ConfigError("x0 must be nonempty")
        if not all(math.isfinite(v) for v in x0):
            raise ConfigError("x0 must be finite")
        object.__setattr__(self, "x0", x0)
        if self.blow_up_radius is not None and self.blow_up_radius <= 0:
            raise ConfigError("blow-up radius must be positive")
        if self.thinning < 0:
            raise ConfigError("thinning must be nonnegative")
        if self.schedule.needs_exact_gradients and not isinstance(self.noise, NoNoise):
            raise ConfigError(
                "the grad_norm schedule compares exact gradient norms and cannot run "
                "with noisy feedback; use the step_norm schedule instead"
            )

    def to_dict(self) -> dict:
        return {
            "schedule": self.schedule.to_dict(),
            "noise": self.noise.to_dict(),
            "horizon": self.horizon,
            "x0": list(self.x0),
            "blow_up_radius": self.blow_up_radius,
            "thinning": self.thinning,
        }

    @staticmethod
    def from_dict(doc: dict) -> "DynamicsConfig":
        try:
            return DynamicsConfig(
                schedule=schedule_from_dict(doc["schedule"]),
                horizon=int(doc["horizon"]),
                x0=tuple(doc["x0"]),
                noise=noise_from_dict(doc.get("noise", {"kind": "none"})),
                blow_up_radius=doc.get("blow_up_radius"),
                thinning=int(doc.get("thinning", 0)),
            )
        except KeyError as exc:
            raise ConfigError(f"dynamics config is missing field {exc}") from None


@dataclass
class TrajectoryRecord:
    """Per-step log of one trial; arrays are truncated where a run diverged."""

    game_name: str
    config: dict
    gap: Array               # ||v(x_t)||^2 for t = 0..T
    eta: Array               # step size used at each step, length T
    step_norm_sq: Array      # ||x_{t+1} - x_t||^2, length T
    beta: Optional[Array]    # offset in force entering each step (grad_norm runs)
    state_steps: Array       # indices of logged states
    states: Array            # logged states, shape (len(state_steps), n)
    seed: Optional[int]
    horizon: int
    diverged: bool
    divergence_step: Optional[int]

    @property
    def steps_completed(self) -> int:
        return len(self.gap) - 1

    @property
    def final_state(self) -> Array:
        return self.states[-1]


# ---------------------------------------------------------------------------
# Runner
# ---------------------------------------------------------------------------

class _NoisePlan:
    """Chunked pre-draws matching sample_noise's stream consumption exactly."""

    def __init__(self, model: NoiseModel, n: int, rng: np.random.Generator):
        self.relative = isinstance(model, RelativeNoise)
        self.shape = model.shape
        self.n = n
        self.rng = rng
        var = model.tau if self.relative else model.sigma_sq
        self.var = var

    def chunk(self, t0: int, count: int):
        """Unit draws and sqrt-variance amplitudes for steps t0..t0+count-1."""
        g = self.rng.standard_normal((count, self.n))
        if self.shape == "sphere":
            nrm = np.sqrt(np.einsum("ij,ij->i", g, g))
            nrm[nrm == 0.0] = 1.0
            z = g / nrm[:, None]
            amp = np.sqrt(self.var.values(t0, count))
        else:
            z = g
            amp = np.sqrt(self.var.values(t0, count) / self.n)
        return z, amp


def _log_steps(horizon: int, thinning: int) -> Array:
    steps = {0, horizon}
    p = 1
    while p <= horizon:
        steps.add(p)
        p *= 2
    if thinning >= 1:
        steps.update(range(0, horizon + 1, thinning))
    return np.array(sorted(steps), dtype=np.int64)


def run_trajectory(game: Game, config: DynamicsConfig,
                   rng: int | np.random.Generator | None = None) -> TrajectoryRecord:
    """Run one trial of the dynamics on a game and record its trajectory.

    Divergence (non-finite values or leaving the blow-up ball) sets a flag
    and truncates the record instead of raising, so sweeps can aggregate
    failures.
    """
    n = game.n
    if len(config.x0) != n:
        raise ConfigError(f"x0 has length {len(config.x0)}, game dimension is {n}")
    seed = rng if isinstance(rng, int) else None
    if not isinstance(rng, np.random.Generator):
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))

    T = config.horizon
    schedule = config.schedule.fresh()
    radius = config.blow_up_radius
    if radius is None:
        radius = 1e8 * (1.0 + math.sqrt(sum(v * v for v in config.x0)))

    gap = np.empty(T + 1)
    eta_arr = np.empty(T)
    step_arr = np.empty(T)
    beta_arr = np.empty(T + 1) if schedule.tracks_beta else None
    log_steps = _log_steps(T, config.thinning)
    states = np.empty((len(log_steps), n))

    plan = None if isinstance(config.noise, NoNoise) else _NoisePlan(config.noise, n, rng)

    x0 = np.array(config.x0, dtype=float)
    if n == 1 and game.scalar_field is not None:
        t_stop, diverged = _run_scalar(game.scalar_field, float(x0[0]), T, schedule, plan,
                                       radius, gap, eta_arr, step_arr, beta_arr, log_steps, states)
    elif n == 2 and game.affine is not None:
        A, b = game.affine
        t_stop, diverged = _run_affine2(A, b, x0, T, schedule, plan, radius,
                                        gap, eta_arr, step_arr, beta_arr, log_steps, states)
    else:
        t_stop, diverged = _run_generic(game.field, x0, T, schedule, plan, radius,
                                        gap, eta_arr, step_arr, beta_arr, log_steps, states)

    logged = int(np.searchsorted(log_steps, t_stop, side="right"))
    return TrajectoryRecord(
        game_name=game.name,
        config=config.to_dict(),
        gap=gap[:t_stop + 1],
        eta=eta_arr[:t_stop],
        step_norm_sq=step_arr[:t_stop],
        beta=None if beta_arr is None else beta_arr[:t_stop + 1],
        state_steps=log_steps[:logged],
        states=states[:logged],
        seed=seed,
        horizon=T,
        diverged=diverged,
        divergence_step=t_stop if diverged else None,
    )


def _run_generic(field_fn, x, T, schedule, plan, radius, gap, eta_arr, step_arr,
                 beta_arr, log_steps, states):
    r2 = radius * radius
    v = np.asarray(field_fn(x), dtype=float)
    g = float(v @ v)
    gap[0] = g
    if beta_arr is not None:
        beta_arr[0] = schedule.beta
    states[0] = x
    log_ptr = 1
    next_log = log_steps[log_ptr] if log_ptr < len(log_steps) else T + 1

    eta_next = schedule.first_step()
    is_constant = isinstance(schedule, ConstantSchedule)
    next_fast = schedule.next_step_fast
    t = 0
    while t < T:
        count = min(_CHUNK, T - t) if plan is not None else T - t
        if plan is not None:
            z_chunk, amp_chunk = plan.chunk(t, count)
        for k in range(count):
            eta = eta_next
            eta_arr[t] = eta
            if plan is None:
                x_new = x + eta * v
            else:
                amp = amp_chunk[k] * math.sqrt(g) if plan.relative else amp_chunk[k]
                x_new = x + eta * (v + amp * z_chunk[k])
            v_new = np.asarray(field_fn(x_new), dtype=float)
            g_new = float(v_new @ v_new)
            gap[t + 1] = g_new
            d = x_new - x
            step_sq = float(d @ d)
            step_arr[t] = step_sq
            xsq = float(x_new @ x_new)
            if not (g_new < math.inf) or not (xsq <= r2):
                if beta_arr is not None:
                    beta_arr[t + 1] = schedule.beta
                return t + 1, True
            if t + 1 == next_log:
                states[log_ptr] = x_new
                log_ptr += 1
                next_log = log_steps[log_ptr] if log_ptr < len(log_steps) else T + 1
            if not is_constant:
                eta_next = next_fast(t, eta, g, g_new, step_sq)
            if beta_arr is not None:
                beta_arr[t + 1] = schedule.beta
            x, v, g = x_new, v_new, g_new
            t += 1
    return T, False


def _run_scalar(f, x, T, schedule, plan, radius, gap, eta_arr, step_arr,
                beta_arr, log_steps, states):
    v = f(x)
    g = v * v
    gap[0] = g
    if beta_arr is not None:
        beta_arr[0] = schedule.beta
    states[0, 0] = x
    log_list = log_steps.tolist()
    log_ptr = 1
    next_log = log_list[log_ptr] if log_ptr < len(log_list) else T + 1

    eta_next = schedule.first_step()
    is_constant = isinstance(schedule, ConstantSchedule)
    next_fast = schedule.next_step_fast
    relative = plan.relative if plan is not None else False
    track_beta = beta_arr is not None
    sqrt = math.sqrt
    inf = math.inf
    r2 = radius * radius
    t = 0
    while t < T:
        count = min(_CHUNK, T - t) if plan is not None else T - t
        if plan is not None:
            z_chunk, amp_chunk = plan.chunk(t, count)
            zs = z_chunk[:, 0].tolist()
            amps = amp_chunk.tolist()
        for k in range(count):
            eta = eta_next
            eta_arr[t] = eta
            if plan is None:
                x_new = x + eta * v
            else:
                amp = amps[k] * sqrt(g) if relative else amps[k]
                x_new = x + eta * (v + amp * zs[k])
            v_new = f(x_new)
            g_new = v_new * v_new
            gap[t + 1] = g_new
            d = x_new - x
            step_sq = d * d
            step_arr[t] = step_sq
            if not (g_new < inf) or not (x_new * x_new <= r2):
                if track_beta:
                    beta_arr[t + 1] = schedule.beta
                return t + 1, True
            if t + 1 == next_log:
                states[log_ptr, 0] = x_new
                log_ptr += 1
                next_log = log_list[log_ptr] if log_ptr < len(log_list) else T + 1
            if not is_constant:
                eta_next = next_fast(t, eta, g, g_new, step_sq)
            if track_beta:
                beta_arr[t + 1] = schedule.beta
            x, v, g = x_new, v_new, g_new
            t += 1
    return T, False


def _run_affine2(A, b, x0, T, schedule, plan, radius, gap, eta_arr, step_arr,
                 beta_arr, log_steps, states):
    a00, a01 = float(A[0, 0]), float(A[0, 1])
    a10, a11 = float(A[1, 0]), float(A[1, 1])
    b0, b1 = float(b[0]), float(b[1])
    x0_, x1_ = float(x0[0]), float(x0[1])

    v0 = b0 - (a00 * x0_ + a01 * x1_)
    v1 = b1 - (a10 * x0_ + a11 * x1_)
    g = v0 * v0 + v1 * v1
    gap[0] = g
    if beta_arr is not None:
        beta_arr[0] = schedule.beta
    states[0, 0] = x0_
    states[0, 1] = x1_
    log_list = log_steps.tolist()
    log_ptr = 1
    next_log = log_list[log_ptr] if log_ptr < len(log_list) else T + 1

    eta_next = schedule.first_step()
    is_constant = isinstance(schedule, ConstantSchedule)
    next_fast = schedule.next_step_fast
    relative = plan.relative if plan is not None else False
    track_beta = beta_arr is not None
    sqrt = math.sqrt
    inf = math.inf
    r2 = radius * radius
    t = 0
    while t < T:
        count = min(_CHUNK, T - t) if plan is not None else T - t
        if plan is not None:
            z_chunk, amp_chunk = plan.chunk(t, count)
            zs = z_chunk.tolist()
            amps = amp_chunk.tolist()
        for k in range(count):
            eta = eta_next
            eta_arr[t] = eta
            if plan is None:
                y0 = x0_ + eta * v0
                y1 = x1_ + eta * v1
            else:
                amp = amps[k] * sqrt(g) if relative else amps[k]
                zk = zs[k]
                y0 = x0_ + eta * (v0 + amp * zk[0])
                y1 = x1_ + eta * (v1 + amp * zk[1])
            w0 = b0 - (a00 * y0 + a01 * y1)
            w1 = b1 - (a10 * y0 + a11 * y1)
            g_new = w0 * w0 + w1 * w1
            gap[t + 1] = g_new
            d0 = y0 - x0_
            d1 = y1 - x1_
            step_sq = d0 * d0 + d1 * d1
            step_arr[t] = step_sq
            if not (g_new < inf) or not (y0 * y0 + y1 * y1 <= r2):
                if track_beta:
                    beta_arr[t + 1] = schedule.beta
                return t + 1, True
            if t + 1 == next_log:
                states[log_ptr, 0] = y0
                states[log_ptr, 1] = y1
                log_ptr += 1
                next_log = log_list[log_ptr] if log_ptr < len(log_list) else T + 1
            if not is_constant:
                eta_next = next_fast(t, eta, g, g_new, step_sq)
            if track_beta:
                beta_arr[t + 1] = schedule.beta
            x0_, x1_, v0, v1, g = y0, y1, w0, w1, g_new
            t += 1
    return T, False
