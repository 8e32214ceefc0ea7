"""Continuous games given by their joint payoff-gradient field.

A game couples N players, each owning a block of the joint action vector,
through a stacked gradient field v(x) = (v_1(x), ..., v_N(x)) where v_i is the
gradient of player i's payoff with respect to its own block. Payoffs are
maximized, so learning dynamics ascend v. Built-in instances are cocoercive
with known constants and known Nash sets.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigError, IndeterminateResult, UnsupportedOperation

Array = np.ndarray

# Relative eigenvalue cutoff below which the quadratic Nash solve treats a
# singular value as zero (rank-deficient Nash sets are the interesting case).
RANK_TOL = 1e-10


@dataclass(frozen=True)
class JointAction:
    """Stacked action profile, one real vector block per player."""

    blocks: tuple[Array, ...]

    def __post_init__(self):
        blocks = tuple(np.asarray(b, dtype=float).reshape(-1) for b in self.blocks)
        if not blocks:
            raise ValueError("joint action needs at least one player block")
        for i, b in enumerate(blocks):
            if b.size == 0:
                raise ValueError(f"player block {i} is empty")
            if not np.all(np.isfinite(b)):
                raise ValueError(f"player block {i} has non-finite entries")
        object.__setattr__(self, "blocks", blocks)

    @classmethod
    def from_flat(cls, vec, dims: Sequence[int]) -> "JointAction":
        vec = np.asarray(vec, dtype=float).reshape(-1)
        if vec.size != sum(dims):
            raise ValueError(f"vector of length {vec.size} does not split into blocks {tuple(dims)}")
        out, k = [], 0
        for d in dims:
            out.append(vec[k:k + d])
            k += d
        return cls(tuple(out))

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(b.size for b in self.blocks)

    @property
    def n(self) -> int:
        return sum(b.size for b in self.blocks)

    @property
    def flat(self) -> Array:
        return np.concatenate(self.blocks)


@dataclass(frozen=True)
class Game:
    """A continuous game: player dimensions plus the stacked gradient field.

    ``field`` maps a flat joint-action vector to the flat stacked gradient.
    ``payoffs``, ``nash_oracle`` and ``cocoercivity`` are optional extras that
    built-in instances provide; ``affine`` is set to (A, b) when the field is
    x -> b - A @ x, and ``scalar_field`` mirrors ``field`` for one-dimensional
    games. Games are immutable and safe to share across workers.
    """

    dims: tuple[int, ...]
    field: Callable[[Array], Array]
    payoffs: Optional[tuple[Callable[[Array], float], ...]] = None
    nash_oracle: Optional[Callable[[Array], Array]] = None
    cocoercivity: Optional[float] = None
    name: str = ""
    scalar_field: Optional[Callable[[float], float]] = None
    affine: Optional[tuple[Array, Array]] = None

    @property
    def n(self) -> int:
        return sum(self.dims)

    @property
    def players(self) -> int:
        return len(self.dims)


@dataclass(frozen=True)
class GameSpec:
    """Serializable game description: a kind tag plus a parameter table."""

    kind: str
    params: dict = field(default_factory=dict)

    @staticmethod
    def quadratic(matrix, offset, dims: Optional[Sequence[int]] = None) -> "GameSpec":
        params = {
            "matrix": [[float(v) for v in row] for row in np.atleast_2d(np.asarray(matrix, dtype=float))],
            "offset": [float(v) for v in np.asarray(offset, dtype=float).reshape(-1)],
        }
        if dims is not None:
            params["dims"] = [int(d) for d in dims]
        return GameSpec("quadratic", params)

    @staticmethod
    def piecewise_scalar() -> "GameSpec":
        return GameSpec("piecewise_scalar", {})

    @staticmethod
    def random_cocoercive(n: int, seed: int, conditioning: float = 4.0) -> "GameSpec":
        return GameSpec("random_cocoercive", {"n": int(n), "seed": int(seed), "conditioning": float(conditioning)})

    def to_dict(self) -> dict:
        return {"kind": self.kind, **self.params}

    @staticmethod
    def from_dict(doc: dict) -> "GameSpec":
        if "kind" not in doc:
            raise ConfigError("game spec is missing the 'kind' tag")
        params = {k: v for k, v in doc.items() if k != "kind"}
        return GameSpec(str(doc["kind"]), params)


def _quadratic_parts(A: Array, b: Array, name: str):
    """Nash oracle, payoffs and cocoercivity for the field x -> b - A x."""
    eigvals, eigvecs = np.linalg.eigh(A)
    lam_max = float(eigvals[-1])
    tol = 1e-9 * max(1.0, abs(lam_max))
    if eigvals[0] < -tol:
        raise ConfigError(
            f"{name or 'quadratic'}: matrix has negative eigenvalue {eigvals[0]:.3e}; "
            "the induced field would not be cocoercive"
        )

    if lam_max <= tol:
        # Constant field b; a Nash set exists only when b == 0 (everything).
        field = lambda x: b - A @ x  # noqa: E731
        oracle = (lambda x: np.array(x, dtype=float)) if not np.any(b) else None
        return field, oracle, None, None

    cutoff = RANK_TOL * lam_max
    keep = eigvals > cutoff
    null = eigvecs[:, ~keep]
    # Particular solution of A x = b via the spectral pseudo-inverse.
    x_part = eigvecs[:, keep] @ ((eigvecs[:, keep].T @ b) / eigvals[keep])
    consistent = bool(np.linalg.norm(A @ x_part - b) <= 1e-9 * (1.0 + np.linalg.norm(b)))

    def field(x: Array) -> Array:
        return b - A @ x

    oracle = None
    if consistent:
        if null.shape[1]:
            proj = null @ null.T

            def oracle(x: Array) -> Array:
                return x_part + proj @ (np.asarray(x, dtype=float) - x_part)
        else:
            def oracle(x: Array) -> Array:  # unique Nash point
                return x_part.copy()

    def payoff(x: Array) -> float:
        x = np.asarray(x, dtype=float)
        return float(-0.5 * x @ (A @ x) + b @ x)

    return field, oracle, payoff, 1.0 / lam_max


def _make_quadratic(spec: GameSpec, name: str) -> Game:
    params = spec.params
    try:
        A = np.asarray(params["matrix"], dtype=float)
        b = np.asarray(params["offset"], dtype=float).reshape(-1)
    except KeyError as exc:
        raise ConfigError(f"quadratic spec is missing parameter {exc}") from None
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ConfigError(f"quadratic matrix must be square, got shape {A.shape}")
    n = A.shape[0]
    if n == 0:
        raise ConfigError("quadratic spec has zero dimension")
    if b.size != n:
        raise ConfigError(f"offset length {b.size} does not match matrix size {n}")
    if not np.allclose(A, A.T, atol=1e-9 * (1.0 + np.abs(A).max())):
        raise ConfigError("quadratic matrix must be symmetric")
    A = 0.5 * (A + A.T)

    dims = tuple(params.get("dims") or (1,) * n)
    if sum(dims) != n:
        raise ConfigError(f"player dims {dims} do not sum to matrix size {n}")

    field_fn, oracle, payoff, lam = _quadratic_parts(A, b, name)
    payoffs = tuple(payoff for _ in dims) if payoff is not None else None
    scalar = None
    if n == 1:
        a00, b0 = float(A[0, 0]), float(b[0])
        scalar = lambda x: b0 - a00 * x  # noqa: E731
    return Game(dims=dims, field=field_fn, payoffs=payoffs, nash_oracle=oracle,
                cocoercivity=lam, name=name, scalar_field=scalar, affine=(A, b))


def _make_piecewise(name: str) -> Game:
    def scalar(x: float) -> float:
        return -2.0 * x if x < 0.0 else 0.0

    def field(x: Array) -> Array:
        x = np.asarray(x, dtype=float)
        return np.where(x < 0.0, -2.0 * x, 0.0)

    def payoff(x: Array) -> float:
        v = float(np.asarray(x, dtype=float).reshape(-1)[0])
        return -v * v if v < 0.0 else 0.0

    def oracle(x: Array) -> Array:
        return np.maximum(np.asarray(x, dtype=float), 0.0)

    return Game(dims=(1,), field=field, payoffs=(payoff,), nash_oracle=oracle,
                cocoercivity=0.5, name=name, scalar_field=scalar, affine=None)


def _make_random(spec: GameSpec, name: str) -> Game:
    params = spec.params
    try:
        n = int(params["n"])
        seed = int(params["seed"])
    except KeyError as exc:
        raise ConfigError(f"random_cocoercive spec is missing parameter {exc}") from None
    conditioning = float(params.get("conditioning", 4.0))
    if n <= 0:
        raise ConfigError("random_cocoercive spec has zero dimension")
    if conditioning <= 0:
        raise ConfigError("conditioning bound must be positive")

    rng = np.random.default_rng(seed)
    M = rng.standard_normal((n, n))
    S = M.T @ M
    lam_max = float(np.linalg.eigvalsh(S)[-1])
    S *= conditioning / lam_max  # top eigenvalue pinned to the bound
    b = S @ rng.standard_normal(n)  # in range(S), so a Nash point exists

    quadratic = GameSpec.quadratic(S, b, dims=params.get("dims"))
    game = _make_quadratic(quadratic, name)
    return game


def make_game(spec: GameSpec, name: str = "") -> Game:
    """Instantiate a game from its spec; rejects specs that would not be cocoercive."""
    label = name or spec.kind
    if spec.kind == "quadratic":
        return _make_quadratic(spec, label)
    if spec.kind == "piecewise_scalar":
        return _make_piecewise(label)
    if spec.kind == "random_cocoercive":
        return _make_random(spec, label)
    raise ConfigError(f"unknown game kind {spec.kind!r}")


def builtin_game_specs() -> dict[str, GameSpec]:
    """Named built-in instances used by the harness, CLI and test matrix."""
    return {
        "quad_1d": GameSpec.quadratic([[1.0]], [0.0]),
        "quad_2d": GameSpec.quadratic([[2.0, 1.0], [1.0, 2.0]], [0.0, 0.0]),
        "piecewise": GameSpec.piecewise_scalar(),
        "rand_2d": GameSpec.random_cocoercive(2, seed=7, conditioning=4.0),
    }


def make_named_game(name: str) -> Game:
    specs = builtin_game_specs()
    if name not in specs:
        raise ConfigError(f"unknown game name {name!r}; available: {sorted(specs)}")
    return make_game(specs[name], name=name)


def _as_flat(game: Game, x) -> Array:
    if isinstance(x, JointAction):
        if x.dims != game.dims:
            raise ValueError(f"action blocks {x.dims} do not match game dims {game.dims}")
        return x.flat
    vec = np.asarray(x, dtype=float).reshape(-1)
    if vec.size != game.n:
        raise ValueError(f"action of length {vec.size} does not match game dimension {game.n}")
    return vec


def gradient_field(game: Game, x) -> JointAction:
    """Evaluate the stacked gradient v(x); rejects dimension mismatch and non-finite output."""
    vec = _as_flat(game, x)
    out = np.asarray(game.field(vec), dtype=float).reshape(-1)
    if out.size != game.n:
        raise ValueError(f"field returned length {out.size}, expected {game.n}")
    if not np.all(np.isfinite(out)):
        k, bad = 0, []
        for i, d in enumerate(game.dims):
            if not np.all(np.isfinite(out[k:k + d])):
                bad.append(i)
            k += d
        raise ValueError(f"gradient field is non-finite in player block(s) {bad}")
    return JointAction.from_flat(out, game.dims)


@dataclass(frozen=True)
class GradientCheck:
    max_abs_error: float


def verify_gradient(game: Game, x, h: float = 1e-5) -> GradientCheck:
    """Compare the field against central finite differences of the payoffs."""
    if game.payoffs is None:
        raise UnsupportedOperation("game has no payoff functions to differentiate")
    if h <= 0:
        raise ValueError("finite-difference step must be positive")
    base = _as_flat(game, x)
    v = gradient_field(game, base).flat
    worst = 0.0
    k = 0
    for i, d in enumerate(game.dims):
        u = game.payoffs[i]
        for j in range(k, k + d):
            hi = base.copy()
            lo = base.copy()
            hi[j] += h
            lo[j] -= h
            fd = (u(hi) - u(lo)) / (2.0 * h)
            worst = max(worst, abs(fd - v[j]))
        k += d
    return GradientCheck(max_abs_error=worst)


@dataclass(frozen=True)
class CocoercivityEstimate:
    lambda_hat: float
    monotone_violation: bool
    pairs_used: int


def estimate_cocoercivity(game: Game, low: float = -5.0, high: float = 5.0,
                          pairs: int = 1000, seed: int = 0) -> CocoercivityEstimate:
    """Sampled upper bound on the cocoercivity constant over a coordinate box.

    Draws ``pairs`` point pairs uniformly from [low, high]^n and minimizes
    -(x'-x)^T (v(x')-v(x)) / ||v(x')-v(x)||^2 over pairs with distinct field
    values. A negative numerator on any pair flags a monotonicity violation.
    """
    if pairs < 2:
        raise ValueError("need at least 2 sampled pairs")
    if not high > low:
        raise ValueError("sampling region is empty")
    rng = np.random.default_rng(seed)
    n = game.n
    xs = rng.uniform(low, high, size=(pairs, n))
    ys = rng.uniform(low, high, size=(pairs, n))

    best = np.inf
    violated = False
    used = 0
    for x, y in zip(xs, ys):
        dv = game.field(y) - game.field(x)
        denom = float(dv @ dv)
        if denom == 0.0:
            continue
        num = float(-(y - x) @ dv)
        if num < -1e-12 * (1.0 + float((y - x) @ (y - x)) + denom):
            violated = True
        used += 1
        ratio = num / denom
        if ratio < best:
            best = ratio
    if used == 0:
        raise IndeterminateResult("all sampled pairs had identical field values")
    return CocoercivityEstimate(lambda_hat=float(best), monotone_violation=violated, pairs_used=used)


def project_to_nash(game: Game, x) -> JointAction:
    """Euclidean projection onto the game's Nash set via its oracle."""
    if game.nash_oracle is None:
        raise UnsupportedOperation("game has no Nash oracle")
    vec = _as_flat(game, x)
    return JointAction.from_flat(game.nash_oracle(vec), game.dims)
