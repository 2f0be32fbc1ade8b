"""Block coordinate stochastic gradient descent with importance sampling.

Each iteration samples one training example from the state-dependent
distribution pi(i) proportional to ||(B x_i)^T B X||^2 (B the product of
the layers below the target layer), applies a rank-one update with the
scaled rate eta * sigma_min^2(B X) / (sigma_max^2(A) ||(B x_i)^T B X||^2),
and tracks the condition-number quantities the error-floor brackets are
built from.

The floors come with the square loss only.  They bound the stationary
expected squared distance ||W_{L:1} X - W* X||_F^2 between

    eta^2 L* / (M_upp (1 - gamma_low^L))   and
    eta^2 L* / (M_low (1 - gamma_upp^L)),

with L* = ||W* X - Y||_F^2, M_upp / M_low the run's sup of
kappa^4(A) kt^4(B X) and inf of kt^4(B X) (kt the scaled condition
number), and gamma_upp / gamma_low the run's extreme per-iteration
contraction factors.  The bounds assume those sup/inf stay finite and
away from the degenerate values; a run that transits near a
rank-deficient partial product yields a finite-but-vacuous (or outright
unavailable) bracket.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .losses import LossFunction
from .network import Network, partial_product
from .optim import StepRecord, SweepState, Trajectory, _objective, _resolve_oracle

__all__ = [
    "BoundsTracker",
    "FloorBracket",
    "SampleDist",
    "bcsgd_lr",
    "bcsgd_step",
    "floor_brackets",
    "run_bcsgd",
    "sampling_distribution",
]


@dataclass(frozen=True)
class SampleDist:
    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        if p.ndim != 1 or p.size < 1:
            raise ValueError("probs must be a nonempty vector")
        if np.any(p < 0) or abs(float(p.sum()) - 1.0) > 1e-12:
            raise ValueError("probs must be nonnegative and sum to 1")
        object.__setattr__(self, "probs", p)

    def sample(self, rng: np.random.Generator) -> int:
        """Inverse-CDF draw; cheap and reproducible for desk-scale m."""
        idx = np.searchsorted(np.cumsum(self.probs), rng.random(), side="right")
        return int(min(idx, self.probs.size - 1))


def _bx_column_weights(bx: np.ndarray) -> np.ndarray:
    """||(B x_i)^T B X||^2 for every column i (rows of the Gram squared)."""
    gram = bx.T @ bx
    return np.sum(gram * gram, axis=1)


def sampling_distribution(net: Network, data: Dataset, state: SweepState) -> SampleDist:
    """The importance distribution over examples for the state's next update."""
    ell = state.layer_to_update()
    bx = partial_product(net, ell - 1, 1) @ data.x
    weights = _bx_column_weights(bx)
    total = float(weights.sum())
    if total <= 0.0:
        raise ValueError(
            f"degenerate state: ||W_({ell - 1}:1) X||_F = 0, sampling undefined"
        )
    return SampleDist(probs=weights / total)


def bcsgd_lr(net: Network, data: Dataset, state: SweepState, i: int, eta: float) -> float:
    """The stochastic step's learning rate for sampled example *i*."""
    if not 0 < eta < 2:
        raise ValueError("eta must lie in (0, 2)")
    if not 0 <= i < data.m:
        raise ValueError(f"sample index {i} out of range")
    ell = state.layer_to_update()
    a = partial_product(net, net.depth, ell + 1)
    bx = partial_product(net, ell - 1, 1) @ data.x
    sa = np.linalg.svd(a, compute_uv=False)
    sb = np.linalg.svd(bx, compute_uv=False)
    weight = float(_bx_column_weights(bx)[i])
    if weight <= 0.0:
        raise ValueError(f"sampled column {i} has zero weight")
    return float(sb[-1] ** 2 / sa[0] ** 2) * eta / weight


@dataclass
class BoundsTracker:
    """Running sup/inf of the bracket constants over a BCSGD run."""

    m_upp: float = 0.0
    m_low: float = math.inf
    gamma_upp: float = 0.0
    gamma_low: float = math.inf
    sup_condition_product: float = 0.0
    iterations: int = 0

    def update(self, a_svals: np.ndarray, bx_svals: np.ndarray, bx_fro: float, eta: float) -> None:
        ka2 = _ratio_sq(a_svals[0], a_svals[-1])
        kb2 = _ratio_sq(bx_svals[0], bx_svals[-1])
        kt4 = _ratio_sq(bx_fro, bx_svals[-1]) ** 2
        product = (ka2**2) * kt4
        self.sup_condition_product = max(self.sup_condition_product, product)
        self.m_upp = max(self.m_upp, product)
        self.m_low = min(self.m_low, kt4)
        self.gamma_upp = max(self.gamma_upp, _gamma_upp(eta, ka2, kt4))
        self.gamma_low = min(self.gamma_low, _gamma_low(eta, kb2, kt4))
        self.iterations += 1

    def merge(self, other: "BoundsTracker") -> None:
        self.m_upp = max(self.m_upp, other.m_upp)
        self.m_low = min(self.m_low, other.m_low)
        self.gamma_upp = max(self.gamma_upp, other.gamma_upp)
        self.gamma_low = min(self.gamma_low, other.gamma_low)
        self.sup_condition_product = max(
            self.sup_condition_product, other.sup_condition_product
        )
        self.iterations += other.iterations


def _ratio_sq(num: float, den: float) -> float:
    if den <= 0.0:
        return math.inf
    return float(num / den) ** 2


def _gamma_upp(eta: float, ka2: float, kt4: float) -> float:
    if not math.isfinite(ka2) or not math.isfinite(kt4):
        return 1.0
    return 1.0 - (1.0 - (1.0 - eta / ka2) ** 2) / kt4


def _gamma_low(eta: float, kb2: float, kt4: float) -> float:
    if not math.isfinite(kb2) or not math.isfinite(kt4):
        return 1.0
    return 1.0 - (1.0 - (1.0 - eta / kb2) ** 2) / (kt4 / kb2**2)


@dataclass(frozen=True)
class FloorBracket:
    """Analytic bounds on the stationary expected squared distance."""

    gamma_upp: float
    gamma_low: float
    floor_upper: float
    floor_lower: float
    available: bool = True

    def __post_init__(self):
        if (
            math.isfinite(self.floor_lower)
            and math.isfinite(self.floor_upper)
            and self.floor_lower > self.floor_upper * (1 + 1e-12)
        ):
            raise ValueError("floor_lower exceeds floor_upper")


def floor_brackets(
    net: Network,
    data: Dataset,
    state: SweepState,
    eta: float,
    oracle_loss: float,
    tracker: BoundsTracker | None = None,
) -> FloorBracket:
    """Error-floor bracket from the run's tracked bounds (or this state's).

    ``oracle_loss`` is ||W* X - Y||_F^2.  With no tracker the bracket is
    evaluated from the current state's condition numbers alone.  An
    infinite condition number marks the bracket unavailable.
    """
    if not 0 < eta < 2:
        raise ValueError("eta must lie in (0, 2)")
    if tracker is None:
        tracker = BoundsTracker()
        ell = state.layer_to_update()
        a = partial_product(net, net.depth, ell + 1)
        bx = partial_product(net, ell - 1, 1) @ data.x
        tracker.update(
            np.linalg.svd(a, compute_uv=False),
            np.linalg.svd(bx, compute_uv=False),
            float(np.linalg.norm(bx, "fro")),
            eta,
        )
    L = net.depth
    oracle_loss = float(oracle_loss)
    available = (
        math.isfinite(tracker.m_upp)
        and tracker.m_low > 0
        and tracker.gamma_upp < 1.0
        and 0.0 < tracker.gamma_low
    )
    if tracker.gamma_upp < 1.0 and tracker.m_low > 0 and math.isfinite(tracker.m_low):
        floor_upper = eta**2 * oracle_loss / (tracker.m_low * (1.0 - tracker.gamma_upp**L))
    else:
        floor_upper = math.inf
    if math.isfinite(tracker.m_upp) and tracker.gamma_low < 1.0:
        floor_lower = eta**2 * oracle_loss / (tracker.m_upp * (1.0 - tracker.gamma_low**L))
    else:
        floor_lower = 0.0
    return FloorBracket(
        gamma_upp=tracker.gamma_upp,
        gamma_low=tracker.gamma_low,
        floor_upper=floor_upper,
        floor_lower=floor_lower,
        available=available,
    )


def bcsgd_step(
    net: Network,
    data: Dataset,
    lf: LossFunction,
    state: SweepState,
    eta: float,
    rng: np.random.Generator,
    oracle_objective: float | None = None,
    tracker: BoundsTracker | None = None,
) -> StepRecord:
    """One stochastic iteration: sample i ~ pi, rank-one update one layer.

    Square loss only (the sampling scheme and rate are derived for it).
    """
    _require_l2(lf)
    ell = state.layer_to_update()
    a = partial_product(net, net.depth, ell + 1)
    b = partial_product(net, ell - 1, 1)
    bx = b @ data.x
    oracle_obj = _resolve_oracle(net, data, oracle_objective)
    return _bcsgd_step_core(
        net, data, lf, state, eta, rng, a, bx, oracle_obj, tracker
    )


def _require_l2(lf: LossFunction) -> None:
    if lf.power != 2:
        raise ValueError("BCSGD is defined for the square loss")


def _bcsgd_step_core(net, data, lf, state, eta, rng, a, bx, oracle_obj, tracker):
    if not 0 < eta < 2:
        raise ValueError("eta must lie in (0, 2)")
    ell = state.layer_to_update()
    weights = _bx_column_weights(bx)
    total = float(weights.sum())
    if total <= 0.0:
        raise ValueError(f"degenerate state at layer {ell}: zero sampling mass")
    dist = SampleDist(probs=weights / total)
    i = dist.sample(rng)
    sa = np.linalg.svd(a, compute_uv=False)
    sb = np.linalg.svd(bx, compute_uv=False)
    if tracker is not None:
        tracker.update(sa, sb, float(np.linalg.norm(bx, "fro")), eta)
    lr = float(sb[-1] ** 2 / sa[0] ** 2) * eta / float(weights[i])
    w = net.layers[ell - 1]
    pred = a @ w @ bx
    loss_before = _objective(pred, data.y, lf)
    resid_i = pred[:, i] - data.y[:, i]
    grad_i = np.outer(a.T @ resid_i, bx[:, i])
    new_w = w - lr * grad_i
    if not np.isfinite(new_w).all():
        raise RuntimeError(
            f"non-finite BCSGD update at iteration {state.iteration + 1}, layer {ell}"
        )
    net.layers[ell - 1] = new_w
    loss_after = _objective(a @ new_w @ bx, data.y, lf)
    record = StepRecord(
        iteration=state.iteration + 1,
        sweep=state.sweep + 1,
        layer=ell,
        lr=lr,
        loss_before=loss_before,
        loss_after=loss_after,
        dist_before=(loss_before - oracle_obj) / data.m,
        dist_after=(loss_after - oracle_obj) / data.m,
        grad_frobenius=float(np.linalg.norm(grad_i, "fro")),
        sample_index=i,
    )
    state.advance()
    return record


def run_bcsgd(
    net: Network,
    data: Dataset,
    lf: LossFunction,
    eta: float,
    sweeps: int,
    seed: int,
    ordering: str = "ascending",
    oracle_objective: float | None = None,
    meta: dict | None = None,
) -> tuple[Trajectory, BoundsTracker]:
    """Run BCSGD for a fixed number of sweeps with its own RNG stream.

    Returns the trajectory and the tracker holding the run's sup/inf of
    the bracket constants.  Within a sweep the stale-side partial
    products are reused exactly as in the deterministic runner.
    """
    _require_l2(lf)
    oracle_obj = _resolve_oracle(net, data, oracle_objective)
    rng = np.random.default_rng(seed)
    state = SweepState(depth=net.depth, ordering=ordering)
    tracker = BoundsTracker()
    traj = Trajectory(
        meta={
            "dims": net.dims,
            "ordering": ordering,
            "policy": f"bcsgd:{eta!r}",
            "loss": lf.name,
            "oracle_objective": oracle_obj,
            "seed": seed,
            **(meta or {}),
        }
    )
    L = net.depth
    for _ in range(sweeps):
        if ordering == "ascending":
            stale = [None] * (L + 1)
            stale[L] = np.eye(net.dims[-1])
            for l in range(L - 1, 0, -1):
                stale[l] = stale[l + 1] @ net.layers[l]
            running = data.x
            for ell in range(1, L + 1):
                traj.records.append(
                    _bcsgd_step_core(
                        net, data, lf, state, eta, rng, stale[ell], running,
                        oracle_obj, tracker,
                    )
                )
                running = net.layers[ell - 1] @ running
        else:
            stale = [None] * (L + 1)
            stale[1] = data.x
            for l in range(2, L + 1):
                stale[l] = net.layers[l - 2] @ stale[l - 1]
            running = np.eye(net.dims[-1])
            for ell in range(L, 0, -1):
                traj.records.append(
                    _bcsgd_step_core(
                        net, data, lf, state, eta, rng, running, stale[ell],
                        oracle_obj, tracker,
                    )
                )
                running = running @ net.layers[ell - 1]
    return traj, tracker
