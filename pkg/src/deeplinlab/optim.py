"""Block coordinate gradient descent, plain GD, and learning-rate policies.

A sweep visits every layer once, ascending (1..L) or descending (L..1);
each iteration updates one layer from the gradient evaluated at the
latest values of all layers (Gauss-Seidel).  Four adaptive learning-rate
policies are provided next to a constant rate:

* ``theory_l2``       eta / (||A||^2 ||B X||^2), 0 < eta < 2
* ``optimal_l2``      ||G||_F^2 / ||A G B X||_F^2  (exact line search)
* ``convex_safe``     1 / (||C(resid)||_max ||A||^2 ||B X||^2)
* ``near_optimal_general`` / ``near_optimal_lp``
                      ||G||_F^2 / (||C(resid)||_max ||A G B X||_F^2)

where A is the product of the layers above the target, B the product
below, G the layer gradient and C the curvature bound of the loss.

Trajectories record, per iteration, the tracked objective (for the
|z-b|^p family: sum |pred - y|^p, the convention in which the optimal
step's drop identity is exact), the normalized distance to the oracle
optimum, the rate used, and the contraction bound when one applies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .data import Dataset
from .losses import LossFunction, gradient_from_parts
from .network import Network, end_to_end, partial_product
from .oracle import optimal_loss
from . import theory

__all__ = [
    "LrPolicy",
    "ORDERINGS",
    "StepRecord",
    "SweepState",
    "Trajectory",
    "bcgd_step",
    "compute_lr",
    "gd_step",
    "reference_gd_rate",
    "run_bcgd",
    "run_gd",
]

ORDERINGS = ("ascending", "descending")
POLICY_KINDS = (
    "theory_l2",
    "optimal_l2",
    "convex_safe",
    "near_optimal_general",
    "near_optimal_lp",
    "constant",
)
_DENOM_FLOOR = 1e-300


@dataclass
class SweepState:
    """Multi-index bookkeeping for one BCGD run.

    ``position`` is the 1-based slot within the current sweep; the layer
    it maps to depends on the ordering.  After a full sweep every entry
    of ``multi_index`` has grown by exactly one.
    """

    depth: int
    ordering: str = "ascending"
    multi_index: list = field(default=None)
    sweep: int = 0
    position: int = 1

    def __post_init__(self):
        if self.ordering not in ORDERINGS:
            raise ValueError(f"ordering must be one of {ORDERINGS}")
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if self.multi_index is None:
            self.multi_index = [0] * self.depth
        if len(self.multi_index) != self.depth:
            raise ValueError("multi_index length must equal depth")

    def layer_to_update(self) -> int:
        """The 1-based layer index the next iteration touches."""
        if self.ordering == "ascending":
            return self.position
        return self.depth - self.position + 1

    @property
    def iteration(self) -> int:
        """Count of completed iterations."""
        return self.sweep * self.depth + self.position - 1

    def advance(self) -> None:
        self.multi_index[self.layer_to_update() - 1] += 1
        self.position += 1
        if self.position > self.depth:
            self.position = 1
            self.sweep += 1


@dataclass(frozen=True)
class LrPolicy:
    kind: str
    eta: float | None = None
    p: int | None = None

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown policy {self.kind!r}; pick from {POLICY_KINDS}")
        if self.kind == "theory_l2":
            if self.eta is None or not 0 < self.eta < 2:
                raise ValueError("theory_l2 needs 0 < eta < 2")
        if self.kind == "constant":
            if self.eta is None or self.eta < 0:
                raise ValueError("constant policy needs eta >= 0")
        if self.kind == "near_optimal_lp":
            if self.p is None or self.p < 2 or self.p % 2 != 0:
                raise ValueError("near_optimal_lp needs an even p >= 2")


@dataclass(frozen=True)
class StepRecord:
    iteration: int
    sweep: int
    layer: int                 # 0 means all layers (plain GD step)
    lr: float
    loss_before: float
    loss_after: float
    dist_before: float
    dist_after: float
    grad_frobenius: float
    gamma_bound: float | None = None
    sample_index: int | None = None


@dataclass
class Trajectory:
    records: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.records)

    def losses(self) -> np.ndarray:
        return np.array([r.loss_after for r in self.records])

    def dists(self) -> np.ndarray:
        return np.array([r.dist_after for r in self.records])

    def final_dist(self) -> float:
        return self.records[-1].dist_after if self.records else math.nan


def _objective(pred: np.ndarray, y: np.ndarray, lf: LossFunction) -> float:
    total = float(np.sum(lf.value(pred, y)))
    return lf.power * total if lf.power is not None else total


def _spectral(a: np.ndarray) -> float:
    if a.size == 0:
        return 0.0
    return float(np.linalg.svd(a, compute_uv=False)[0])


def _lr_from_parts(
    policy: LrPolicy,
    lf: LossFunction,
    a: np.ndarray,
    bx: np.ndarray,
    pred: np.ndarray,
    y: np.ndarray,
    g: np.ndarray,
) -> float:
    """Learning rate for one step from the factored quantities.

    *pred* holds the current predictions (the point the curvature bound
    is evaluated at); a denominator below 1e-300 yields rate 0, the
    skip-step convention for degenerate states.
    """
    kind = policy.kind
    if kind == "constant":
        return float(policy.eta)
    if kind in ("theory_l2", "convex_safe"):
        denom = _spectral(a) ** 2 * _spectral(bx) ** 2
        if kind == "convex_safe":
            denom *= float(np.max(lf.curvature(pred, y))) if pred.size else 0.0
        if denom < _DENOM_FLOOR:
            return 0.0
        return (policy.eta if kind == "theory_l2" else 1.0) / denom
    g2 = float(np.sum(g * g))
    agbx = a @ g @ bx
    denom = float(np.sum(agbx * agbx))
    if kind == "near_optimal_general":
        denom *= float(np.max(lf.curvature(pred, y))) if pred.size else 0.0
    elif kind == "near_optimal_lp":
        p = policy.p
        max_abs = float(np.max(np.abs(pred - y))) if pred.size else 0.0
        denom *= (p - 1) * max_abs ** (p - 2)
    if denom < _DENOM_FLOOR:
        return 0.0
    return g2 / denom


def compute_lr(
    policy: LrPolicy,
    net: Network,
    data: Dataset,
    lf: LossFunction,
    state: SweepState,
) -> float:
    """Learning rate the policy would use for the state's next update."""
    ell = state.layer_to_update()
    a = partial_product(net, net.depth, ell + 1)
    bx = partial_product(net, ell - 1, 1) @ data.x
    pred = a @ net.layers[ell - 1] @ bx
    g = gradient_from_parts(a, bx, lf.deriv(pred, data.y))
    return _lr_from_parts(policy, lf, a, bx, pred, data.y, g)


def _resolve_oracle(net: Network, data: Dataset, oracle_objective) -> float:
    if oracle_objective is not None:
        return float(oracle_objective)
    return optimal_loss(data.x, data.y, min(net.dims))


def _step_core(
    net: Network,
    data: Dataset,
    lf: LossFunction,
    state: SweepState,
    policy: LrPolicy,
    a: np.ndarray,
    bx: np.ndarray,
    oracle_obj: float,
    gamma: float | None,
) -> StepRecord:
    ell = state.layer_to_update()
    w = net.layers[ell - 1]
    pred = a @ w @ bx
    d = lf.deriv(pred, data.y)
    g = gradient_from_parts(a, bx, d)
    if not np.isfinite(g).all():
        raise RuntimeError(
            f"non-finite gradient at iteration {state.iteration + 1}, "
            f"layer {ell} (loss so far {_objective(pred, data.y, lf):.6g})"
        )
    lr = _lr_from_parts(policy, lf, a, bx, pred, data.y, g)
    loss_before = _objective(pred, data.y, lf)
    new_w = w - lr * g
    if not np.isfinite(new_w).all():
        raise RuntimeError(
            f"non-finite update at iteration {state.iteration + 1}, layer {ell} "
            f"(lr {lr:.6g}, |G|_F {float(np.linalg.norm(g)):.6g})"
        )
    net.layers[ell - 1] = new_w
    pred_after = a @ new_w @ bx
    loss_after = _objective(pred_after, data.y, lf)
    record = StepRecord(
        iteration=state.iteration + 1,
        sweep=state.sweep + 1,
        layer=ell,
        lr=lr,
        loss_before=loss_before,
        loss_after=loss_after,
        dist_before=(loss_before - oracle_obj) / data.m,
        dist_after=(loss_after - oracle_obj) / data.m,
        grad_frobenius=float(np.linalg.norm(g, "fro")),
        gamma_bound=gamma,
    )
    state.advance()
    return record


def bcgd_step(
    net: Network,
    data: Dataset,
    lf: LossFunction,
    state: SweepState,
    policy: LrPolicy,
    oracle_objective: float | None = None,
) -> StepRecord:
    """One BCGD iteration on the layer the state designates.

    All other layers are untouched; the state's multi-index advances by
    the updated layer's unit vector.  The contraction bound is recorded
    for the theory_l2 policy (its rate guarantee applies there).
    """
    ell = state.layer_to_update()
    a = partial_product(net, net.depth, ell + 1)
    bx = partial_product(net, ell - 1, 1) @ data.x
    oracle_obj = _resolve_oracle(net, data, oracle_objective)
    gamma = None
    if policy.kind == "theory_l2":
        r = _top_layer_rank(net)
        r_x = _matrix_rank(data.x)
        gamma = theory.gamma_factor(net, data, state, policy.eta, r, r_x)
    return _step_core(net, data, lf, state, policy, a, bx, oracle_obj, gamma)


def _matrix_rank(a: np.ndarray) -> int:
    from .matcore import spectral_summary

    return spectral_summary(a).numeric_rank


def _top_layer_rank(net: Network) -> int:
    return min(_matrix_rank(net.layers[-1]), net.dims[-1])


def run_bcgd(
    net: Network,
    data: Dataset,
    lf: LossFunction,
    policy: LrPolicy,
    ordering: str = "ascending",
    max_sweeps: int = 100,
    target_dist: float = 1e-10,
    oracle_objective: float | None = None,
    meta: dict | None = None,
    on_sweep_end=None,
) -> Trajectory:
    """Run BCGD sweeps until ``max_sweeps`` or the target distance.

    The network is updated in place.  Within a sweep the partial products
    on the already-visited side are maintained incrementally and the
    stale side is precomputed at the sweep start, so a sweep costs O(L)
    matrix products.  Stop conditions are evaluated at sweep boundaries;
    ``on_sweep_end(completed_sweeps, net)`` runs there when given (the
    snapshot hook).
    """
    if ordering not in ORDERINGS:
        raise ValueError(f"ordering must be one of {ORDERINGS}")
    oracle_obj = _resolve_oracle(net, data, oracle_objective)
    state = SweepState(depth=net.depth, ordering=ordering)
    traj = Trajectory(
        meta={
            "dims": net.dims,
            "ordering": ordering,
            "policy": policy.kind,
            "loss": lf.name,
            "oracle_objective": oracle_obj,
            **(meta or {}),
        }
    )
    want_gamma = policy.kind == "theory_l2"
    r = _top_layer_rank(net) if want_gamma else 0
    r_x = _matrix_rank(data.x) if want_gamma else 0
    L = net.depth
    for _ in range(max_sweeps):
        if ordering == "ascending":
            stale = [None] * (L + 1)  # stale[l] = W_{L:(l+1)} at sweep start
            stale[L] = np.eye(net.dims[-1])
            for l in range(L - 1, 0, -1):
                stale[l] = stale[l + 1] @ net.layers[l]
            running = data.x  # W_{(l-1):1} X with updated layers
            for ell in range(1, L + 1):
                a, bx = stale[ell], running
                gamma = (
                    theory.gamma_factor(net, data, state, policy.eta, r, r_x)
                    if want_gamma
                    else None
                )
                traj.records.append(
                    _step_core(net, data, lf, state, policy, a, bx, oracle_obj, gamma)
                )
                running = net.layers[ell - 1] @ running
        else:
            stale = [None] * (L + 1)  # stale[l] = W_{(l-1):1} X at sweep start
            stale[1] = data.x
            for l in range(2, L + 1):
                stale[l] = net.layers[l - 2] @ stale[l - 1]
            running = np.eye(net.dims[-1])  # W_{L:(l+1)} with updated layers
            for ell in range(L, 0, -1):
                a, bx = running, stale[ell]
                gamma = (
                    theory.gamma_factor(net, data, state, policy.eta, r, r_x)
                    if want_gamma
                    else None
                )
                traj.records.append(
                    _step_core(net, data, lf, state, policy, a, bx, oracle_obj, gamma)
                )
                running = running @ net.layers[ell - 1]
        if on_sweep_end is not None:
            on_sweep_end(state.sweep, net)
        if traj.records[-1].dist_after <= target_dist:
            break
    return traj


def gd_step(
    net: Network,
    data: Dataset,
    lf: LossFunction,
    eta: float,
    oracle_objective: float | None = None,
    state: SweepState | None = None,
) -> StepRecord:
    """One plain gradient-descent step: every layer moves simultaneously.

    All gradients are evaluated at the pre-step weights before any layer
    changes, so the result does not depend on layer order.
    """
    if eta < 0:
        raise ValueError("eta must be >= 0")
    oracle_obj = _resolve_oracle(net, data, oracle_objective)
    L = net.depth
    suffix = [None] * (L + 1)
    suffix[L] = np.eye(net.dims[-1])
    for l in range(L - 1, 0, -1):
        suffix[l] = suffix[l + 1] @ net.layers[l]
    prefix = [None] * (L + 1)
    prefix[1] = data.x
    for l in range(2, L + 1):
        prefix[l] = net.layers[l - 2] @ prefix[l - 1]
    pred = suffix[1] @ net.layers[0] @ prefix[1]
    d = lf.deriv(pred, data.y)
    grads = [gradient_from_parts(suffix[l], prefix[l], d) for l in range(1, L + 1)]
    total_g2 = sum(float(np.sum(g * g)) for g in grads)
    loss_before = _objective(pred, data.y, lf)
    for l in range(1, L + 1):
        new_w = net.layers[l - 1] - eta * grads[l - 1]
        if not np.isfinite(new_w).all():
            raise RuntimeError(f"non-finite GD update at layer {l} (eta {eta:.6g})")
        net.layers[l - 1] = new_w
    pred_after = end_to_end(net) @ data.x
    loss_after = _objective(pred_after, data.y, lf)
    iteration = state.iteration + 1 if state else 1
    record = StepRecord(
        iteration=iteration,
        sweep=iteration,
        layer=0,
        lr=float(eta),
        loss_before=loss_before,
        loss_after=loss_after,
        dist_before=(loss_before - oracle_obj) / data.m,
        dist_after=(loss_after - oracle_obj) / data.m,
        grad_frobenius=math.sqrt(total_g2),
    )
    if state is not None:
        for _ in range(state.depth):
            state.advance()
    return record


def run_gd(
    net: Network,
    data: Dataset,
    lf: LossFunction,
    eta: float,
    max_iters: int = 100,
    target_dist: float = 1e-10,
    oracle_objective: float | None = None,
    meta: dict | None = None,
) -> Trajectory:
    """Plain GD baseline with a constant learning rate."""
    oracle_obj = _resolve_oracle(net, data, oracle_objective)
    traj = Trajectory(
        meta={
            "dims": net.dims,
            "policy": f"gd_const:{eta!r}",
            "loss": lf.name,
            "oracle_objective": oracle_obj,
            **(meta or {}),
        }
    )
    state = SweepState(depth=net.depth)
    for _ in range(max_iters):
        record = gd_step(net, data, lf, eta, oracle_obj, state)
        record = replace(record, iteration=len(traj.records) + 1, sweep=len(traj.records) + 1)
        traj.records.append(record)
        if record.dist_after <= target_dist:
            break
    return traj


def reference_gd_rate(net: Network, data: Dataset) -> float:
    """The literature reference rate n_L / (3 L ||X||^2) for plain GD."""
    return net.dims[-1] / (3.0 * net.depth * _spectral(data.x) ** 2)
