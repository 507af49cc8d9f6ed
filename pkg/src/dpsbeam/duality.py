"""Uplink-downlink duality core.

The downlink problem (pick one serving station per mobile, beamform, meet
SINR targets at minimum weighted transmit power) has a Lagrangian dual that
reads as a virtual uplink: every mobile transmits with power lambda_i*sigma^2
and every station applies an MMSE receive filter.  The dual optimum is found
by iterating

    lambda_i <- min over candidate q of
        (gamma_i / (1 + gamma_i)) / (h_iq^H Cov_q(lambda)^-1 h_iq)

where Cov_q(lambda) = sum_j lambda_j h_jq h_jq^H + w_q I is the uplink
covariance at station q under noise weight w_q.  The map is a standard
interference function: iterates from zero grow monotonically and converge
geometrically exactly when the targets are feasible.

Feasibility is decided soundly: every iterate yields an affine majorant of
the update map (freeze the current MMSE receivers); if its spectral radius
drops below one a fixed point provably exists, while a radius pinned at one
or above along a growing trajectory certifies divergence, which covers
marginally infeasible instances whose iterates grow only linearly and would
never reach a magnitude cap.
"""

from __future__ import annotations

import collections
from dataclasses import dataclass, field

import numpy as np

from .errors import (ConfigError, DegenerateAssociationError,
                     InfeasibleScalingError)
from .scenario import ProblemInstance

CONVERGED = "converged"
INFEASIBLE = "infeasible"
ITERATION_LIMIT = "iteration_limit"

DEFAULT_TOLERANCE = 1e-9
DEFAULT_MAX_ITER = 10000
TIE_TOLERANCE = 1e-6

# Feasibility classifier: inspect the affine majorant every CHECK_INTERVAL
# iterations; a spectral radius above 1 - RHO_MARGIN sustained over
# STALL_CHECKPOINTS growing checkpoints is declared divergent.
CHECK_INTERVAL = 64
STALL_CHECKPOINTS = 8
RHO_MARGIN = 1e-6


@dataclass(frozen=True)
class DualState:
    """Converged (or last) state of the virtual-uplink iteration."""

    uplink_powers: np.ndarray   # per-mobile dual variables, lambda
    bs_weights: np.ndarray      # per-station noise weights used by the run
    iterations: int
    residue_trace: np.ndarray   # per-iteration sup-norm update sizes
    sup_trace: np.ndarray       # per-iteration sup-norm of the iterate

    def __post_init__(self):
        for name in ("uplink_powers", "bs_weights", "residue_trace", "sup_trace"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)


@dataclass(frozen=True)
class FixedPointOutcome:
    status: str
    state: DualState
    dual_value: float = None     # sum_i lambda_i * sigma^2 when converged
    witness: dict = field(default=None, compare=False)

    @property
    def converged(self) -> bool:
        return self.status == CONVERGED


@dataclass(frozen=True)
class ReceiverSet:
    """Unit-norm MMSE receive directions for every candidate pair."""

    directions: np.ndarray  # (num_ms, num_bs, antennas), zero off-candidate

    def __post_init__(self):
        arr = np.asarray(self.directions, dtype=complex)
        arr.flags.writeable = False
        object.__setattr__(self, "directions", arr)


class _Engine:
    """Precomputed arrays for the batched update map of one instance."""

    def __init__(self, instance: ProblemInstance, weights):
        self.instance = instance
        K, Q, M = instance.num_ms, instance.num_bs, instance.antennas
        self.weights = np.asarray(
            instance.weights if weights is None else weights, dtype=float)
        if self.weights.shape != (Q,):
            raise ConfigError("weights must have one entry per station")
        mask = instance.clustering.mask()            # (K, Q)
        self.active = np.flatnonzero(mask.any(axis=0))
        if not np.all(self.weights[self.active] > 0):
            raise ConfigError("weights of candidate stations must be positive")
        if not np.all(self.weights >= 0):
            raise ConfigError("weights must be nonnegative")
        # H[a] is (M, K) with column j the channel from active station a to
        # mobile j; the update map only ever evaluates active stations.
        gains = instance.channels.gains
        self.H = np.ascontiguousarray(
            gains[:, self.active, :].transpose(1, 2, 0))
        self.Hc = self.H.conj()
        self.Hct = np.ascontiguousarray(self.Hc.transpose(0, 2, 1))
        self.mask_act = mask[:, self.active].T       # (A, K)
        self.factor = instance.gamma / (1.0 + instance.gamma)
        self.w_act = self.weights[self.active]
        self.eye = np.eye(M)

    def required_power_map(self, lam):
        """f_iq for all candidate pairs; +inf elsewhere.  Shape (A, K)."""
        X, _ = self._solve(lam)
        phi = np.einsum("qmk,qmk->qk", self.Hc, X).real
        # phi = 0 (a dead channel) costs infinite power, except under a
        # zero target where no power is required at all.
        with np.errstate(divide="ignore", invalid="ignore"):
            f = self.factor[None, :] / phi
        f = np.where(np.isnan(f), 0.0, f)
        return np.where(self.mask_act, f, np.inf)

    def _solve(self, lam):
        """Returns (Cov^-1 H, Cov) batched over active stations."""
        C = (self.H * lam[None, None, :]) @ self.Hct
        C += self.w_act[:, None, None] * self.eye
        np.linalg.cholesky(C)  # positive-definiteness assertion
        return np.linalg.solve(C, self.H), C

    def majorant_radius(self, lam, f_act):
        """Spectral radius of the affine majorant frozen at lam.

        Freezing the current MMSE receivers and serving choices bounds the
        update map from above by an affine function of lambda; its matrix
        part has entry (i, j) = factor_i * |u_i^H h_{j, q_i}|^2 /
        |u_i^H h_{i, q_i}|^2.  Radius < 1 proves a fixed point exists;
        divergent runs keep every majorant's radius at or above 1.
        """
        X, _ = self._solve(lam)
        K = lam.shape[0]
        q_star = np.argmin(f_act, axis=0)
        A = np.empty((K, K))
        for i in range(K):
            a = q_star[i]
            row = np.abs(X[a, :, i].conj() @ self.H[a]) ** 2
            A[i] = self.factor[i] * row / row[i]
        return float(np.max(np.abs(np.linalg.eigvals(A))))


def uplink_covariance(instance: ProblemInstance, uplink_powers, weights,
                      bs: int) -> np.ndarray:
    """Covariance seen by station bs in the virtual uplink.

    sum_j uplink_powers[j] * h_j h_j^H + weights[bs] * I, over all mobiles.
    """
    lam = np.asarray(uplink_powers, dtype=float)
    w = np.asarray(weights, dtype=float)
    h = instance.channels.gains[:, bs, :]           # (K, M)
    cov = (h.T * lam) @ h.conj() + w[bs] * np.eye(instance.antennas)
    return cov


def required_uplink_power(instance: ProblemInstance, uplink_powers, weights,
                          ms: int, bs: int) -> float:
    """Virtual uplink power mobile ms needs to meet its target at station bs."""
    cov = uplink_covariance(instance, uplink_powers, weights, bs)
    h = instance.channels.gains[ms, bs, :]
    quad = float(np.real(h.conj() @ np.linalg.solve(cov, h)))
    g = instance.gamma[ms]
    return (g / (1.0 + g)) / quad


def required_power_map(instance: ProblemInstance, uplink_powers,
                       weights=None) -> np.ndarray:
    """(num_ms, num_bs) map of required uplink powers; +inf off-candidate."""
    eng = _Engine(instance, weights)
    f_act = eng.required_power_map(np.asarray(uplink_powers, dtype=float))
    full = np.full((instance.num_ms, instance.num_bs), np.inf)
    full[:, eng.active] = f_act.T
    return full


def fixed_point_solve(instance: ProblemInstance, weights=None,
                      tolerance: float = DEFAULT_TOLERANCE,
                      max_iter: int = DEFAULT_MAX_ITER,
                      divergence_cap: float = None,
                      initial=None,
                      dual_value_cap: float = None) -> FixedPointOutcome:
    """Iterate the virtual-uplink map to its minimal fixed point.

    Stops when the sup-norm update falls below tolerance * (1 + |lambda|_inf)
    (status "converged"), when divergence is certified (status "infeasible",
    with a witness dict), or after max_iter updates ("iteration_limit").

    dual_value_cap, when given, aborts with status "infeasible" as soon as
    the dual value sigma^2 * sum(lambda) provably exceeds the cap; the bound
    is checked any time for zero-started runs (iterates stay dual feasible
    on the monotone path) and only at convergence otherwise.
    """
    eng = _Engine(instance, weights)
    K = instance.num_ms
    sigma2 = instance.noise_power
    if divergence_cap is None:
        divergence_cap = 1e12 * float(np.max(instance.gamma)) / sigma2
    if initial is None:
        lam = np.zeros(K)
        monotone = True
    else:
        lam = np.array(initial, dtype=float)
        if lam.shape != (K,) or np.any(lam < 0):
            raise ConfigError("initial uplink powers must be nonnegative, one per mobile")
        monotone = False

    trace = []
    sup_trace = []
    status = ITERATION_LIMIT
    witness = None
    feasible_certified = False
    stall_count = 0
    lam_at_checkpoint = None
    iterations = 0

    for n in range(1, max_iter + 1):
        f_act = eng.required_power_map(lam)
        lam_new = f_act.min(axis=0)
        residue = float(np.max(np.abs(lam_new - lam)))
        converged = residue <= tolerance * (1.0 + float(np.max(lam)))
        lam = lam_new
        trace.append(residue)
        sup_trace.append(float(np.max(lam)))
        iterations = n

        if dual_value_cap is not None and (monotone or converged):
            if sigma2 * float(lam.sum()) > dual_value_cap:
                status = INFEASIBLE
                witness = {"reason": "dual_value_cap",
                           "dual_value": sigma2 * float(lam.sum()),
                           "cap": dual_value_cap}
                break
        if converged:
            status = CONVERGED
            break
        if float(np.max(lam)) > divergence_cap:
            status = INFEASIBLE
            witness = {"reason": "divergence_cap",
                       "uplink_power_sup": float(np.max(lam)),
                       "cap": divergence_cap}
            break
        if n % CHECK_INTERVAL == 0 and not feasible_certified:
            rho = eng.majorant_radius(lam, f_act)
            grew = (lam_at_checkpoint is not None
                    and np.all(lam >= lam_at_checkpoint)
                    and np.any(lam > lam_at_checkpoint))
            lam_at_checkpoint = lam.copy()
            if rho < 1.0 - RHO_MARGIN:
                feasible_certified = True
            elif grew:
                stall_count += 1
                if stall_count >= STALL_CHECKPOINTS:
                    status = INFEASIBLE
                    witness = {"reason": "stalled_growth",
                               "majorant_radius": rho,
                               "uplink_power_sup": float(np.max(lam))}
                    break
            else:
                stall_count = 0

    state = DualState(uplink_powers=lam, bs_weights=eng.weights,
                      iterations=iterations, residue_trace=np.array(trace),
                      sup_trace=np.array(sup_trace))
    dual = sigma2 * float(lam.sum()) if status == CONVERGED else None
    return FixedPointOutcome(status=status, state=state, dual_value=dual,
                             witness=witness)


def mmse_receivers(instance: ProblemInstance, state: DualState) -> ReceiverSet:
    """Unit-norm MMSE receive directions Cov_q^-1 h_iq for candidate pairs.

    At the fixed point these directions are also the blocking vectors of the
    dual constraints that hold with equality, so they double as the downlink
    beam directions.  h_iq^H w_iq comes out real and nonnegative because
    the quadratic form Cov^-1 is positive definite.
    """
    eng = _Engine(instance, state.bs_weights)
    X, _ = eng._solve(np.asarray(state.uplink_powers, dtype=float))
    K, Q, M = instance.num_ms, instance.num_bs, instance.antennas
    out = np.zeros((K, Q, M), dtype=complex)
    norms = np.sqrt(np.einsum("qmk,qmk->qk", X.conj(), X).real)
    norms = np.where(norms > 0, norms, 1.0)
    directions = (X / norms[:, None, :]).transpose(2, 0, 1)  # (K, A, M)
    mask = instance.clustering.mask()
    for idx, q in enumerate(eng.active):
        sel = mask[:, q]
        out[sel, q, :] = directions[sel, idx, :]
    return ReceiverSet(directions=out)


def select_association(instance: ProblemInstance, state: DualState,
                       tie_tolerance: float = TIE_TOLERANCE):
    """Serving station per mobile at the dual optimum, plus near-ties.

    Returns (association, tie_sets): association[i] is the candidate with
    the smallest required uplink power (lowest index on exact ties) and
    tie_sets[i] collects every candidate within the relative tie tolerance
    of lambda_i; more than one member signals an ambiguous optimum.
    """
    f = required_power_map(instance, state.uplink_powers, state.bs_weights)
    lam = np.asarray(state.uplink_powers, dtype=float)
    association = []
    tie_sets = []
    for i in range(instance.num_ms):
        fi = f[i]
        best = int(np.argmin(fi))
        threshold = max((1.0 + tie_tolerance) * lam[i], fi[best])
        ties = tuple(int(q) for q in np.flatnonzero(fi <= threshold))
        association.append(best)
        tie_sets.append(ties)
    return tuple(association), tuple(tie_sets)


def power_coupling_matrix(instance: ProblemInstance, association,
                          receivers: ReceiverSet) -> np.ndarray:
    """Linear system coupling per-mobile downlink powers to SINR targets.

    Row i states mobile i's SINR constraint with equality under the fixed
    beam directions: diagonal |h_{i,q_i}^H w_i|^2 / gamma_i, off-diagonal
    -|h_{i,q_j}^H w_j|^2.  Solving G d = sigma^2 * 1 yields the downlink
    power scalings.
    """
    K = instance.num_ms
    gains = instance.channels.gains
    G = np.empty((K, K))
    for j, q in enumerate(association):
        w = receivers.directions[j, q]
        cross = np.abs(gains[:, q, :].conj() @ w) ** 2   # |h_{i,q_j}^H w_j|^2
        G[:, j] = -cross
        G[j, j] = cross[j] / instance.gamma[j]
        if cross[j] == 0.0:
            raise DegenerateAssociationError(
                f"mobile {j} has zero gain toward its serving station {q}")
    return G


def solve_downlink_scaling(G: np.ndarray, noise_power: float) -> np.ndarray:
    """Positive solution of G d = noise_power * 1, or raise.

    The coupling matrix of a converged dual solution is a nonsingular
    M-matrix, so the solution exists and is strictly positive; anything
    else means the association cannot meet the targets.
    """
    K = G.shape[0]
    rhs = np.full(K, float(noise_power))
    try:
        d = np.linalg.solve(G, rhs)
    except np.linalg.LinAlgError as exc:
        raise InfeasibleScalingError("coupling matrix is singular") from exc
    residual = float(np.max(np.abs(G @ d - rhs)))
    if not np.all(d > 0):
        raise InfeasibleScalingError("downlink scaling is not strictly positive")
    # Backward-error criterion: the residual of a well-posed solve scales
    # with the magnitudes of G and d, which near-infeasible associations
    # legitimately blow up.
    scale = max(float(noise_power),
                float(np.max(np.abs(G))) * float(np.max(np.abs(d))))
    if residual > 1e-9 * scale:
        raise InfeasibleScalingError(
            f"scaling system solved too inaccurately (residual {residual:.3e})")
    return d


def foschini_miljanic_scaling(instance: ProblemInstance, association,
                              directions: ReceiverSet,
                              tolerance: float = DEFAULT_TOLERANCE,
                              max_iter: int = 1000000) -> np.ndarray:
    """Distributed power control reaching the same downlink scalings.

    Starting from all-noise powers, every mobile's power is multiplied by
    gamma_i / SINR_i each round.  Converges geometrically to the solution
    of the coupling system whenever the targets are feasible under the
    fixed directions; the stop rule tracks the contraction ratio so the
    returned powers are within about tolerance of the fixed point.
    """
    K = instance.num_ms
    sigma2 = instance.noise_power
    gains = instance.channels.gains
    g = np.empty((K, K))
    for j, q in enumerate(association):
        w = directions.directions[j, q]
        g[:, j] = np.abs(gains[:, q, :].conj() @ w) ** 2
    gamma = instance.gamma
    d = np.full(K, sigma2)
    prev_residue = None
    ratios = collections.deque(maxlen=8)
    for _ in range(max_iter):
        interference = g @ d - np.diag(g) * d + sigma2
        sinr = np.diag(g) * d / interference
        d_new = gamma / sinr * d
        residue = float(np.max(np.abs(d_new - d)))
        d = d_new
        if not np.all(np.isfinite(d)) or float(np.max(d)) > 1e18 * sigma2:
            raise InfeasibleScalingError(
                "distributed power control diverged; targets infeasible "
                "under the fixed directions")
        if residue == 0.0:
            return d
        if prev_residue is not None and prev_residue > 0:
            ratios.append(min(residue / prev_residue, 0.999999))
        prev_residue = residue
        if not ratios:
            continue
        # A single-step ratio can transiently dip below the asymptotic
        # contraction factor; the window maximum keeps the geometric tail
        # estimate residue * c / (1 - c) conservative.
        ratio = max(ratios)
        gap_estimate = residue * ratio / (1.0 - ratio)
        if gap_estimate <= 0.1 * tolerance * (1.0 + float(np.max(d))):
            return d
    raise InfeasibleScalingError(
        "distributed power control did not converge; targets likely infeasible")


def downlink_sinr(instance: ProblemInstance, beamformers: np.ndarray) -> np.ndarray:
    """Per-mobile downlink SINR under a full (num_ms, num_bs, M) beam grid.

    Useful signal aggregates every candidate station of the mobile;
    interference aggregates every other mobile's beams over that mobile's
    candidate stations.  Beams outside candidate sets are ignored.
    """
    w = np.asarray(beamformers, dtype=complex)
    K, Q, M = instance.num_ms, instance.num_bs, instance.antennas
    if w.shape != (K, Q, M):
        raise ConfigError("beamformers must have shape (num_ms, num_bs, antennas)")
    mask = instance.clustering.mask()
    cross = np.abs(np.einsum("irm,jrm->ijr",
                             instance.channels.gains.conj(), w)) ** 2
    cross = cross * mask[None, :, :]
    per_pair = cross.sum(axis=2)                  # (i, j) received powers
    signal = np.diagonal(per_pair).copy()
    interference = per_pair.sum(axis=1) - signal
    return signal / (interference + instance.noise_power)


def residue_trace_csv(outcome: FixedPointOutcome) -> str:
    """CSV rows (iteration, uplink_power_sup, residue) for convergence plots."""
    lines = ["iteration,uplink_power_sup,residue"]
    state = outcome.state
    for n, (sup, r) in enumerate(zip(state.sup_trace, state.residue_trace), 1):
        lines.append(f"{n},{sup:.9g},{r:.9g}")
    return "\n".join(lines) + "\n"
