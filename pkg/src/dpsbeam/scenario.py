"""Scenario construction: cell layouts, mobile placement, channels, clustering.

Distances are normalized so that two neighbouring base stations are one unit
apart.  Channels are flat Rayleigh fading with a power-law path loss, drawn
from a counter-based generator (Philox) so that a 64-bit seed pins the whole
scenario bit-for-bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DegenerateGeometryError

DEFAULT_EXCLUSION_RADIUS = 0.01

# Three overlapping clusters of the seven-cell layout: the central station
# plus one adjacent pair of ring stations each (0-based indices).
SEVEN_CELL_GROUPS = ((0, 1, 2), (0, 3, 4), (0, 5, 6))


def layout_two_cell() -> np.ndarray:
    """Two base stations one unit apart on the x axis."""
    return np.array([[0.0, 0.0], [1.0, 0.0]])


def layout_seven_cell() -> np.ndarray:
    """Central base station plus six on the unit hexagon around it.

    Adjacent ring stations are exactly one unit apart, as is every ring
    station from the centre.
    """
    angles = np.arange(6) * np.pi / 3.0
    ring = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    return np.vstack([[0.0, 0.0], ring])


@dataclass(frozen=True)
class Geometry:
    """Base-station and mobile positions in the normalized plane."""

    bs_positions: np.ndarray  # (num_bs, 2)
    ms_positions: np.ndarray  # (num_ms, 2)

    def __post_init__(self):
        bs = np.atleast_2d(np.asarray(self.bs_positions, dtype=float))
        ms = np.asarray(self.ms_positions, dtype=float).reshape(-1, 2)
        if bs.ndim != 2 or bs.shape[1] != 2 or bs.shape[0] == 0:
            raise ConfigError("bs_positions must be a non-empty (Q, 2) array")
        for arr, name in ((bs, "bs_positions"), (ms, "ms_positions")):
            if not np.all(np.isfinite(arr)):
                raise ConfigError(f"{name} must be finite")
            arr.flags.writeable = False
        object.__setattr__(self, "bs_positions", bs)
        object.__setattr__(self, "ms_positions", ms)

    @property
    def num_bs(self) -> int:
        return self.bs_positions.shape[0]

    @property
    def num_ms(self) -> int:
        return self.ms_positions.shape[0]

    def distances(self) -> np.ndarray:
        """(num_ms, num_bs) matrix of mobile-to-station distances."""
        diff = self.ms_positions[:, None, :] - self.bs_positions[None, :, :]
        return np.linalg.norm(diff, axis=2)


@dataclass(frozen=True)
class Clustering:
    """Candidate serving set for every mobile, with the inverse map.

    candidate_sets[i] lists the stations allowed to serve mobile i (sorted,
    0-based).  serving_sets()[q] lists the mobiles that may be served by
    station q.
    """

    num_bs: int
    candidate_sets: tuple

    def __post_init__(self):
        if self.num_bs < 1:
            raise ConfigError("num_bs must be positive")
        cleaned = []
        for i, cand in enumerate(self.candidate_sets):
            cand = tuple(sorted(set(int(q) for q in cand)))
            if not cand:
                raise ConfigError(f"candidate set of mobile {i} is empty")
            if cand[0] < 0 or cand[-1] >= self.num_bs:
                raise ConfigError(f"candidate set of mobile {i} out of range")
            cleaned.append(cand)
        object.__setattr__(self, "candidate_sets", tuple(cleaned))

    @property
    def num_ms(self) -> int:
        return len(self.candidate_sets)

    def serving_sets(self) -> tuple:
        inverse = [[] for _ in range(self.num_bs)]
        for i, cand in enumerate(self.candidate_sets):
            for q in cand:
                inverse[q].append(i)
        return tuple(tuple(v) for v in inverse)

    def mask(self) -> np.ndarray:
        """(num_ms, num_bs) boolean candidate mask."""
        out = np.zeros((self.num_ms, self.num_bs), dtype=bool)
        for i, cand in enumerate(self.candidate_sets):
            out[i, list(cand)] = True
        return out


@dataclass(frozen=True)
class ChannelSet:
    """Complex channel vectors for every (mobile, station) pair.

    gains[i, q] is the length-M channel from station q to mobile i.  All
    pairs are populated, so one draw serves any clustering over the same
    geometry and the interference terms never miss a link.
    """

    gains: np.ndarray  # (num_ms, num_bs, antennas) complex
    noise_power: float

    def __post_init__(self):
        g = np.asarray(self.gains, dtype=complex)
        if g.ndim != 3:
            raise ConfigError("gains must have shape (num_ms, num_bs, antennas)")
        if not np.all(np.isfinite(g)):
            raise ConfigError("gains must be finite")
        if not self.noise_power > 0:
            raise ConfigError("noise_power must be positive")
        g.flags.writeable = False
        object.__setattr__(self, "gains", g)
        object.__setattr__(self, "noise_power", float(self.noise_power))

    @property
    def num_ms(self) -> int:
        return self.gains.shape[0]

    @property
    def num_bs(self) -> int:
        return self.gains.shape[1]

    @property
    def antennas(self) -> int:
        return self.gains.shape[2]


@dataclass(frozen=True)
class ProblemInstance:
    """One solvable association-and-beamforming problem.

    gamma holds per-mobile SINR targets (linear), weights the per-station
    cost weights of the sum-power objective, power_caps the per-station
    budgets used by the margin formulation.
    """

    channels: ChannelSet
    clustering: Clustering
    gamma: np.ndarray
    weights: np.ndarray = None
    power_caps: np.ndarray = None
    geometry: Geometry = field(default=None, compare=False)

    def __post_init__(self):
        K, Q = self.channels.num_ms, self.channels.num_bs
        if self.clustering.num_ms != K or self.clustering.num_bs != Q:
            raise ConfigError("clustering does not match the channel set")
        gamma = np.broadcast_to(np.asarray(self.gamma, dtype=float), (K,)).copy()
        if not np.all(gamma > 0):
            raise ConfigError("SINR targets must be positive")
        weights = self.weights if self.weights is not None else np.ones(Q)
        weights = np.broadcast_to(np.asarray(weights, dtype=float), (Q,)).copy()
        if not np.all(weights > 0):
            raise ConfigError("weights must be positive")
        caps = self.power_caps if self.power_caps is not None else np.ones(Q)
        caps = np.broadcast_to(np.asarray(caps, dtype=float), (Q,)).copy()
        if not np.all(caps > 0):
            raise ConfigError("power_caps must be positive")
        for arr in (gamma, weights, caps):
            arr.flags.writeable = False
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "power_caps", caps)

    @property
    def num_ms(self) -> int:
        return self.channels.num_ms

    @property
    def num_bs(self) -> int:
        return self.channels.num_bs

    @property
    def antennas(self) -> int:
        return self.channels.antennas

    @property
    def noise_power(self) -> float:
        return self.channels.noise_power

    def restricted(self, association) -> "ProblemInstance":
        """Copy of the instance whose candidate sets are the given singletons."""
        association = tuple(int(q) for q in association)
        if len(association) != self.num_ms:
            raise ConfigError("association length does not match mobile count")
        for i, q in enumerate(association):
            if q not in self.clustering.candidate_sets[i]:
                raise ConfigError(f"station {q} is not a candidate of mobile {i}")
        singletons = Clustering(self.num_bs, tuple((q,) for q in association))
        return ProblemInstance(self.channels, singletons, self.gamma,
                               self.weights, self.power_caps, self.geometry)

    def with_clustering(self, clustering: Clustering) -> "ProblemInstance":
        return ProblemInstance(self.channels, clustering, self.gamma,
                               self.weights, self.power_caps, self.geometry)


def _as_seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(int(seed))


def _rng(seed) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(_as_seed_sequence(seed)))


def place_mobiles(bs_positions, count, seed,
                  exclusion_radius=DEFAULT_EXCLUSION_RADIUS,
                  cell_radius=None) -> np.ndarray:
    """Drop mobiles uniformly over the network's cellular coverage area.

    The coverage area is the union of disks of cell_radius around the
    stations (default: the nearest-pair station distance, or 1 for a lone
    station), so every layout gets a genuine two-dimensional service area.
    Positions closer than exclusion_radius to any station are redrawn.
    """
    bs = np.atleast_2d(np.asarray(bs_positions, dtype=float))
    if count < 0:
        raise ConfigError("mobile count must be nonnegative")
    if cell_radius is None:
        if bs.shape[0] >= 2:
            diff = bs[:, None, :] - bs[None, :, :]
            dist = np.linalg.norm(diff, axis=-1)
            np.fill_diagonal(dist, np.inf)
            cell_radius = float(dist.min())
            if cell_radius == 0.0:
                raise DegenerateGeometryError("two stations coincide")
        else:
            cell_radius = 1.0
    if cell_radius <= exclusion_radius:
        raise ConfigError("cell radius must exceed the exclusion radius")
    rng = _rng(seed)
    lo = bs.min(axis=0) - cell_radius
    hi = bs.max(axis=0) + cell_radius
    out = np.empty((count, 2))
    for i in range(count):
        for _ in range(10000):
            pt = lo + rng.random(2) * (hi - lo)
            nearest = float(np.min(np.linalg.norm(bs - pt, axis=1)))
            if exclusion_radius <= nearest <= cell_radius:
                out[i] = pt
                break
        else:
            raise ConfigError("could not place a mobile outside exclusion zones")
    return out


def generate_channels(geometry: Geometry, clustering, antennas: int,
                      pathloss_exponent: float, rng_seed,
                      noise_power: float = 1.0) -> ChannelSet:
    """Draw Rayleigh channels with variance distance**-pathloss_exponent.

    Entries are i.i.d. circular complex Gaussians per antenna; every
    (mobile, station) pair is drawn, in a fixed order, so identical seeds
    give bit-identical channel sets.  The clustering argument is validated
    against the geometry but does not influence the draw.
    """
    if antennas < 1:
        raise ConfigError("antennas must be at least 1")
    if clustering is not None and (clustering.num_ms != geometry.num_ms
                                   or clustering.num_bs != geometry.num_bs):
        raise ConfigError("clustering does not match the geometry")
    dist = geometry.distances()
    if np.any(dist == 0.0):
        raise DegenerateGeometryError("a mobile coincides with a station")
    # Complex variance d**-eta, split evenly over real and imaginary parts.
    scale = np.sqrt(0.5 * dist ** (-float(pathloss_exponent)))
    rng = _rng(rng_seed)
    draw = rng.standard_normal((geometry.num_ms, geometry.num_bs, antennas, 2))
    gains = (draw[..., 0] + 1j * draw[..., 1]) * scale[:, :, None]
    return ChannelSet(gains=gains, noise_power=noise_power)


def build_clusters(geometry: Geometry, mode: str, groups=None) -> Clustering:
    """Assign every mobile a candidate set of stations.

    mode "universal" admits every station for every mobile.  mode "grouped"
    assigns each mobile to the group whose station centroid is nearest
    (ties to the lowest group index) and uses that group as its candidate
    set.  groups are 0-based station index tuples.
    """
    Q = geometry.num_bs
    if mode == "universal":
        cand = tuple(tuple(range(Q)) for _ in range(geometry.num_ms))
        return Clustering(Q, cand)
    if mode != "grouped":
        raise ConfigError(f"unknown clustering mode: {mode!r}")
    if not groups:
        raise ConfigError("grouped clustering requires at least one group")
    groups = tuple(tuple(sorted(set(int(q) for q in g))) for g in groups)
    for g in groups:
        if not g or g[0] < 0 or g[-1] >= Q:
            raise ConfigError("group indices out of range")
    centroids = np.stack([geometry.bs_positions[list(g)].mean(axis=0)
                          for g in groups])
    cand = []
    for pos in geometry.ms_positions:
        d = np.linalg.norm(centroids - pos, axis=1)
        cand.append(groups[int(np.argmin(d))])  # argmin keeps the lowest index on ties
    return Clustering(Q, tuple(cand))


def fixed_association(instance: ProblemInstance, scheme: str) -> tuple:
    """Pick one serving station per mobile without optimizing.

    scheme "channel_based" takes the candidate with the largest channel
    norm, "location_based" the nearest candidate station.  Ties go to the
    lowest station index.
    """
    out = []
    if scheme == "channel_based":
        norms = np.sum(np.abs(instance.channels.gains) ** 2, axis=2)
        for i, cand in enumerate(instance.clustering.candidate_sets):
            cand = np.asarray(cand)
            out.append(int(cand[np.argmax(norms[i, cand])]))
    elif scheme == "location_based":
        if instance.geometry is None:
            raise ConfigError("location_based association needs geometry")
        dist = instance.geometry.distances()
        for i, cand in enumerate(instance.clustering.candidate_sets):
            cand = np.asarray(cand)
            out.append(int(cand[np.argmin(dist[i, cand])]))
    else:
        raise ConfigError(f"unknown association scheme: {scheme!r}")
    return tuple(out)
