"""Human-readable key=value scenario configs and instance construction.

A config pins one reproducible scenario family: layout, mobile count,
antennas, path loss, noise, SINR targets, weights, caps, clustering and the
64-bit seed.  Station indices and candidate groups are written 1-based in
files and converted at the parsing boundary; everything in memory is
0-based.

Example::

    # two stations, three mobiles
    layout = two_cell
    K = 3
    M = 2
    gamma_db = 6
    noise_psd = 0.01
    clustering = universal
    seed = 7

A seven-cell grouped config uses ``layout = seven_cell`` and ``clustering =
grouped [[1,2,3],[1,4,5],[1,6,7]]`` (bare ``grouped`` defaults to those
three overlapping groups).  ``layout`` also accepts explicit coordinates as
a list of [x, y] pairs, which are rescaled so the nearest station pair is
one unit apart.
"""

from __future__ import annotations

import ast
from dataclasses import dataclass, replace

import numpy as np

from . import scenario
from .errors import ConfigError, DegenerateGeometryError

_KEYS = {"layout", "k", "m", "antennas", "pathloss_exponent", "noise_psd",
         "gamma_db", "weights", "power_caps", "clustering", "seed"}


@dataclass(frozen=True)
class ScenarioConfig:
    """Validated scenario description, still free of randomness."""

    bs_positions: np.ndarray
    num_ms: int
    antennas: int
    pathloss_exponent: float = 4.0
    noise_psd: float = 0.01
    gamma_db: np.ndarray = 0.0
    weights: np.ndarray = 1.0
    power_caps: np.ndarray = 1.0
    clustering_mode: str = "universal"
    groups: tuple = None
    seed: int = 0

    def __post_init__(self):
        bs = np.atleast_2d(np.asarray(self.bs_positions, dtype=float))
        if bs.shape[0] < 1 or bs.shape[1] != 2:
            raise ConfigError("layout must give at least one [x, y] station")
        if bs.shape[0] > 1:
            diff = bs[:, None, :] - bs[None, :, :]
            dist = np.linalg.norm(diff, axis=2)
            nearest = float(np.min(dist[np.triu_indices(bs.shape[0], k=1)]))
            if nearest == 0.0:
                raise DegenerateGeometryError("two stations coincide")
            bs = bs / nearest  # normalize: nearest station pair one unit apart
        bs.flags.writeable = False
        object.__setattr__(self, "bs_positions", bs)
        if self.num_ms < 1:
            raise ConfigError("K must be at least 1")
        if self.antennas < 1:
            raise ConfigError("M must be at least 1")
        if not self.pathloss_exponent > 0:
            raise ConfigError("pathloss_exponent must be positive")
        if not self.noise_psd > 0:
            raise ConfigError("noise_psd must be positive")
        Q, K = bs.shape[0], self.num_ms
        for name, size in (("gamma_db", K), ("weights", Q), ("power_caps", Q)):
            try:
                arr = np.broadcast_to(
                    np.asarray(getattr(self, name), dtype=float), (size,)).copy()
            except ValueError:
                raise ConfigError(f"{name} must be scalar or length {size}")
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if self.clustering_mode not in ("universal", "grouped"):
            raise ConfigError("clustering must be universal or grouped")
        if self.clustering_mode == "grouped" and not self.groups:
            raise ConfigError("grouped clustering requires groups")
        object.__setattr__(self, "seed", int(self.seed))

    @property
    def num_bs(self) -> int:
        return self.bs_positions.shape[0]


def _parse_value(raw: str):
    try:
        return ast.literal_eval(raw)
    except (ValueError, SyntaxError):
        return raw


def parse_config(text: str) -> ScenarioConfig:
    """Parse key = value lines ('#' comments) into a ScenarioConfig."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, raw = (part.strip() for part in line.split("=", 1))
        key = key.lower()
        if key not in _KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values or (key in ("m", "antennas")
                             and ("m" in values or "antennas" in values)):
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = raw

    for required in ("layout", "k"):
        if required not in values:
            raise ConfigError(f"missing required key {required!r}")
    if "m" not in values and "antennas" not in values:
        raise ConfigError("missing required key 'M' (antennas per station)")

    layout = _parse_value(values["layout"])
    if layout == "two_cell":
        bs = scenario.layout_two_cell()
    elif layout == "seven_cell":
        bs = scenario.layout_seven_cell()
    elif isinstance(layout, (list, tuple)):
        bs = np.asarray(layout, dtype=float)
    else:
        raise ConfigError(f"unknown layout {values['layout']!r}")

    mode, groups = "universal", None
    if "clustering" in values:
        raw = values["clustering"].strip()
        if raw == "universal":
            pass
        elif raw.startswith("grouped"):
            mode = "grouped"
            rest = raw[len("grouped"):].strip()
            if rest:
                parsed = _parse_value(rest)
                if not isinstance(parsed, (list, tuple)):
                    raise ConfigError("grouped clustering expects index lists")
                groups = tuple(tuple(int(q) - 1 for q in g) for g in parsed)
            else:
                groups = scenario.SEVEN_CELL_GROUPS
        else:
            raise ConfigError(f"unknown clustering {raw!r}")

    def number(key, default):
        if key not in values:
            return default
        parsed = _parse_value(values[key])
        if not isinstance(parsed, (int, float)):
            raise ConfigError(f"{key} must be a number")
        return parsed

    def number_or_list(key, default):
        if key not in values:
            return default
        parsed = _parse_value(values[key])
        if isinstance(parsed, (int, float, list, tuple)):
            return parsed
        raise ConfigError(f"{key} must be a number or a list")

    return ScenarioConfig(
        bs_positions=bs,
        num_ms=int(number("k", 0)),
        antennas=int(number("m", number("antennas", 0))),
        pathloss_exponent=float(number("pathloss_exponent", 4.0)),
        noise_psd=float(number("noise_psd", 0.01)),
        gamma_db=number_or_list("gamma_db", 0.0),
        weights=number_or_list("weights", 1.0),
        power_caps=number_or_list("power_caps", 1.0),
        clustering_mode=mode,
        groups=groups,
        seed=int(number("seed", 0)))


def load_config(path) -> ScenarioConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def build_instance(cfg: ScenarioConfig, seed=None,
                   gamma_db=None) -> scenario.ProblemInstance:
    """Draw the scenario pinned by (config, seed) into a ProblemInstance.

    The seed splits into independent placement and channel streams.  seed
    and gamma_db overrides leave the config untouched, so one config can
    drive paired trials across seeds and target sweeps.
    """
    seed = cfg.seed if seed is None else int(seed)
    root = np.random.SeedSequence(seed)
    placement_seed, channel_seed = root.spawn(2)
    ms = scenario.place_mobiles(cfg.bs_positions, cfg.num_ms, placement_seed)
    geometry = scenario.Geometry(cfg.bs_positions, ms)
    clustering = scenario.build_clusters(geometry, cfg.clustering_mode,
                                         cfg.groups)
    channels = scenario.generate_channels(geometry, clustering, cfg.antennas,
                                          cfg.pathloss_exponent, channel_seed,
                                          noise_power=cfg.noise_psd)
    gdb = np.asarray(cfg.gamma_db if gamma_db is None else gamma_db,
                     dtype=float)
    gamma = 10.0 ** (np.broadcast_to(gdb, (cfg.num_ms,)) / 10.0)
    return scenario.ProblemInstance(channels, clustering, gamma,
                                    cfg.weights, cfg.power_caps, geometry)


def with_gamma_db(instance: scenario.ProblemInstance,
                  gamma_db) -> scenario.ProblemInstance:
    """Same draw, different SINR targets (for paired target sweeps)."""
    gamma = 10.0 ** (np.asarray(gamma_db, dtype=float) / 10.0)
    return replace(instance, gamma=np.broadcast_to(gamma, (instance.num_ms,)))
