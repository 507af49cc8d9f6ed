"""Shared instance builders for the test suite."""

import numpy as np

from dpsbeam import scenario


def triangle_layout():
    """Three stations on a unit equilateral triangle."""
    return np.array([[0.0, 0.0], [1.0, 0.0], [0.5, np.sqrt(3.0) / 2.0]])


def explicit_instance(gains, gamma, noise_power=0.01, weights=None,
                      power_caps=None, candidate_sets=None, ms_positions=None):
    """Instance with hand-picked channels.

    gains has shape (K, Q, M); candidate sets default to universal.
    """
    gains = np.asarray(gains, dtype=complex)
    K, Q, _ = gains.shape
    if candidate_sets is None:
        candidate_sets = tuple(tuple(range(Q)) for _ in range(K))
    clustering = scenario.Clustering(Q, candidate_sets)
    channels = scenario.ChannelSet(gains=gains, noise_power=noise_power)
    bs = np.stack([np.arange(Q, dtype=float), np.zeros(Q)], axis=1)
    if ms_positions is None:
        ms_positions = np.stack(
            [np.arange(K, dtype=float) + 0.25, np.ones(K)], axis=1)
    geometry = scenario.Geometry(bs, np.asarray(ms_positions, dtype=float))
    return scenario.ProblemInstance(
        channels=channels, clustering=clustering,
        gamma=np.broadcast_to(np.asarray(gamma, dtype=float), (K,)).copy(),
        weights=np.ones(Q) if weights is None else np.asarray(weights, float),
        power_caps=(np.ones(Q) if power_caps is None
                    else np.asarray(power_caps, float)),
        geometry=geometry)


def single_mobile_two_stations(h_first, h_second, gamma=1.0,
                               noise_power=0.01, power_caps=(1.0, 1.0),
                               weights=(1.0, 1.0)):
    """One mobile, two single-antenna stations with scalar channels."""
    gains = np.zeros((1, 2, 1), dtype=complex)
    gains[0, 0, 0] = h_first
    gains[0, 1, 0] = h_second
    return explicit_instance(gains, gamma, noise_power=noise_power,
                             weights=weights, power_caps=power_caps,
                             ms_positions=[[0.4, 0.0]])


def shared_station_pair(gamma, noise_power=0.01):
    """Two mobiles on one single-antenna station, unit channels.

    The virtual-uplink update for each mobile is affine with slope
    2 gamma / (1 + gamma): a fixed point exists iff gamma < 1.
    """
    gains = np.ones((2, 1, 1), dtype=complex)
    return explicit_instance(gains, gamma, noise_power=noise_power,
                             ms_positions=[[0.3, 0.1], [0.6, -0.2]])


def single_link(gamma=1.0, noise_power=0.01, gain=1.0, antennas=1):
    """One mobile, one station; the scalar textbook case."""
    gains = np.full((1, 1, antennas), gain / np.sqrt(antennas), dtype=complex)
    return explicit_instance(gains, gamma, noise_power=noise_power,
                             ms_positions=[[0.5, 0.0]])
