"""Link budget: path loss, shadowing fields, antenna patterns, noise.

The propagation loss between a station at X and a location y is

    L_X(y) = l(|y - X|) / (P * G_ant * S)

with the power-law path loss l(d) = (K * d)^beta, transmit power P,
antenna gain G_ant and unit-mean lognormal shadowing S, all linear.
1 / L_X(y) is the received power in watts. Distances are km, K is 1/km.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .units import THERMAL_NOISE_DBM_PER_HZ, dbm_to_watts

LN10 = math.log(10.0)


@dataclass(frozen=True)
class PathLossParams:
    """Power-law path loss (K * d)^beta.

    Parameters
    ----------
    K : float
        Distance coefficient, 1/km.
    beta : float
        Path-loss exponent; must exceed 2 for the cell model to be
        well defined.
    min_distance_km : float
        Near-field clamp: distances below this evaluate the loss at the
        clamp radius (the power law diverges to zero loss at d -> 0 and
        grid nodes can coincide with a station).
    """

    K: float
    beta: float
    min_distance_km: float = 0.01

    def __post_init__(self):
        if not (np.isfinite(self.K) and self.K > 0):
            raise ValueError(f"distance coefficient K must be positive, got {self.K}")
        if not (np.isfinite(self.beta) and self.beta > 2):
            raise ValueError(f"path-loss exponent beta must exceed 2, got {self.beta}")
        if not (np.isfinite(self.min_distance_km) and self.min_distance_km >= 0):
            raise ValueError(f"min_distance_km must be nonnegative, got {self.min_distance_km}")


@dataclass(frozen=True)
class CostHataZone:
    """COST-Hata fit 10*log10(l(d)) = A + B*log10(d km)."""

    A: float
    B: float

    def __post_init__(self):
        if not np.isfinite(self.A):
            raise ValueError(f"A must be finite, got {self.A}")
        # B > 20 keeps beta = B/10 above 2
        if not (np.isfinite(self.B) and self.B > 20):
            raise ValueError(f"B must exceed 20 dB/decade, got {self.B}")


@dataclass(frozen=True)
class ShadowingConfig:
    """Per-station lognormal shadowing field.

    mode 'off' disables shadowing, 'iid' draws independently per
    (station, grid node), 'correlated' draws a per-station Gaussian
    field with exponential correlation exp(-d/corr_dist) in the dB
    domain. The lognormal marginal has unit mean in every mode: the
    location parameter is fixed at -sigma_dB^2 * ln(10)/20.
    """

    mode: str = "off"
    sigma_db: float = 9.6
    corr_dist_m: float = 50.0
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("off", "iid", "correlated"):
            raise ValueError(f"unknown shadowing mode {self.mode!r}")
        if not (np.isfinite(self.sigma_db) and self.sigma_db >= 0):
            raise ValueError(f"sigma_db must be nonnegative, got {self.sigma_db}")
        if self.mode == "correlated" and not (np.isfinite(self.corr_dist_m) and self.corr_dist_m > 0):
            raise ValueError(f"corr_dist_m must be positive, got {self.corr_dist_m}")


@dataclass(frozen=True)
class AntennaConfig:
    """Site antenna: isotropic or three sectors with a parametric pattern.

    The sector pattern is the standard quadratic roll-off, capped: the
    azimuth attenuation is min(12*(daz/az_beamwidth)^2, front_back_limit),
    the elevation attenuation is min(12*((el - downtilt)/el_beamwidth)^2,
    side_lobe_limit), and their sum is capped again at front_back_limit.
    A location sees the best of the three sectors. All constants are
    config-exposed. Omni mode has 0 dBi gain in every direction.
    """

    mode: str = "omni"
    az_beamwidth_deg: float = 70.0
    el_beamwidth_deg: float = 10.0
    front_back_limit_db: float = 25.0
    side_lobe_limit_db: float = 20.0
    max_gain_dbi: float = 14.0
    downtilt_deg: float = 0.0
    bs_height_m: float = 30.0
    ue_height_m: float = 1.5
    sector_azimuths_deg: tuple = (0.0, 120.0, 240.0)

    def __post_init__(self):
        if self.mode not in ("omni", "trisector"):
            raise ValueError(f"unknown antenna mode {self.mode!r}")
        if self.az_beamwidth_deg <= 0 or self.el_beamwidth_deg <= 0:
            raise ValueError("beamwidths must be positive")
        for name in ("front_back_limit_db", "side_lobe_limit_db", "max_gain_dbi",
                     "downtilt_deg", "bs_height_m", "ue_height_m"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if len(self.sector_azimuths_deg) != 3:
            raise ValueError("trisector sites carry exactly three sector azimuths")


@dataclass(frozen=True)
class LinkParams:
    """Station power budget and receiver noise figure."""

    tx_power_dbm: float = 60.0
    pilot_fraction: float = 0.1
    noise_figure_db: float = 11.0
    # when set, cell selection uses pilot power = pilot_fraction * P;
    # data SINR always uses the full power P
    select_on_pilot: bool = True

    def __post_init__(self):
        if not np.isfinite(self.tx_power_dbm):
            raise ValueError(f"tx_power_dbm must be finite, got {self.tx_power_dbm}")
        if not (0.0 < self.pilot_fraction < 1.0):
            raise ValueError(f"pilot_fraction must lie in (0, 1), got {self.pilot_fraction}")
        if not np.isfinite(self.noise_figure_db):
            raise ValueError("noise_figure_db must be finite")


def path_loss(params: PathLossParams, distance_km):
    """Linear loss factor (K * d)^beta, clamped below min_distance_km.

    Parameters
    ----------
    params : PathLossParams
    distance_km : float or ndarray
        Nonnegative distances in km.

    Returns
    -------
    float or ndarray
        Dimensionless loss factor; received power is P/loss.
    """
    d = np.asarray(distance_km, dtype=float)
    if not np.all(np.isfinite(d)):
        raise ValueError("distances must be finite")
    if np.any(d < 0):
        raise ValueError("distances must be nonnegative")
    out = (params.K * np.maximum(d, params.min_distance_km)) ** params.beta
    return float(out) if np.isscalar(distance_km) else out


def params_from_cost_hata(zone: CostHataZone, min_distance_km: float = 0.01) -> PathLossParams:
    """Convert a COST-Hata (A, B) fit to (K, beta): K = 10^(A/B), beta = B/10."""
    return PathLossParams(K=10.0 ** (zone.A / zone.B), beta=zone.B / 10.0,
                          min_distance_km=min_distance_km)


def scale_k_to_frequency(k0: float, f0_ghz: float, f_ghz: float, beta: float) -> float:
    """Move the distance coefficient to another carrier: K = K0 * (f/f0)^(2/beta)."""
    if min(k0, f0_ghz, f_ghz, beta) <= 0:
        raise ValueError("all arguments must be positive")
    return k0 * (f_ghz / f0_ghz) ** (2.0 / beta)


def noise_power_dbm(bandwidth_hz: float, noise_figure_db: float) -> float:
    """Receiver noise power over a bandwidth: -174 + 10*log10(W) + NF, dBm."""
    if not bandwidth_hz > 0:
        raise ValueError(f"bandwidth must be positive, got {bandwidth_hz}")
    return THERMAL_NOISE_DBM_PER_HZ + 10.0 * math.log10(bandwidth_hz) + noise_figure_db


def unit_mean_mu_db(sigma_db: float) -> float:
    """Location parameter making 10^((sigma*Z + mu)/10) unit mean."""
    return -sigma_db * sigma_db * LN10 / 20.0


def _gaussian_field(nx, ny, dx_km, dy_km, corr_km, rng):
    """Stationary standard-normal field with correlation exp(-d/corr_km).

    Circulant embedding on the doubled grid; the exponential covariance
    embeds (near) nonnegative-definitely, tiny negative FFT eigenvalues
    are clipped to zero.
    """
    mx, my = 2 * nx, 2 * ny
    ix = np.minimum(np.arange(mx), mx - np.arange(mx))
    iy = np.minimum(np.arange(my), my - np.arange(my))
    dist = np.hypot(ix[:, None] * dx_km, iy[None, :] * dy_km)
    lam = np.fft.fft2(np.exp(-dist / corr_km)).real
    np.maximum(lam, 0.0, out=lam)
    z = rng.standard_normal((mx, my)) + 1j * rng.standard_normal((mx, my))
    f = np.fft.fft2(z * np.sqrt(lam / (mx * my)))
    return np.ascontiguousarray(f.real[:nx, :ny])


def _station_seed(config: ShadowingConfig, bs_index: int):
    return np.random.SeedSequence(entropy=config.seed, spawn_key=(bs_index,))


def shadow_sample(config: ShadowingConfig, bs_index: int, grid) -> np.ndarray:
    """Linear shadowing gains of one station over all grid nodes.

    Deterministic given (config.seed, bs_index, grid). Fields are
    generated on the evaluation grid itself; consumers integrate over
    that grid, so no off-grid interpolation is needed.
    """
    n = grid.n_nodes
    if config.mode == "off" or config.sigma_db == 0.0:
        return np.ones(n)
    rng = np.random.default_rng(_station_seed(config, bs_index))
    if config.mode == "iid":
        z = rng.standard_normal(n)
    else:
        corr_km = config.corr_dist_m / 1000.0
        z = _gaussian_field(grid.nx, grid.ny, grid.step_x_km, grid.step_y_km,
                            corr_km, rng).ravel()
    db = config.sigma_db * z + unit_mean_mu_db(config.sigma_db)
    return 10.0 ** (db / 10.0)


def antenna_gain(antenna: AntennaConfig, station_xy, nodes_x, nodes_y):
    """Linear antenna gain from a site toward each node.

    Omni returns scalar 1.0. Trisector evaluates the capped quadratic
    pattern per sector, in azimuth and elevation, and takes the best
    sector (sectors of one site share the position and are not separate
    cells).
    """
    if antenna.mode == "omni":
        return 1.0
    dx = nodes_x - station_xy[0]
    dy = nodes_y - station_xy[1]
    az = np.degrees(np.arctan2(dy, dx))
    d_h = np.hypot(dx, dy)
    drop_km = (antenna.bs_height_m - antenna.ue_height_m) / 1000.0
    el = np.degrees(np.arctan2(drop_km, d_h))  # positive looking down
    att_el = np.minimum(
        12.0 * ((el - antenna.downtilt_deg) / antenna.el_beamwidth_deg) ** 2,
        antenna.side_lobe_limit_db)
    best_db = None
    for sector_az in antenna.sector_azimuths_deg:
        daz = (az - sector_az + 180.0) % 360.0 - 180.0
        att_az = np.minimum(12.0 * (daz / antenna.az_beamwidth_deg) ** 2,
                            antenna.front_back_limit_db)
        att = np.minimum(att_az + att_el, antenna.front_back_limit_db)
        g = antenna.max_gain_dbi - att
        best_db = g if best_db is None else np.maximum(best_db, g)
    return 10.0 ** (best_db / 10.0)


def propagation_loss(pathloss: PathLossParams, distance_km, tx_power_dbm,
                     antenna_gain_linear=1.0, shadow_linear=1.0):
    """Propagation loss L = l(d) / (P * G_ant * S), all linear.

    1/L is the received power in watts; doubling P exactly halves L.
    """
    p_w = dbm_to_watts(tx_power_dbm)
    return path_loss(pathloss, distance_km) / (p_w * antenna_gain_linear * shadow_linear)


@dataclass(frozen=True)
class PropagationModel:
    """Everything defining L_X(y): path loss, shadowing, antenna, link."""

    pathloss: PathLossParams
    shadowing: ShadowingConfig = field(default_factory=ShadowingConfig)
    antenna: AntennaConfig = field(default_factory=AntennaConfig)
    link: LinkParams = field(default_factory=LinkParams)

    def realize_extra_gain(self, deployment, grid):
        """Materialize shadow * antenna gains as an (S, N) matrix.

        Returns None when both effects are trivial (shadowing off, omni
        antenna); callers then skip the multiply entirely. The matrix is
        the random/realized part of the link budget and is what the
        scaling transform carries over node-for-node.
        """
        shadow_on = self.shadowing.mode != "off" and self.shadowing.sigma_db > 0
        sector_on = self.antenna.mode == "trisector"
        if not shadow_on and not sector_on:
            return None
        s = deployment.n_stations
        out = np.empty((s, grid.n_nodes))
        for i in range(s):
            row = shadow_sample(self.shadowing, i, grid) if shadow_on else 1.0
            if sector_on:
                row = row * antenna_gain(self.antenna, deployment.positions[i],
                                         grid.nodes_x, grid.nodes_y)
            out[i] = row
        return out

    def station_powers_dbm(self, deployment) -> np.ndarray:
        """Per-station transmit powers; deployment marks override the link default."""
        if deployment.power_dbm is not None:
            return np.asarray(deployment.power_dbm, dtype=float)
        return np.full(deployment.n_stations, self.link.tx_power_dbm)


def received_power_row(positions, powers_dbm, grid, pathloss: PathLossParams,
                       station: int, extra_gain=None, out=None):
    """Received power in watts from one station at every grid node."""
    dx = grid.nodes_x - positions[station, 0]
    dy = grid.nodes_y - positions[station, 1]
    d = np.hypot(dx, dy)
    np.maximum(d, pathloss.min_distance_km, out=d)
    d *= pathloss.K
    loss = np.power(d, pathloss.beta, out=d)
    row = np.divide(dbm_to_watts(powers_dbm[station]), loss, out=out)
    if extra_gain is not None:
        row *= extra_gain[station]
    return row


def received_power_matrix(positions, powers_dbm, grid, pathloss: PathLossParams,
                          extra_gain=None) -> np.ndarray:
    """Received power in watts, stations by grid nodes.

    The matrix depends on geometry and the link budget only, never on
    traffic or bandwidth, so one matrix serves a whole traffic sweep and
    every bandwidth probe of the dimensioning search. Rows are assembled
    one station at a time to keep temporaries at O(n_nodes).
    """
    s = positions.shape[0]
    gain = np.empty((s, grid.n_nodes))
    for i in range(s):
        received_power_row(positions, powers_dbm, grid, pathloss, i,
                           extra_gain=extra_gain, out=gain[i])
    return gain
