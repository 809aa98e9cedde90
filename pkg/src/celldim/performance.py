"""Per-cell metrics, the coupled load fixed point, and the mean cell.

A cell with traffic demand rho (bit/s) and critical traffic rho_c (the
harmonic mean of the peak bit-rate over the cell, bit/s) behaves as a
processor-sharing queue:

    load        theta = rho / rho_c
    throughput  r     = max(rho_c - rho, 0)
    users       N     = rho / r            (unbounded at theta >= 1)
    busy prob.  p     = min(theta, 1)

The loads couple through interference: each cell's critical traffic is
computed with every other station transmitting a fraction min(theta, 1)
of the time. solve_loads iterates that system to a fixed point.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import geometry, propagation as prop
from .radio import RateModel
from .units import dbm_to_watts


@dataclass(frozen=True)
class TrafficModel:
    """User arrivals and volumes; only the product (bit/s/km^2) matters downstream."""

    gamma_per_km2_s: float      # user arrivals per km^2 per second
    mean_volume_bits: float     # mean data volume per user

    def __post_init__(self):
        if self.gamma_per_km2_s < 0:
            raise ValueError("arrival intensity must be nonnegative")
        if not self.mean_volume_bits > 0:
            raise ValueError("mean volume must be positive")

    @property
    def density_bps_km2(self) -> float:
        return self.gamma_per_km2_s * self.mean_volume_bits

    @classmethod
    def from_density(cls, density_bps_km2: float) -> "TrafficModel":
        # canonical split: unit volume, the density rides on the arrival rate
        return cls(gamma_per_km2_s=density_bps_km2, mean_volume_bits=1.0)


@dataclass(frozen=True)
class CellMetrics:
    rho: float
    rho_c: float
    r: float
    n_users: float
    theta: float
    p_busy: float


def cell_traffic(density_bps_km2: float, surface_km2: float) -> float:
    """Cell demand: traffic density times cell surface."""
    if density_bps_km2 < 0 or surface_km2 < 0:
        raise ValueError("traffic density and surface must be nonnegative")
    return density_bps_km2 * surface_km2


def critical_traffic(node_rates, node_weights) -> float:
    """Harmonic-mean cell capacity |V| / (sum w/R), bit/s.

    Any node with zero rate collapses the harmonic mean; that is
    reported as 0.0 rather than raised.
    """
    rates = np.asarray(node_rates, dtype=float)
    w = np.broadcast_to(np.asarray(node_weights, dtype=float), rates.shape)
    if np.any(rates < 0):
        raise ValueError("rates must be nonnegative")
    if np.any(rates == 0):
        return 0.0
    return w.sum() / float(np.sum(w / rates))


def cell_metrics(rho: float, rho_c: float) -> CellMetrics:
    """Stationary processor-sharing metrics of one cell."""
    if rho < 0 or rho_c < 0:
        raise ValueError("rho and rho_c must be nonnegative")
    if rho == 0:
        return CellMetrics(rho=0.0, rho_c=rho_c, r=rho_c, n_users=0.0,
                           theta=0.0, p_busy=0.0)
    theta = rho / rho_c if rho_c > 0 else math.inf
    r = max(rho_c - rho, 0.0)
    n_users = rho / r if r > 0 else math.inf
    return CellMetrics(rho=rho, rho_c=rho_c, r=r, n_users=n_users,
                       theta=theta, p_busy=min(theta, 1.0))


@dataclass(frozen=True)
class SolverConfig:
    """Fixed-point iteration controls for the coupled loads."""

    tol: float = 1e-4
    max_iter: int = 200
    damping: float = 1.0
    init: str = "all-one"

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if not self.max_iter >= 1:
            raise ValueError("max_iter must be at least 1")
        if not (0 < self.damping <= 1):
            raise ValueError("damping must lie in (0, 1]")
        if self.init not in ("all-one", "all-zero"):
            raise ValueError(f"unknown init {self.init!r}")


@dataclass
class PreparedNetwork:
    """Immutable per-realization bundle: partition plus received powers.

    gain_w is the (S, N) received-power matrix in watts; serving_gain_w
    gathers each node's serving entry. Everything here is independent of
    traffic and bandwidth.
    """

    deployment: geometry.Deployment
    grid: geometry.EvalGrid
    partition: geometry.CellPartition
    gain_w: np.ndarray
    serving_gain_w: np.ndarray
    interior: np.ndarray


def prepare_network(deployment, model: "prop.PropagationModel", grid,
                    guard_km=None, extra_gain=None) -> PreparedNetwork:
    """Build the received-power matrix, the partition, and the interior set."""
    powers = model.station_powers_dbm(deployment)
    gain = prop.received_power_matrix(deployment.positions, powers, grid,
                                      model.pathloss, extra_gain=extra_gain)
    partition = geometry.assign_cells(deployment, model, grid, power_matrix=gain)
    serving = partition.serving_index
    serving_gain = gain[serving, np.arange(grid.n_nodes)]
    interior = geometry.interior_cells(deployment, guard_km)
    return PreparedNetwork(deployment, grid, partition, gain, serving_gain, interior)


@dataclass
class LoadSolution:
    load: np.ndarray                 # theta per cell
    inv_rate_integral: np.ndarray    # integral over each cell of 1/R, km^2 s/bit
    converged: bool
    iterations: int
    residual: float
    iterates: list = field(default=None, repr=False)


def _sweep(prepared: PreparedNetwork, rate_model: RateModel, noise_w: float,
           density_bps_km2: float, phi: np.ndarray):
    """One Jacobi sweep: every cell re-integrated against the previous loads."""
    gain = prepared.gain_w
    serving = prepared.partition.serving_index
    # total received power with activity weights, then remove the serving term
    total = np.einsum("sn,s->n", gain, phi, optimize=False)
    interference = total - phi[serving] * prepared.serving_gain_w
    with np.errstate(divide="ignore"):
        sinr = prepared.serving_gain_w / (noise_w + interference)
        rates = rate_model.rate(sinr)
        inv = prepared.grid.node_weight_km2 / rates
    integral = np.bincount(serving, weights=inv,
                           minlength=prepared.deployment.n_stations)
    return density_bps_km2 * integral, integral


def solve_loads(prepared: PreparedNetwork, rate_model: RateModel, noise_w: float,
                density_bps_km2: float, solver: SolverConfig = SolverConfig(),
                record_iterates: bool = False) -> LoadSolution:
    """Iterate the coupled load system to a fixed point.

    Each sweep recomputes every cell's load with the other cells'
    clamped loads min(theta, 1) from the previous sweep (Jacobi order,
    part of the determinism contract). Stops when the sup-norm residual
    |F(theta) - theta| drops below tol. Non-convergence is returned
    flagged, never raised. From the all-one start the clamped map makes
    the iterates monotone nonincreasing; if the residual ever grows the
    damping drops to 0.5 as a safeguard against oscillation.
    """
    if noise_w < 0:
        raise ValueError("noise power must be nonnegative")
    if density_bps_km2 < 0:
        raise ValueError("traffic density must be nonnegative")
    s = prepared.deployment.n_stations
    theta = np.ones(s) if solver.init == "all-one" else np.zeros(s)
    damping = solver.damping
    iterates = [] if record_iterates else None
    integral = np.zeros(s)
    residual = math.inf
    converged = False
    iterations = 0
    prev_residual = math.inf
    for iterations in range(1, solver.max_iter + 1):
        phi = np.minimum(theta, 1.0)
        theta_new, integral = _sweep(prepared, rate_model, noise_w,
                                     density_bps_km2, phi)
        residual = float(np.max(np.abs(theta_new - theta)))
        theta = theta + damping * (theta_new - theta)
        if record_iterates:
            iterates.append(theta.copy())
        if residual < solver.tol:
            converged = True
            break
        if residual > prev_residual and damping == 1.0:
            damping = 0.5
        prev_residual = residual
    return LoadSolution(load=theta, inv_rate_integral=integral,
                        converged=converged, iterations=iterations,
                        residual=residual, iterates=iterates)


@dataclass(frozen=True)
class MeanCell:
    """Network-average cell; derived fields follow the per-cell formulas."""

    rho_bar: float
    theta_bar: float
    rho_c_bar: float
    r_bar: float
    n_bar: float


def mean_cell_from_cells(surfaces_km2, loads, inv_rate_integrals,
                         density_bps_km2: float) -> MeanCell:
    """Mean cell from pooled per-cell arrays (one or many realizations).

    rho_bar and theta_bar are unweighted means over the given cells;
    rho_c_bar = rho_bar / theta_bar, which at zero traffic reduces to
    the exact ratio mean(|V|) / mean(integral 1/R), the capacity of the
    interference-free network.
    """
    surf = np.asarray(surfaces_km2, dtype=float)
    load = np.asarray(loads, dtype=float)
    integ = np.asarray(inv_rate_integrals, dtype=float)
    if surf.size == 0:
        raise ValueError("mean cell needs at least one cell")
    rho_bar = density_bps_km2 * float(surf.mean())
    theta_bar = float(load.mean())
    if theta_bar == 0 and rho_bar > 0:
        raise ValueError("zero mean load with positive traffic is inconsistent")
    if theta_bar > 0:
        rho_c_bar = rho_bar / theta_bar
    else:
        mean_integral = float(integ.mean())
        rho_c_bar = float(surf.mean()) / mean_integral if mean_integral > 0 else math.inf
    r_bar = max(rho_c_bar - rho_bar, 0.0)
    if rho_bar == 0:
        n_bar = 0.0
    else:
        n_bar = rho_bar / r_bar if r_bar > 0 else math.inf
    return MeanCell(rho_bar=rho_bar, theta_bar=theta_bar, rho_c_bar=rho_c_bar,
                    r_bar=r_bar, n_bar=n_bar)


def network_average(prepared: PreparedNetwork, solution: LoadSolution,
                    density_bps_km2: float) -> MeanCell:
    """Mean cell over the interior cells of one solved network."""
    idx = prepared.interior
    return mean_cell_from_cells(prepared.partition.surface_km2[idx],
                                solution.load[idx],
                                solution.inv_rate_integral[idx],
                                density_bps_km2)


@dataclass(frozen=True)
class MeanCellConfig:
    """Monte Carlo controls for the scalar mean-cell equation."""

    samples: int = 10000
    window_factor: float = 30.0   # window side = window_factor / sqrt(intensity)
    tol: float = 1e-6
    max_iter: int = 500
    damping: float = 1.0

    def __post_init__(self):
        if not self.samples >= 1:
            raise ValueError("samples must be at least 1")
        if not self.window_factor > 0:
            raise ValueError("window_factor must be positive")
        if not (self.tol > 0 and self.max_iter >= 1 and 0 < self.damping <= 1):
            raise ValueError("invalid scalar-iteration controls")


def mean_cell_analytic(intensity: float, density_bps_km2: float,
                       model: "prop.PropagationModel", rate_model: RateModel,
                       noise_w: float, config: MeanCellConfig = MeanCellConfig(),
                       seed=None, station_sampler=None):
    """Scalar mean-load equation solved by Monte Carlo over fresh networks.

    The mean load solves

        theta_bar = (density / intensity) * E[ 1 / R(SINR at the origin) ]

    where the expectation runs over network realizations, the origin is
    served by its strongest station, and every interferer is weighted by
    min(theta_bar, 1). Realizations are drawn once and frozen across the
    scalar iterations (common random numbers), so the iteration is a
    deterministic 1-d fixed point. station_sampler(rng) -> (positions,
    powers_dbm or None) replaces the Poisson draw when given.

    Returns (MeanCell, info dict with converged/iterations/residual).
    """
    if not intensity > 0:
        raise ValueError("intensity must be positive")
    if noise_w < 0:
        raise ValueError("noise power must be nonnegative")
    side = config.window_factor / math.sqrt(intensity)
    window = geometry.Window(side)
    root = np.random.SeedSequence(seed)
    shadow_on = model.shadowing.mode != "off" and model.shadowing.sigma_db > 0
    g_serve = np.empty(config.samples)
    g_total = np.empty(config.samples)
    for m, child in enumerate(root.spawn(config.samples)):
        rng = np.random.default_rng(child)
        if station_sampler is not None:
            positions, powers = station_sampler(rng)
            positions = np.atleast_2d(np.asarray(positions, dtype=float))
            if powers is None:
                powers = np.full(positions.shape[0], model.link.tx_power_dbm)
        else:
            mean = intensity * window.area_km2
            n = 0
            while n == 0:
                n = int(rng.poisson(mean))
            positions = rng.uniform((-side / 2, -side / 2), (side / 2, side / 2),
                                    size=(n, 2))
            powers = np.full(n, model.link.tx_power_dbm)
        d = np.hypot(positions[:, 0], positions[:, 1])
        gains = dbm_to_watts(powers) / prop.path_loss(model.pathloss, d)
        if shadow_on:
            # one lognormal draw per station: the single-point marginal of the field
            z = rng.standard_normal(positions.shape[0])
            db = model.shadowing.sigma_db * z + prop.unit_mean_mu_db(model.shadowing.sigma_db)
            gains = gains * 10.0 ** (db / 10.0)
        if model.antenna.mode == "trisector":
            g_ant = np.array([prop.antenna_gain(model.antenna, positions[i],
                                                np.zeros(1), np.zeros(1))[0]
                              for i in range(positions.shape[0])])
            gains = gains * g_ant
        serve = int(np.argmax(gains))
        g_serve[m] = gains[serve]
        g_total[m] = gains.sum()
    other = g_total - g_serve

    rho_bar = density_bps_km2 / intensity
    theta_bar = 1.0
    converged = False
    residual = math.inf
    iterations = 0
    for iterations in range(1, config.max_iter + 1):
        phi = min(theta_bar, 1.0)
        sinr = g_serve / (noise_w + phi * other)
        new = rho_bar * float(np.mean(1.0 / rate_model.rate(sinr)))
        residual = abs(new - theta_bar)
        theta_bar = theta_bar + config.damping * (new - theta_bar)
        if residual < config.tol:
            converged = True
            break
    if theta_bar > 0:
        rho_c_bar = rho_bar / theta_bar
    else:
        # zero traffic: capacity of the interference-free network
        sinr = g_serve / noise_w if noise_w > 0 else np.full_like(g_serve, math.inf)
        rho_c_bar = 1.0 / float(np.mean(1.0 / rate_model.rate(sinr)))
    r_bar = max(rho_c_bar - rho_bar, 0.0)
    if rho_bar == 0:
        n_bar = 0.0
    else:
        n_bar = rho_bar / r_bar if r_bar > 0 else math.inf
    mean_cell = MeanCell(rho_bar=rho_bar, theta_bar=theta_bar,
                         rho_c_bar=rho_c_bar, r_bar=r_bar, n_bar=n_bar)
    info = {"converged": converged, "iterations": iterations, "residual": residual}
    return mean_cell, info
