"""Network dilation and QoS-homogeneous composite networks.

Dilating a network by alpha (positions, window and grid scaled by
alpha) while dividing the traffic density by alpha^2 and the distance
coefficient by alpha leaves every per-cell metric unchanged: each cell
surface grows by alpha^2, each cell demand is invariant, and every
link's path loss is invariant because (K/alpha) * (alpha*d) = K*d.
Carrying the realized shadow/antenna gains node-for-node makes the
identity hold to floating round-off on the shared lattice.

The same invariance makes zone types interchangeable: zones whose
distance coefficient times station spacing (K * D) is constant serve
the same per-cell traffic with the same user throughput.
"""

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from . import geometry, performance, propagation as prop
from .radio import RateModel


@dataclass(frozen=True)
class ScalingTransform:
    alpha: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")


@dataclass
class NetworkBundle:
    """One network plus the pieces the dilation acts on."""

    deployment: geometry.Deployment
    grid: geometry.EvalGrid
    pathloss: prop.PathLossParams
    density_bps_km2: float
    extra_gain: np.ndarray = None   # realized shadow/antenna gains, (S, N) or None


def rescale(bundle: NetworkBundle, alpha: float) -> NetworkBundle:
    """Dilate a bundle: positions, window, grid and the near-field clamp
    scale by alpha; K by 1/alpha; traffic density by 1/alpha^2; powers
    and beta unchanged. The realized extra-gain matrix is carried over
    node-for-node, which is exactly the dilated shadowing field (and
    freezes antenna elevation gains, since mast heights do not scale).
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    if alpha == 1.0:
        return NetworkBundle(bundle.deployment, bundle.grid, bundle.pathloss,
                             bundle.density_bps_km2, bundle.extra_gain)
    pl = dataclasses.replace(bundle.pathloss, K=bundle.pathloss.K / alpha,
                             min_distance_km=bundle.pathloss.min_distance_km * alpha)
    return NetworkBundle(deployment=bundle.deployment.scaled(alpha),
                         grid=bundle.grid.scaled(alpha),
                         pathloss=pl,
                         density_bps_km2=bundle.density_bps_km2 / (alpha * alpha),
                         extra_gain=bundle.extra_gain)


@dataclass
class ScalingReport:
    """Per-alpha deviations between the original and rescaled solves."""

    alpha: float
    max_rel_theta: float
    max_rel_rho_c: float
    max_rel_r: float
    max_rel_n_users: float
    partition_mismatches: int
    overload_flags_equal: bool
    iterations: tuple
    converged: tuple

    @property
    def max_rel_deviation(self) -> float:
        return max(self.max_rel_theta, self.max_rel_rho_c,
                   self.max_rel_r, self.max_rel_n_users)


def _solve_cells(bundle: NetworkBundle, model, rate_model, noise_w, solver):
    # the bundle's path loss is authoritative; the model supplies the rest
    model_b = dataclasses.replace(model, pathloss=bundle.pathloss)
    prepared = performance.prepare_network(bundle.deployment, model_b, bundle.grid,
                                           extra_gain=bundle.extra_gain)
    solution = performance.solve_loads(prepared, rate_model, noise_w,
                                       bundle.density_bps_km2, solver)
    idx = prepared.interior
    surf = prepared.partition.surface_km2
    demand = bundle.density_bps_km2 * surf
    with np.errstate(divide="ignore", invalid="ignore"):
        rho_c = np.where(solution.inv_rate_integral > 0,
                         surf / solution.inv_rate_integral, np.inf)
    r = np.maximum(rho_c - demand, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        n_users = np.where(r > 0, demand / r, np.inf)
        n_users = np.where(demand == 0, 0.0, n_users)
    cells = {
        "theta": solution.load[idx],
        "rho_c": rho_c[idx],
        "r": r[idx],
        "n_users": n_users[idx],
    }
    return cells, prepared.partition.serving_index.copy(), solution


def _max_rel(a: np.ndarray, b: np.ndarray) -> float:
    """Max relative deviation; infinities must match, 0 vs 0 counts as 0."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    inf_a, inf_b = np.isinf(a), np.isinf(b)
    if np.any(inf_a != inf_b):
        return np.inf
    fin = ~inf_a
    denom = np.maximum(np.maximum(np.abs(a[fin]), np.abs(b[fin])), 1e-300)
    dev = np.abs(a[fin] - b[fin]) / denom
    both_zero = (a[fin] == 0) & (b[fin] == 0)
    dev[both_zero] = 0.0
    return float(dev.max()) if dev.size else 0.0


def verify_scaling(bundle: NetworkBundle, model: "prop.PropagationModel",
                   rate_model: RateModel, noise_w: float, alphas,
                   solver: performance.SolverConfig = performance.SolverConfig()):
    """Solve the original and each dilation, compare per-cell metrics.

    Station order is preserved by the dilation, so cells correspond by
    index. The two solves of each pair run sequentially and the original
    network's matrix is released before the dilated one is built, so
    peak memory stays at one received-power matrix. Returns one
    ScalingReport per alpha (or a single report for a scalar alpha).
    """
    scalar = np.isscalar(alphas)
    alpha_list = [float(alphas)] if scalar else [float(a) for a in alphas]
    base_cells, base_serving, base_sol = _solve_cells(bundle, model, rate_model,
                                                      noise_w, solver)
    reports = []
    for alpha in alpha_list:
        scaled_bundle = rescale(bundle, alpha)
        cells, serving, sol = _solve_cells(scaled_bundle, model, rate_model,
                                           noise_w, solver)
        overload_a = ~np.isfinite(base_cells["n_users"])
        overload_b = ~np.isfinite(cells["n_users"])
        reports.append(ScalingReport(
            alpha=alpha,
            max_rel_theta=_max_rel(base_cells["theta"], cells["theta"]),
            max_rel_rho_c=_max_rel(base_cells["rho_c"], cells["rho_c"]),
            max_rel_r=_max_rel(base_cells["r"], cells["r"]),
            max_rel_n_users=_max_rel(base_cells["n_users"], cells["n_users"]),
            partition_mismatches=int(np.count_nonzero(base_serving != serving)),
            overload_flags_equal=bool(np.array_equal(overload_a, overload_b)),
            iterations=(base_sol.iterations, sol.iterations),
            converged=(base_sol.converged, sol.converged),
        ))
        del scaled_bundle, cells, serving, sol
    return reports[0] if scalar else reports


@dataclass(frozen=True)
class ZoneSpec:
    """One zone type: its path loss and target station spacing D.

    The intensity follows from the spacing as 1/D^2. Zones of one
    composite should keep K * D constant; the spread is checked against
    a declared tolerance and reported, not enforced.
    """

    name: str
    pathloss: prop.PathLossParams
    spacing_km: float

    def __post_init__(self):
        if not self.spacing_km > 0:
            raise ValueError("spacing must be positive")

    @property
    def intensity(self) -> float:
        return 1.0 / (self.spacing_km * self.spacing_km)

    @property
    def kd_product(self) -> float:
        return self.pathloss.K * self.spacing_km

    @classmethod
    def from_cost_hata(cls, name, a_db, b_db, spacing_km,
                       min_distance_km=0.01) -> "ZoneSpec":
        pl = prop.params_from_cost_hata(prop.CostHataZone(a_db, b_db),
                                        min_distance_km)
        return cls(name=name, pathloss=pl, spacing_km=spacing_km)

    @classmethod
    def rescaled(cls, base: "ZoneSpec", spacing_km, name=None) -> "ZoneSpec":
        """Exact K*D-preserving variant of a zone: K scales as D_base/D."""
        ratio = spacing_km / base.spacing_km
        pl = dataclasses.replace(base.pathloss, K=base.pathloss.K / ratio,
                                 min_distance_km=base.pathloss.min_distance_km * ratio)
        return cls(name=name or f"{base.name}-x{ratio:g}", pathloss=pl,
                   spacing_km=spacing_km)


def kd_spread(zones) -> float:
    """Max relative deviation of the K*D products from their mean."""
    products = np.array([z.kd_product for z in zones], dtype=float)
    return float(np.max(np.abs(products - products.mean())) / products.mean())


@dataclass
class ZoneCurve:
    zone: str
    rho_bar_bps: np.ndarray
    theta_bar: np.ndarray
    rho_c_bar_bps: np.ndarray
    r_bar_bps: np.ndarray
    n_bar: np.ndarray
    converged: np.ndarray


@dataclass
class CompositeResult:
    zones: list
    traffic_per_cell_bps: np.ndarray
    curves: dict                    # zone name -> ZoneCurve
    gaps: dict
    warnings: list = field(default_factory=list)


def build_composite(zones, model_base: "prop.PropagationModel",
                    rate_model: RateModel, noise_w: float,
                    traffic_per_cell_bps, base_window: geometry.Window,
                    base_resolution_m: float, realizations: int = 1, seed=None,
                    solver: performance.SolverConfig = performance.SolverConfig(),
                    kd_tolerance: float = 0.10, workers: int = 1) -> CompositeResult:
    """Run each zone as an independent homogeneous network on a shared
    per-cell traffic axis.

    base_window and base_resolution_m describe the unit-spacing (D = 1)
    geometry; each zone's window, guard and grid scale with its spacing
    so every cell holds a comparable node count. Zones violating the
    K*D constancy tolerance are recorded as warnings and still run.
    """
    axis = np.asarray(traffic_per_cell_bps, dtype=float)
    if axis.ndim != 1 or axis.size == 0:
        raise ValueError("traffic axis must be a nonempty 1-d sequence")
    if np.any(np.diff(axis) <= 0) and axis.size > 1:
        raise ValueError("traffic axis must be strictly increasing")
    warnings = []
    if len(zones) >= 2:
        spread = kd_spread(zones)
        if spread > kd_tolerance:
            warnings.append(f"K*D spread {spread:.3f} exceeds tolerance "
                            f"{kd_tolerance:.3f}; zones are not exactly equivalent")
    root = np.random.SeedSequence(seed)
    zone_seeds = root.spawn(len(zones))
    curves = {}
    for zone, zone_ss in zip(zones, zone_seeds):
        d_ratio = zone.spacing_km  # relative to the unit-spacing base
        window = base_window.scaled(d_ratio)
        grid = geometry.EvalGrid(window, base_resolution_m * d_ratio)
        model = dataclasses.replace(model_base, pathloss=zone.pathloss)
        density_axis = axis * zone.intensity
        pools = _pooled_sweep(zone.intensity, window, grid, model, rate_model,
                              noise_w, density_axis, realizations, zone_ss,
                              solver, workers)
        curves[zone.name] = ZoneCurve(zone=zone.name, **pools)
    gaps = qos_homogeneity(curves)
    return CompositeResult(zones=list(zones), traffic_per_cell_bps=axis,
                           curves=curves, gaps=gaps, warnings=warnings)


def _pooled_sweep(intensity, window, grid, model, rate_model, noise_w,
                  density_axis, realizations, seed_seq, solver, workers=1):
    """Sweep one homogeneous network over a traffic axis, pooling interior
    cells across realizations before averaging."""
    from .experiments import sweep_realizations  # local import, no cycle at module load
    pools = sweep_realizations(intensity, window, grid, model, rate_model,
                               noise_w, density_axis, realizations, seed_seq,
                               solver, workers=workers)
    keys = ("rho_bar_bps", "theta_bar", "rho_c_bar_bps", "r_bar_bps",
            "n_bar", "converged")
    return {k: pools[k] for k in keys}


def qos_homogeneity(curves: dict) -> dict:
    """Max relative spread of the mean-cell curves across zones.

    For every traffic point the spread is (max - min)/mean across zones,
    for the user throughput r_bar and the load theta_bar. Points where a
    metric vanishes in every zone contribute zero; points where the
    throughput has collapsed to zero in some zone but not all are
    counted at full spread.
    """
    if len(curves) < 2:
        return {"r_bar_gap": 0.0, "theta_bar_gap": 0.0, "per_point": {}}
    names = sorted(curves)
    r = np.stack([np.asarray(curves[n].r_bar_bps, dtype=float) for n in names])
    t = np.stack([np.asarray(curves[n].theta_bar, dtype=float) for n in names])

    def spread(values):
        mean = values.mean(axis=0)
        span = values.max(axis=0) - values.min(axis=0)
        out = np.zeros(values.shape[1])
        ok = mean > 0
        out[ok] = span[ok] / mean[ok]
        return out

    r_spread = spread(r)
    t_spread = spread(t)
    return {
        "r_bar_gap": float(r_spread.max()),
        "theta_bar_gap": float(t_spread.max()),
        "per_point": {"r_bar": r_spread.tolist(), "theta_bar": t_spread.tolist()},
    }
