"""Scenario files: one TOML document drives every experiment.

Parsing is strict: unknown sections or keys abort before any
computation, as do out-of-range values. Exactly one of the COST-Hata
(A, B) and direct (K, beta) path-loss forms must be given, and exactly
one of the per-cell / per-area traffic axes.
"""

import math
from dataclasses import dataclass, field

try:
    import tomllib
except ImportError:          # Python 3.10
    import tomli as tomllib

import numpy as np

from . import geometry, propagation as prop, scaling
from .performance import MeanCellConfig, SolverConfig
from .radio import RateModel


class ConfigError(Exception):
    """Invalid scenario file."""


_SECTIONS = {
    "experiment": {"kind", "seed", "realizations", "basename", "kd_tolerance"},
    "geometry": {"window_km", "guard_km", "resolution_m", "intensity_per_km2",
                 "seed", "deterministic_positions"},
    "pathloss": {"A", "B", "K", "beta", "min_distance_km", "f0_GHz"},
    "shadowing": {"mode", "sigma_dB", "corr_dist_m", "seed"},
    "antenna": {"mode", "az_beamwidth_deg", "el_beamwidth_deg",
                "front_back_limit_dB", "side_lobe_limit_dB", "max_gain_dBi",
                "downtilt_deg", "bs_height_m", "ue_height_m", "sector_azimuths_deg"},
    "link": {"tx_power_dBm", "pilot_fraction", "noise_figure_dB", "select_on_pilot"},
    "rate": {"technology", "bandwidth_MHz", "efficiency", "a", "b"},
    "traffic": {"rho_bar_kbps", "rho_kbps_per_km2"},
    "solver": {"tol", "max_iter", "damping", "init"},
    "meancell": {"mc_samples", "window_factor"},
    "scaling": {"alphas", "fresh_seed_mode"},
    "zones": {"name", "spacing_km", "A", "B", "K", "beta", "rescale_of"},
    "dimension": {"target_mbps", "w_min_MHz", "w_max_MHz", "tol_MHz", "variants"},
    "dimension.variants": {"name", "spacing_km", "carrier_GHz", "K", "tx_power_dBm"},
}

_KINDS = ("sweep", "scale-check", "composite", "dimension")


def _reject_unknown(table: dict, section: str):
    allowed = _SECTIONS[section]
    for key in table:
        if key not in allowed:
            raise ConfigError(f"[{section}] unknown key {key!r}")


def _get(table: dict, section: str, key: str, types, default=None, check=None):
    if key not in table:
        return default
    value = table[key]
    if types is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if not isinstance(value, types):
        raise ConfigError(f"[{section}] {key} has wrong type {type(value).__name__}")
    if check is not None and not check(value):
        raise ConfigError(f"[{section}] {key} = {value!r} is out of range")
    return value


def _float_list(table, section, key, check=None):
    raw = table.get(key)
    if raw is None:
        return None
    if not isinstance(raw, list) or not raw:
        raise ConfigError(f"[{section}] {key} must be a nonempty array")
    out = []
    for v in raw:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"[{section}] {key} must contain numbers")
        out.append(float(v))
    if check is not None and not check(out):
        raise ConfigError(f"[{section}] {key} = {raw!r} is out of range")
    return out


@dataclass(frozen=True)
class DimensionVariant:
    name: str
    spacing_km: float
    carrier_ghz: float = None
    k_per_km: float = None
    tx_power_dbm: float = None


@dataclass(frozen=True)
class DimensionRequest:
    """Bandwidth search: minimal W meeting a mean-throughput target."""

    target_bps: float = 5e6
    w_min_hz: float = 1e6
    w_max_hz: float = 100e6
    tol_hz: float = 0.1e6
    variants: tuple = ()

    def __post_init__(self):
        if not self.target_bps > 0:
            raise ConfigError("dimension target must be positive")
        if not (0 < self.w_min_hz < self.w_max_hz):
            raise ConfigError("bandwidth range must satisfy 0 < w_min < w_max")
        if not self.tol_hz > 0:
            raise ConfigError("bandwidth tolerance must be positive")
        if not self.variants:
            raise ConfigError("dimension needs at least one variant")


@dataclass
class Scenario:
    """Parsed scenario; builder methods assemble the model objects."""

    kind: str
    seed: int
    realizations: int
    basename: str
    kd_tolerance: float
    window_km: tuple
    guard_km: float          # None -> 3/sqrt(intensity) at build time
    resolution_m: float
    intensity_per_km2: float
    geometry_seed: int
    deterministic_positions: np.ndarray
    pathloss: prop.PathLossParams
    f0_ghz: float
    shadowing: prop.ShadowingConfig
    antenna: prop.AntennaConfig
    link: prop.LinkParams
    rate: RateModel
    traffic_mode: str        # 'per_cell' or 'density'
    traffic_values_kbps: tuple
    solver: SolverConfig
    meancell: MeanCellConfig
    scaling_alphas: tuple
    fresh_seed_mode: bool
    zones: tuple = ()
    dimension: DimensionRequest = None
    path: str = None

    def model(self, pathloss=None) -> prop.PropagationModel:
        return prop.PropagationModel(pathloss=pathloss or self.pathloss,
                                     shadowing=self.shadowing,
                                     antenna=self.antenna, link=self.link)

    def noise_w(self, bandwidth_hz=None) -> float:
        dbm = prop.noise_power_dbm(bandwidth_hz or self.rate.bandwidth_hz,
                                   self.link.noise_figure_db)
        return 10.0 ** ((dbm - 30.0) / 10.0)

    def resolved_guard_km(self, intensity=None) -> float:
        if self.guard_km is not None:
            return self.guard_km
        lam = intensity if intensity is not None else self.intensity_per_km2
        if lam is None:
            raise ConfigError("guard_km must be set when no intensity is given")
        return 3.0 / math.sqrt(lam)

    def window(self, intensity=None) -> geometry.Window:
        w, h = self.window_km
        return geometry.Window(w, h, self.resolved_guard_km(intensity))

    def grid(self, window=None) -> geometry.EvalGrid:
        return geometry.EvalGrid(window or self.window(), self.resolution_m)

    def traffic_densities(self, intensity: float) -> np.ndarray:
        """Traffic axis as surface densities, bit/s/km^2."""
        values = np.asarray(self.traffic_values_kbps, dtype=float) * 1000.0
        if self.traffic_mode == "per_cell":
            return values * intensity
        return values

    def per_cell_axis_bps(self) -> np.ndarray:
        if self.traffic_mode != "per_cell":
            raise ConfigError("this experiment needs the per-cell traffic axis "
                              "(traffic.rho_bar_kbps)")
        return np.asarray(self.traffic_values_kbps, dtype=float) * 1000.0

    def zone_specs(self) -> list:
        if not self.zones:
            raise ConfigError("no [[zones]] defined")
        return list(self.zones)


def _parse_pathloss(table: dict) -> tuple:
    _reject_unknown(table, "pathloss")
    has_cost = "A" in table or "B" in table
    has_direct = "K" in table or "beta" in table
    if has_cost == has_direct:
        raise ConfigError("[pathloss] give exactly one of (A, B) or (K, beta)")
    dmin = _get(table, "pathloss", "min_distance_km", float, 0.01, lambda v: v >= 0)
    f0 = _get(table, "pathloss", "f0_GHz", float, None, lambda v: v > 0)
    try:
        if has_cost:
            a = _get(table, "pathloss", "A", float)
            b = _get(table, "pathloss", "B", float)
            if a is None or b is None:
                raise ConfigError("[pathloss] COST-Hata form needs both A and B")
            params = prop.params_from_cost_hata(prop.CostHataZone(a, b), dmin)
        else:
            k = _get(table, "pathloss", "K", float)
            beta = _get(table, "pathloss", "beta", float)
            if k is None or beta is None:
                raise ConfigError("[pathloss] direct form needs both K and beta")
            params = prop.PathLossParams(K=k, beta=beta, min_distance_km=dmin)
    except ValueError as err:
        raise ConfigError(f"[pathloss] {err}") from err
    return params, f0


def _parse_zone(table: dict, index: int, earlier: dict, dmin: float) -> scaling.ZoneSpec:
    _reject_unknown(table, "zones")
    name = _get(table, "zones", "name", str)
    spacing = _get(table, "zones", "spacing_km", float, None, lambda v: v > 0)
    if name is None or spacing is None:
        raise ConfigError(f"[[zones]] entry {index} needs name and spacing_km")
    base = _get(table, "zones", "rescale_of", str)
    try:
        if base is not None:
            if base not in earlier:
                raise ConfigError(f"[[zones]] {name}: rescale_of {base!r} is not "
                                  "an earlier zone")
            return scaling.ZoneSpec.rescaled(earlier[base], spacing, name=name)
        if "A" in table or "B" in table:
            a = _get(table, "zones", "A", float)
            b = _get(table, "zones", "B", float)
            if a is None or b is None:
                raise ConfigError(f"[[zones]] {name} needs both A and B")
            return scaling.ZoneSpec.from_cost_hata(name, a, b, spacing, dmin)
        k = _get(table, "zones", "K", float)
        beta = _get(table, "zones", "beta", float)
        if k is None or beta is None:
            raise ConfigError(f"[[zones]] {name} needs (A, B), (K, beta), "
                              "or rescale_of")
        return scaling.ZoneSpec(name, prop.PathLossParams(k, beta, dmin), spacing)
    except ValueError as err:
        raise ConfigError(f"[[zones]] {name}: {err}") from err


def parse_scenario(doc: dict, path: str = None) -> Scenario:
    for section in doc:
        if section not in _SECTIONS or section == "dimension.variants":
            raise ConfigError(f"unknown section [{section}]")

    exp = doc.get("experiment", {})
    _reject_unknown(exp, "experiment")
    kind = _get(exp, "experiment", "kind", str, None, lambda v: v in _KINDS)
    seed = _get(exp, "experiment", "seed", int, 0)
    realizations = _get(exp, "experiment", "realizations", int, 1, lambda v: v >= 1)
    basename = _get(exp, "experiment", "basename", str, None)
    kd_tolerance = _get(exp, "experiment", "kd_tolerance", float, 0.10, lambda v: v > 0)

    geo = doc.get("geometry", {})
    _reject_unknown(geo, "geometry")
    raw_window = geo.get("window_km")
    if raw_window is None:
        raise ConfigError("[geometry] window_km is required")
    if isinstance(raw_window, list):
        sides = _float_list(geo, "geometry", "window_km",
                            lambda v: len(v) == 2 and min(v) > 0)
        window_km = (sides[0], sides[1])
    else:
        w = _get(geo, "geometry", "window_km", float, None, lambda v: v > 0)
        window_km = (w, w)
    guard = _get(geo, "geometry", "guard_km", float, None, lambda v: v >= 0)
    resolution = _get(geo, "geometry", "resolution_m", float, 50.0, lambda v: v > 0)
    intensity = _get(geo, "geometry", "intensity_per_km2", float, None, lambda v: v > 0)
    geometry_seed = _get(geo, "geometry", "seed", int, None)
    det = geo.get("deterministic_positions")
    positions = None
    if det is not None:
        if (not isinstance(det, list) or not det
                or not all(isinstance(p, list) and len(p) == 2 for p in det)):
            raise ConfigError("[geometry] deterministic_positions must be "
                              "an array of [x, y] pairs")
        positions = np.asarray(det, dtype=float)
    # composite and dimension runs derive intensity from zone / variant
    # spacing, so a missing intensity is only rejected by the runners
    # that need one

    if "pathloss" not in doc:
        raise ConfigError("[pathloss] section is required")
    pathloss, f0 = _parse_pathloss(doc["pathloss"])

    sh = doc.get("shadowing", {})
    _reject_unknown(sh, "shadowing")
    try:
        shadowing = prop.ShadowingConfig(
            mode=_get(sh, "shadowing", "mode", str, "off"),
            sigma_db=_get(sh, "shadowing", "sigma_dB", float, 9.6),
            corr_dist_m=_get(sh, "shadowing", "corr_dist_m", float, 50.0),
            seed=_get(sh, "shadowing", "seed", int, 0))
    except ValueError as err:
        raise ConfigError(f"[shadowing] {err}") from err

    ant = doc.get("antenna", {})
    _reject_unknown(ant, "antenna")
    sector_az = _float_list(ant, "antenna", "sector_azimuths_deg",
                            lambda v: len(v) == 3)
    try:
        antenna = prop.AntennaConfig(
            mode=_get(ant, "antenna", "mode", str, "omni"),
            az_beamwidth_deg=_get(ant, "antenna", "az_beamwidth_deg", float, 70.0),
            el_beamwidth_deg=_get(ant, "antenna", "el_beamwidth_deg", float, 10.0),
            front_back_limit_db=_get(ant, "antenna", "front_back_limit_dB", float, 25.0),
            side_lobe_limit_db=_get(ant, "antenna", "side_lobe_limit_dB", float, 20.0),
            max_gain_dbi=_get(ant, "antenna", "max_gain_dBi", float, 14.0),
            downtilt_deg=_get(ant, "antenna", "downtilt_deg", float, 0.0),
            bs_height_m=_get(ant, "antenna", "bs_height_m", float, 30.0),
            ue_height_m=_get(ant, "antenna", "ue_height_m", float, 1.5),
            sector_azimuths_deg=tuple(sector_az) if sector_az else (0.0, 120.0, 240.0))
    except ValueError as err:
        raise ConfigError(f"[antenna] {err}") from err

    ln = doc.get("link", {})
    _reject_unknown(ln, "link")
    try:
        link = prop.LinkParams(
            tx_power_dbm=_get(ln, "link", "tx_power_dBm", float, 60.0),
            pilot_fraction=_get(ln, "link", "pilot_fraction", float, 0.1),
            noise_figure_db=_get(ln, "link", "noise_figure_dB", float, 11.0),
            select_on_pilot=_get(ln, "link", "select_on_pilot", bool, True))
    except ValueError as err:
        raise ConfigError(f"[link] {err}") from err

    rt = doc.get("rate", {})
    _reject_unknown(rt, "rate")
    bandwidth = _get(rt, "rate", "bandwidth_MHz", float, None, lambda v: v > 0)
    if bandwidth is None:
        raise ConfigError("[rate] bandwidth_MHz is required")
    try:
        rate = RateModel(
            technology=_get(rt, "rate", "technology", str, "4g"),
            bandwidth_hz=bandwidth * 1e6,
            efficiency=_get(rt, "rate", "efficiency", float, 0.3),
            a=_get(rt, "rate", "a", float, 3.0),
            b=_get(rt, "rate", "b", float, 1.12))
    except ValueError as err:
        raise ConfigError(f"[rate] {err}") from err

    tr = doc.get("traffic", {})
    _reject_unknown(tr, "traffic")
    per_cell = _float_list(tr, "traffic", "rho_bar_kbps")
    per_area = _float_list(tr, "traffic", "rho_kbps_per_km2")
    if (per_cell is None) == (per_area is None):
        raise ConfigError("[traffic] give exactly one of rho_bar_kbps or "
                          "rho_kbps_per_km2")
    values = per_cell if per_cell is not None else per_area
    if any(v < 0 for v in values):
        raise ConfigError("[traffic] values must be nonnegative")
    if len(values) > 1 and any(b <= a for a, b in zip(values, values[1:])):
        raise ConfigError("[traffic] values must be strictly increasing")

    sv = doc.get("solver", {})
    _reject_unknown(sv, "solver")
    try:
        solver = SolverConfig(
            tol=_get(sv, "solver", "tol", float, 1e-4),
            max_iter=_get(sv, "solver", "max_iter", int, 200),
            damping=_get(sv, "solver", "damping", float, 1.0),
            init=_get(sv, "solver", "init", str, "all-one"))
    except ValueError as err:
        raise ConfigError(f"[solver] {err}") from err

    mc = doc.get("meancell", {})
    _reject_unknown(mc, "meancell")
    try:
        meancell = MeanCellConfig(
            samples=_get(mc, "meancell", "mc_samples", int, 10000),
            window_factor=_get(mc, "meancell", "window_factor", float, 30.0))
    except ValueError as err:
        raise ConfigError(f"[meancell] {err}") from err

    sc = doc.get("scaling", {})
    _reject_unknown(sc, "scaling")
    alphas = _float_list(sc, "scaling", "alphas", lambda v: min(v) > 0)
    fresh = _get(sc, "scaling", "fresh_seed_mode", bool, False)

    zones = []
    named = {}
    for i, ztab in enumerate(doc.get("zones", [])):
        if not isinstance(ztab, dict):
            raise ConfigError("[[zones]] entries must be tables")
        zone = _parse_zone(ztab, i, named, pathloss.min_distance_km)
        if zone.name in named:
            raise ConfigError(f"[[zones]] duplicate name {zone.name!r}")
        named[zone.name] = zone
        zones.append(zone)

    dimension = None
    if "dimension" in doc:
        dt = doc["dimension"]
        _reject_unknown(dt, "dimension")
        variants = []
        for i, vtab in enumerate(dt.get("variants", [])):
            if not isinstance(vtab, dict):
                raise ConfigError("[[dimension.variants]] entries must be tables")
            _reject_unknown(vtab, "dimension.variants")
            vname = _get(vtab, "dimension.variants", "name", str)
            spacing = _get(vtab, "dimension.variants", "spacing_km", float,
                           None, lambda v: v > 0)
            if vname is None or spacing is None:
                raise ConfigError(f"[[dimension.variants]] entry {i} needs "
                                  "name and spacing_km")
            carrier = _get(vtab, "dimension.variants", "carrier_GHz", float,
                           None, lambda v: v > 0)
            k = _get(vtab, "dimension.variants", "K", float, None, lambda v: v > 0)
            if carrier is not None and f0 is None:
                raise ConfigError("[pathloss] f0_GHz is required to derive "
                                  "variant carriers")
            variants.append(DimensionVariant(
                name=vname, spacing_km=spacing, carrier_ghz=carrier, k_per_km=k,
                tx_power_dbm=_get(vtab, "dimension.variants", "tx_power_dBm", float)))
        dimension = DimensionRequest(
            target_bps=_get(dt, "dimension", "target_mbps", float, 5.0,
                            lambda v: v > 0) * 1e6,
            w_min_hz=_get(dt, "dimension", "w_min_MHz", float, 1.0,
                          lambda v: v > 0) * 1e6,
            w_max_hz=_get(dt, "dimension", "w_max_MHz", float, 100.0,
                          lambda v: v > 0) * 1e6,
            tol_hz=_get(dt, "dimension", "tol_MHz", float, 0.1,
                        lambda v: v > 0) * 1e6,
            variants=tuple(variants))

    return Scenario(kind=kind, seed=seed, realizations=realizations,
                    basename=basename, kd_tolerance=kd_tolerance,
                    window_km=window_km, guard_km=guard, resolution_m=resolution,
                    intensity_per_km2=intensity, geometry_seed=geometry_seed,
                    deterministic_positions=positions, pathloss=pathloss,
                    f0_ghz=f0, shadowing=shadowing, antenna=antenna, link=link,
                    rate=rate, traffic_mode="per_cell" if per_cell else "density",
                    traffic_values_kbps=tuple(values), solver=solver,
                    meancell=meancell,
                    scaling_alphas=tuple(alphas) if alphas else (2.0, 5.0, 8.0),
                    fresh_seed_mode=fresh, zones=tuple(zones),
                    dimension=dimension, path=path)


def load_scenario(path: str) -> Scenario:
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except OSError as err:
        raise ConfigError(f"cannot read scenario file: {err}") from err
    except tomllib.TOMLDecodeError as err:
        raise ConfigError(f"scenario file is not valid TOML: {err}") from err
    return parse_scenario(doc, path=path)
