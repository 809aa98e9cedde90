"""Experiment drivers and output writers behind the command line.

Every run_* function consumes a parsed Scenario and returns
(records, meta): records is a list of flat row dicts in a fixed order,
meta is a header block for the JSON output. Rows may carry more keys
than the CSV column set; the CSV writer selects and orders the pinned
columns, the JSON writer keeps everything.

Determinism contract: all randomness flows from one SeedSequence tree
rooted at the scenario seed, worker threads only parallelize solves
that are independent and are reassembled in index order, so outputs are
byte-identical for any worker count.
"""

import csv
import io
import json
import math
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import numpy as np

from . import geometry
from . import propagation as prop
from .performance import mean_cell_from_cells, prepare_network, solve_loads
from .scaling import NetworkBundle, build_composite, verify_scaling
from .scenario import ConfigError, Scenario
from .units import dbm_to_watts

_COLUMNS = {
    "sweep": ("rho_bar_kbps", "theta_bar", "n_bar", "r_bar_kbps",
              "converged", "iters", "residual"),
    "dimension": ("rho_bar_kbps", "min_bandwidth_MHz", "feasible", "variant"),
    "scale-check": ("alpha", "max_rel_theta", "max_rel_rho_c", "max_rel_r",
                    "max_rel_n_users", "partition_mismatches", "converged"),
    "composite": ("zone", "rho_bar_kbps", "theta_bar", "r_bar_kbps",
                  "r_bar_gap", "theta_bar_gap"),
}


def _map_ordered(fn, items, workers):
    """Map preserving input order; threads share read-only numpy state."""
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def _shadow_seed(seed_seq: np.random.SeedSequence) -> int:
    return int(seed_seq.generate_state(1, dtype=np.uint64)[0])


def _realization_model(model, shadow_seq):
    """Per-realization shadow seed; everything else is shared."""
    if model.shadowing.mode == "off":
        return model
    shadowing = replace(model.shadowing, seed=_shadow_seed(shadow_seq))
    return replace(model, shadowing=shadowing)


def _realization_seeds(seed_seq: np.random.SeedSequence, realizations: int):
    """One (deployment, shadowing) seed pair per realization.

    Spawned once up front so callers can reuse the same pairs for
    coupled runs (densification variants resample the same uniforms).
    """
    return [child.spawn(2) for child in seed_seq.spawn(realizations)]


def build_realization(intensity, window, grid, model, dep_seq, shadow_seq,
                      deployment=None):
    """Sample one deployment (unless given) and prepare its network."""
    if deployment is None:
        deployment = geometry.sample_ppp(intensity, window, seed=dep_seq)
    model_r = _realization_model(model, shadow_seq)
    extra = model_r.realize_extra_gain(deployment, grid)
    return prepare_network(deployment, model_r, grid, extra_gain=extra)


def sweep_realizations(intensity, window, grid, model, rate_model, noise_w,
                       density_axis, realizations, seed_seq, solver,
                       workers=1, deployment=None):
    """Mean-cell curve over a traffic axis, pooled across realizations.

    Realizations are processed one at a time so only one received-power
    matrix is alive at once; within a realization the traffic points
    solve in parallel. Interior cells of every realization are pooled
    before averaging, which keeps the estimator unbiased at cell level.
    Returns arrays over the axis, including per-point diagnostics.
    """
    axis = np.asarray(density_axis, dtype=float)
    if axis.ndim != 1 or axis.size == 0:
        raise ValueError("traffic axis must be a nonempty 1-d sequence")
    seeds = _realization_seeds(seed_seq, realizations)
    n_points = axis.size
    surf_pool = [[] for _ in range(n_points)]
    load_pool = [[] for _ in range(n_points)]
    integ_pool = [[] for _ in range(n_points)]
    converged = np.ones(n_points, dtype=bool)
    iterations = np.zeros(n_points, dtype=int)
    residual = np.zeros(n_points, dtype=float)

    for dep_seq, shadow_seq in seeds:
        prepared = build_realization(intensity, window, grid, model,
                                     dep_seq, shadow_seq, deployment=deployment)
        idx = prepared.interior
        surfaces = prepared.partition.surface_km2[idx]

        def solve_point(i, _prep=prepared):
            return solve_loads(_prep, rate_model, noise_w, float(axis[i]), solver)

        solutions = _map_ordered(solve_point, range(n_points), workers)
        for i, sol in enumerate(solutions):
            surf_pool[i].append(surfaces)
            load_pool[i].append(sol.load[idx])
            integ_pool[i].append(sol.inv_rate_integral[idx])
            converged[i] &= sol.converged
            iterations[i] = max(iterations[i], sol.iterations)
            residual[i] = max(residual[i], sol.residual)
        del prepared, solutions

    keys = ("rho_bar_bps", "theta_bar", "rho_c_bar_bps", "r_bar_bps", "n_bar")
    out = {k: np.empty(n_points) for k in keys}
    out["n_cells"] = np.empty(n_points, dtype=int)
    for i in range(n_points):
        cell = mean_cell_from_cells(np.concatenate(surf_pool[i]),
                                    np.concatenate(load_pool[i]),
                                    np.concatenate(integ_pool[i]),
                                    float(axis[i]))
        out["rho_bar_bps"][i] = cell.rho_bar
        out["theta_bar"][i] = cell.theta_bar
        out["rho_c_bar_bps"][i] = cell.rho_c_bar
        out["r_bar_bps"][i] = cell.r_bar
        out["n_bar"][i] = cell.n_bar
        out["n_cells"][i] = sum(a.size for a in surf_pool[i])
    out["converged"] = converged
    out["iterations"] = iterations
    out["residual"] = residual
    return out


def _base_deployment(scn: Scenario, window):
    """Fixed deployment when the scenario pins one, else None.

    deterministic_positions always pins it; geometry.seed pins the draw
    for single-realization runs.
    """
    if scn.deterministic_positions is not None:
        return geometry.place_deterministic(scn.deterministic_positions, window)
    if scn.geometry_seed is not None and scn.realizations == 1:
        return geometry.sample_ppp(scn.intensity_per_km2, window,
                                   seed=scn.geometry_seed)
    return None


def _require_deployment_source(scn: Scenario, kind: str):
    if scn.intensity_per_km2 is None and scn.deterministic_positions is None:
        raise ConfigError(f"[geometry] {kind} needs intensity_per_km2 or "
                          "deterministic_positions")


def run_sweep(scn: Scenario, workers: int = 1):
    """Mean-cell performance versus traffic for one homogeneous network."""
    _require_deployment_source(scn, "sweep")
    window = scn.window()
    deployment = _base_deployment(scn, window)
    intensity = (deployment.intensity if deployment is not None
                 and scn.intensity_per_km2 is None else scn.intensity_per_km2)
    grid = scn.grid(window)
    axis = scn.traffic_densities(intensity)
    pools = sweep_realizations(intensity, window, grid, scn.model(), scn.rate,
                               scn.noise_w(), axis, scn.realizations,
                               np.random.SeedSequence(scn.seed), scn.solver,
                               workers=workers, deployment=deployment)
    records = []
    for i in range(axis.size):
        records.append({
            "rho_bar_kbps": float(pools["rho_bar_bps"][i]) / 1e3,
            "theta_bar": float(pools["theta_bar"][i]),
            "n_bar": float(pools["n_bar"][i]),
            "r_bar_kbps": float(pools["r_bar_bps"][i]) / 1e3,
            "converged": bool(pools["converged"][i]),
            "iters": int(pools["iterations"][i]),
            "residual": float(pools["residual"][i]),
            "rho_c_bar_kbps": float(pools["rho_c_bar_bps"][i]) / 1e3,
            "pooled_cells": int(pools["n_cells"][i]),
        })
    meta = {
        "intensity_per_km2": intensity,
        "window_km": list(scn.window_km),
        "guard_km": scn.resolved_guard_km(intensity),
        "resolution_m": scn.resolution_m,
        "technology": scn.rate.technology,
        "bandwidth_MHz": scn.rate.bandwidth_hz / 1e6,
        "realizations": scn.realizations,
        "seed": scn.seed,
        "traffic_mode": scn.traffic_mode,
    }
    return records, meta


def run_scale_check(scn: Scenario, workers: int = 1):
    """Exact dilation-invariance report for one realization.

    The dilated networks carry the original's positions, shadow draws
    and partition node-for-node, so per-cell metrics must match to
    floating-point accuracy. With fresh_seed_mode an independent
    re-simulation at the dilated parameters is run as well and its
    mean-cell deviation recorded (a Monte Carlo figure, not an identity).
    """
    _require_deployment_source(scn, "scale-check")
    window = scn.window()
    grid = scn.grid(window)
    model = scn.model()
    root = np.random.SeedSequence(scn.seed)
    dep_seq, shadow_seq = root.spawn(2)
    deployment = _base_deployment(scn, window)
    if deployment is None:
        deployment = geometry.sample_ppp(scn.intensity_per_km2, window,
                                         seed=dep_seq)
    intensity = deployment.intensity
    model_r = _realization_model(model, shadow_seq)
    extra = model_r.realize_extra_gain(deployment, grid)
    density = float(scn.traffic_densities(intensity)[-1])
    bundle = NetworkBundle(deployment, grid, model_r.pathloss, density,
                           extra_gain=extra)
    noise_w = scn.noise_w()
    reports = verify_scaling(bundle, model_r, scn.rate, noise_w,
                             list(scn.scaling_alphas), scn.solver)
    records = []
    for rep in reports:
        row = {
            "alpha": rep.alpha,
            "max_rel_theta": rep.max_rel_theta,
            "max_rel_rho_c": rep.max_rel_rho_c,
            "max_rel_r": rep.max_rel_r,
            "max_rel_n_users": rep.max_rel_n_users,
            "partition_mismatches": rep.partition_mismatches,
            "converged": bool(rep.converged[0] and rep.converged[1]),
            "overload_flags_equal": rep.overload_flags_equal,
            "iterations_original": rep.iterations[0],
            "iterations_scaled": rep.iterations[1],
        }
        records.append(row)
    if scn.fresh_seed_mode:
        _fresh_seed_deviation(scn, model, window, intensity, density, noise_w,
                              records, workers)
    meta = {
        "alphas": list(scn.scaling_alphas),
        "density_bps_km2": density,
        "stations": int(deployment.n_stations),
        "fresh_seed_mode": scn.fresh_seed_mode,
        "seed": scn.seed,
    }
    return records, meta


def _fresh_seed_deviation(scn, model, window, intensity, density, noise_w,
                          records, workers):
    """Independent re-simulation at dilated parameters, mean-cell compare."""
    base = sweep_realizations(intensity, window, scn.grid(window), model,
                              scn.rate, noise_w, [density], scn.realizations,
                              np.random.SeedSequence((scn.seed, 1)), scn.solver,
                              workers=workers)
    for k, row in enumerate(records):
        alpha = row["alpha"]
        w_a = window.scaled(alpha)
        grid_a = geometry.EvalGrid(w_a, scn.resolution_m * alpha)
        pathloss_a = replace(model.pathloss,
                             K=model.pathloss.K / alpha,
                             min_distance_km=model.pathloss.min_distance_km * alpha)
        model_a = replace(model, pathloss=pathloss_a)
        pools = sweep_realizations(intensity / alpha ** 2, w_a, grid_a, model_a,
                                   scn.rate, noise_w, [density / alpha ** 2],
                                   scn.realizations,
                                   np.random.SeedSequence((scn.seed, 2, k)),
                                   scn.solver, workers=workers)
        for name, a, b in (("r_bar", base["r_bar_bps"][0], pools["r_bar_bps"][0]),
                           ("theta_bar", base["theta_bar"][0], pools["theta_bar"][0])):
            denom = max(abs(a), abs(b), 1e-300)
            row[f"fresh_rel_{name}"] = float(abs(a - b) / denom)


def run_composite(scn: Scenario, workers: int = 1):
    """Side-by-side zone curves on a shared per-cell traffic axis."""
    zones = scn.zone_specs()
    axis = scn.per_cell_axis_bps()
    w, h = scn.window_km
    guard = scn.guard_km if scn.guard_km is not None else 3.0
    base_window = geometry.Window(w, h, guard)
    result = build_composite(zones, scn.model(), scn.rate, scn.noise_w(), axis,
                             base_window, scn.resolution_m,
                             realizations=scn.realizations, seed=scn.seed,
                             solver=scn.solver, kd_tolerance=scn.kd_tolerance,
                             workers=workers)
    per_point = result.gaps.get("per_point", {})
    gap_r = per_point.get("r_bar", [0.0] * axis.size)
    gap_t = per_point.get("theta_bar", [0.0] * axis.size)
    records = []
    for zone in zones:
        curve = result.curves[zone.name]
        for i in range(axis.size):
            records.append({
                "zone": zone.name,
                "rho_bar_kbps": float(curve.rho_bar_bps[i]) / 1e3,
                "theta_bar": float(curve.theta_bar[i]),
                "r_bar_kbps": float(curve.r_bar_bps[i]) / 1e3,
                "r_bar_gap": float(gap_r[i]),
                "theta_bar_gap": float(gap_t[i]),
                "n_bar": float(curve.n_bar[i]),
                "rho_c_bar_kbps": float(curve.rho_c_bar_bps[i]) / 1e3,
                "converged": bool(curve.converged[i]),
            })
    meta = {
        "zones": [{"name": z.name, "spacing_km": z.spacing_km,
                   "K": z.pathloss.K, "beta": z.pathloss.beta,
                   "kd_product": z.kd_product} for z in zones],
        "kd_tolerance": scn.kd_tolerance,
        "warnings": list(result.warnings),
        "r_bar_gap": result.gaps.get("r_bar_gap"),
        "theta_bar_gap": result.gaps.get("theta_bar_gap"),
        "realizations": scn.realizations,
        "seed": scn.seed,
    }
    return records, meta


def min_bandwidth_for_target(r_bar_at, target_bps, w_min_hz, w_max_hz, tol_hz):
    """Minimal bandwidth whose mean user throughput meets the target.

    The throughput is strictly increasing in W (wider channel and, per
    hertz, the noise grows but the rate integrand wins), so a bisection
    on a fixed dyadic grid brackets the crossing; the result is the
    right edge of the final cell, the first grid point meeting the
    target. All traffic points share the same grid, which makes the
    reported bandwidth nondecreasing along the traffic axis. A few
    probes check the monotonicity assumption; on violation the search
    falls back to an exhaustive ascending scan at the tolerance step and
    the row is flagged.

    Returns (bandwidth_hz or None, feasible, method).
    """
    r_lo = r_bar_at(w_min_hz)
    if r_lo >= target_bps:
        return w_min_hz, True, "bisection"
    r_hi = r_bar_at(w_max_hz)
    if r_hi < target_bps:
        return None, False, "bisection"
    slack = 1e-3 * target_bps
    probes = np.geomspace(w_min_hz, w_max_hz, 6)
    values = [r_lo] + [r_bar_at(w) for w in probes[1:-1]] + [r_hi]
    if any(b < a - slack for a, b in zip(values, values[1:])):
        steps = math.ceil((w_max_hz - w_min_hz) / tol_hz)
        for k in range(1, steps + 1):
            w = min(w_min_hz + k * tol_hz, w_max_hz)
            if r_bar_at(w) >= target_bps:
                return w, True, "scan"
        return w_max_hz, True, "scan"
    depth = math.ceil(math.log2((w_max_hz - w_min_hz) / tol_hz))
    lo, hi = w_min_hz, w_max_hz
    for _ in range(depth):
        mid = 0.5 * (lo + hi)
        if r_bar_at(mid) >= target_bps:
            hi = mid
        else:
            lo = mid
    return hi, True, "bisection"


def _variant_model(scn: Scenario, variant):
    """Propagation model for one deployment variant.

    The distance clamp is a physical near-field limit, so it is not
    rescaled with the station spacing.
    """
    pathloss = scn.pathloss
    if variant.k_per_km is not None:
        pathloss = replace(pathloss, K=variant.k_per_km)
    elif variant.carrier_ghz is not None:
        k = prop.scale_k_to_frequency(pathloss.K, scn.f0_ghz,
                                      variant.carrier_ghz, pathloss.beta)
        pathloss = replace(pathloss, K=k)
    link = scn.link
    if variant.tx_power_dbm is not None:
        link = replace(link, tx_power_dbm=variant.tx_power_dbm)
    return prop.PropagationModel(pathloss=pathloss, shadowing=scn.shadowing,
                                 antenna=scn.antenna, link=link)


def run_dimension(scn: Scenario, workers: int = 1):
    """Minimal bandwidth over a per-cell traffic axis, per variant.

    [geometry] describes the unit-spacing reference: each variant's
    window, guard, grid step scale with its spacing D and the station
    intensity is 1/D^2, so the expected station count is the same for
    every variant. All variants consume the same seed pairs; with the
    intensity-area product invariant the Poisson counts coincide draw
    for draw and positions scale in proportion, so variants are compared
    on coupled deployments rather than independent noise.
    """
    req = scn.dimension
    if req is None:
        raise ConfigError("[dimension] section is required for dimension runs")
    axis_bps = scn.per_cell_axis_bps()
    seeds = _realization_seeds(np.random.SeedSequence(scn.seed),
                               scn.realizations)
    base_w, base_h = scn.window_km
    base_guard = scn.guard_km if scn.guard_km is not None else 3.0
    records = []
    meta_variants = []
    for variant in req.variants:
        model = _variant_model(scn, variant)
        d = variant.spacing_km
        intensity = 1.0 / d ** 2
        window = geometry.Window(base_w * d, base_h * d, base_guard * d)
        grid = geometry.EvalGrid(window, scn.resolution_m * d)
        prepared = [build_realization(intensity, window, grid, model,
                                      dep_seq, shadow_seq)
                    for dep_seq, shadow_seq in seeds]
        noise_figure = model.link.noise_figure_db

        def r_bar_point(rho_bps, w_hz, _prepared=prepared, _intensity=intensity):
            rate = scn.rate.with_bandwidth(w_hz)
            noise_w = dbm_to_watts(prop.noise_power_dbm(w_hz, noise_figure))
            density = rho_bps * _intensity
            surf, load, integ = [], [], []
            ok = True
            for prep in _prepared:
                sol = solve_loads(prep, rate, noise_w, density, scn.solver)
                idx = prep.interior
                surf.append(prep.partition.surface_km2[idx])
                load.append(sol.load[idx])
                integ.append(sol.inv_rate_integral[idx])
                ok &= sol.converged
            cell = mean_cell_from_cells(np.concatenate(surf),
                                        np.concatenate(load),
                                        np.concatenate(integ), density)
            return cell.r_bar, ok

        def search_point(rho_bps):
            status = {"converged": True}

            def eval_bandwidth(w_hz):
                r_bar, ok = r_bar_point(rho_bps, w_hz)
                status["converged"] &= ok
                return r_bar

            w, feasible, method = min_bandwidth_for_target(
                eval_bandwidth, req.target_bps, req.w_min_hz, req.w_max_hz,
                req.tol_hz)
            return {
                "rho_bar_kbps": float(rho_bps) / 1e3,
                "min_bandwidth_MHz": None if w is None else w / 1e6,
                "feasible": feasible,
                "variant": variant.name,
                "method": method,
                "converged": status["converged"],
            }
        records.extend(_map_ordered(search_point, axis_bps, workers))
        meta_variants.append({
            "name": variant.name, "spacing_km": d,
            "K": model.pathloss.K, "beta": model.pathloss.beta,
            "tx_power_dBm": model.link.tx_power_dbm,
            "stations_mean": intensity * window.area_km2,
        })
        del prepared
    meta = {
        "target_mbps": req.target_bps / 1e6,
        "w_min_MHz": req.w_min_hz / 1e6,
        "w_max_MHz": req.w_max_hz / 1e6,
        "tol_MHz": req.tol_hz / 1e6,
        "variants": meta_variants,
        "realizations": scn.realizations,
        "seed": scn.seed,
        "coupled_seeds": True,
    }
    return records, meta


_RUNNERS = {
    "sweep": run_sweep,
    "scale-check": run_scale_check,
    "composite": run_composite,
    "dimension": run_dimension,
}


def run_kind(kind: str, scn: Scenario, workers: int = 1):
    if kind not in _RUNNERS:
        raise ConfigError(f"unknown experiment kind {kind!r}")
    return _RUNNERS[kind](scn, workers=workers)


def _python_scalar(value):
    if isinstance(value, np.generic):
        return value.item()
    return value


def _csv_cell(value) -> str:
    value = _python_scalar(value)
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)  # shortest round-trip form; inf prints as 'inf'
    return str(value)


def _render_csv(records, columns) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for rec in records:
        writer.writerow([_csv_cell(rec.get(col)) for col in columns])
    return buf.getvalue()


def _jsonable(value):
    value = _python_scalar(value)
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, float) and not math.isfinite(value):
        return None  # JSON has no inf/nan
    return value


def _render_json(records, kind, meta) -> str:
    rows = [_jsonable(rec) for rec in records]
    columns = list(_COLUMNS[kind])
    doc = {
        "schema": f"celldim.{kind}.v1",
        "kind": kind,
        "meta": _jsonable(meta or {}),
        "columns": columns,
        "records": rows,
        "series": {col: [row.get(col) for row in rows] for col in columns},
    }
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"


def _atomic_write(path: str, text: str):
    """Write via a same-directory temp file and rename into place."""
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".celldim-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def emit_outputs(records, kind, out_dir, basename=None, formats=("csv", "json"),
                 meta=None) -> dict:
    """Write result rows to out_dir; returns {format: path}.

    Refuses empty record lists before touching the filesystem, and each
    file appears atomically or not at all.
    """
    if not records:
        raise ValueError("no records to write; refusing to create output files")
    if kind not in _COLUMNS:
        raise ValueError(f"unknown output kind {kind!r}")
    unknown = [f for f in formats if f not in ("csv", "json")]
    if unknown:
        raise ValueError(f"unknown output formats {unknown}")
    os.makedirs(out_dir, exist_ok=True)
    base = basename or kind.replace("-", "_")
    written = {}
    for fmt in formats:
        path = os.path.join(out_dir, f"{base}.{fmt}")
        text = (_render_csv(records, _COLUMNS[kind]) if fmt == "csv"
                else _render_json(records, kind, meta))
        _atomic_write(path, text)
        written[fmt] = path
    return written
