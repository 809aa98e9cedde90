"""Deployments, evaluation grids, and strongest-signal cell partitions.

The observation window is a rectangle centered at the origin. Stations
form a homogeneous Poisson process (or are placed by hand); space is
discretized into a lattice of equal-weight nodes over which every cell
integral is taken; each node belongs to the cell of the station whose
received (pilot) power there is strongest.
"""

from dataclasses import dataclass

import numpy as np

from . import propagation as prop


@dataclass(frozen=True)
class Window:
    """Centered rectangle with an inner guard margin.

    Cells whose station falls inside the margin-eroded inner rectangle
    are the ones entering network averages; interference is always
    computed from every station in the full window.
    """

    width_km: float
    height_km: float = None
    guard_km: float = 0.0

    def __post_init__(self):
        if self.height_km is None:
            object.__setattr__(self, "height_km", self.width_km)
        if not (self.width_km > 0 and self.height_km > 0):
            raise ValueError("window extents must be positive")
        if not (0 <= self.guard_km < min(self.width_km, self.height_km) / 2):
            raise ValueError("guard margin must satisfy 0 <= guard < min(width, height)/2")

    @property
    def area_km2(self) -> float:
        return self.width_km * self.height_km

    def contains(self, points) -> np.ndarray:
        p = np.atleast_2d(points)
        return ((np.abs(p[:, 0]) <= self.width_km / 2)
                & (np.abs(p[:, 1]) <= self.height_km / 2))

    def contains_inner(self, points, guard_km=None) -> np.ndarray:
        g = self.guard_km if guard_km is None else guard_km
        p = np.atleast_2d(points)
        return ((np.abs(p[:, 0]) <= self.width_km / 2 - g)
                & (np.abs(p[:, 1]) <= self.height_km / 2 - g))

    def scaled(self, alpha: float) -> "Window":
        return Window(self.width_km * alpha, self.height_km * alpha,
                      self.guard_km * alpha)


class EvalGrid:
    """Node lattice covering the window, cell-centered, equal weights.

    Node n = ix * ny + iy sits at the center of lattice cell (ix, iy);
    the per-node area weight is constant and the weights sum to the
    window area (up to rounding, checked at 1e-9 relative).
    """

    def __init__(self, window: Window, resolution_m: float):
        if not resolution_m > 0:
            raise ValueError("resolution must be positive")
        self.window = window
        self.resolution_m = float(resolution_m)
        self.nx = max(1, round(window.width_km * 1000.0 / resolution_m))
        self.ny = max(1, round(window.height_km * 1000.0 / resolution_m))
        self.step_x_km = window.width_km / self.nx
        self.step_y_km = window.height_km / self.ny
        self.x = -window.width_km / 2 + (np.arange(self.nx) + 0.5) * self.step_x_km
        self.y = -window.height_km / 2 + (np.arange(self.ny) + 0.5) * self.step_y_km
        xx, yy = np.meshgrid(self.x, self.y, indexing="ij")
        self.nodes_x = np.ascontiguousarray(xx.ravel())
        self.nodes_y = np.ascontiguousarray(yy.ravel())
        self.node_weight_km2 = self.step_x_km * self.step_y_km
        self._check_weights()

    def _check_weights(self):
        total = self.node_weight_km2 * self.n_nodes
        if abs(total - self.window.area_km2) > 1e-9 * self.window.area_km2:
            raise ValueError("grid weights do not sum to the window area")

    @property
    def n_nodes(self) -> int:
        return self.nx * self.ny

    @property
    def shape(self):
        return (self.nx, self.ny)

    def nearest_index(self, points) -> np.ndarray:
        """Flat node index nearest to each point (points clipped to the window)."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        ix = np.clip(np.floor((p[:, 0] + self.window.width_km / 2) / self.step_x_km),
                     0, self.nx - 1).astype(np.int64)
        iy = np.clip(np.floor((p[:, 1] + self.window.height_km / 2) / self.step_y_km),
                     0, self.ny - 1).astype(np.int64)
        return ix * self.ny + iy

    def scaled(self, alpha: float) -> "EvalGrid":
        """Node-for-node dilation: same lattice, coordinates and weights scaled."""
        if not alpha > 0:
            raise ValueError("alpha must be positive")
        g = object.__new__(EvalGrid)
        g.window = self.window.scaled(alpha)
        g.resolution_m = self.resolution_m * alpha
        g.nx, g.ny = self.nx, self.ny
        g.step_x_km = self.step_x_km * alpha
        g.step_y_km = self.step_y_km * alpha
        g.x = self.x * alpha
        g.y = self.y * alpha
        g.nodes_x = self.nodes_x * alpha
        g.nodes_y = self.nodes_y * alpha
        g.node_weight_km2 = self.node_weight_km2 * alpha * alpha
        g._check_weights()
        return g


@dataclass(frozen=True)
class Deployment:
    """A realization of the station process inside a window.

    positions is (S, 2) in km; power_dbm, if given, is a per-station
    power mark overriding the link default; intensity is the process
    intensity in stations/km^2.
    """

    positions: np.ndarray
    window: Window
    intensity: float
    seed: object = None
    power_dbm: np.ndarray = None
    zone_tag: str = None

    def __post_init__(self):
        pos = np.atleast_2d(np.asarray(self.positions, dtype=float))
        object.__setattr__(self, "positions", pos)
        if pos.shape[0] == 0:
            raise ValueError("deployment needs at least one station")
        if pos.shape[1] != 2:
            raise ValueError("positions must be (S, 2)")
        if not np.all(self.window.contains(pos)):
            raise ValueError("all stations must lie inside the window")
        if not self.intensity > 0:
            raise ValueError("intensity must be positive")
        if self.power_dbm is not None:
            p = np.broadcast_to(np.asarray(self.power_dbm, dtype=float),
                                (pos.shape[0],)).copy()
            object.__setattr__(self, "power_dbm", p)

    @property
    def n_stations(self) -> int:
        return self.positions.shape[0]

    def scaled(self, alpha: float) -> "Deployment":
        return Deployment(self.positions * alpha, self.window.scaled(alpha),
                          self.intensity / (alpha * alpha), seed=self.seed,
                          power_dbm=self.power_dbm, zone_tag=self.zone_tag)


def sample_ppp(intensity: float, window: Window, seed=None,
               on_empty: str = "retry", power_dbm=None) -> Deployment:
    """Draw a homogeneous Poisson deployment: count ~ Poisson(intensity * area),
    positions i.i.d. uniform. Deterministic given the seed.

    A zero-station draw is retried with the same stream (giving the
    zero-truncated count distribution) or raises, per on_empty.
    """
    if not intensity > 0:
        raise ValueError("intensity must be positive")
    if on_empty not in ("retry", "error"):
        raise ValueError(f"on_empty must be 'retry' or 'error', got {on_empty!r}")
    rng = np.random.default_rng(seed)
    mean = intensity * window.area_km2
    for _ in range(1000):
        n = int(rng.poisson(mean))
        if n > 0:
            break
        if on_empty == "error":
            raise ValueError("Poisson draw produced zero stations")
    else:
        raise ValueError("Poisson draw produced zero stations 1000 times; "
                         "intensity * area is too small")
    low = (-window.width_km / 2, -window.height_km / 2)
    high = (window.width_km / 2, window.height_km / 2)
    positions = rng.uniform(low, high, size=(n, 2))
    return Deployment(positions, window, intensity, seed=seed, power_dbm=power_dbm)


def place_deterministic(positions, window: Window, power_dbm=None) -> Deployment:
    """Hand-built deployment; intensity is taken as count/area."""
    pos = np.atleast_2d(np.asarray(positions, dtype=float))
    if pos.size == 0:
        raise ValueError("deployment needs at least one station")
    if not np.all(window.contains(pos)):
        bad = np.flatnonzero(~window.contains(pos))
        raise ValueError(f"stations {bad.tolist()} lie outside the window")
    return Deployment(pos, window, intensity=pos.shape[0] / window.area_km2,
                      power_dbm=power_dbm)


class CellPartition:
    """Strongest-signal partition of the grid.

    serving_index[n] is the station winning node n (ties go to the
    lowest station index); surfaces are node counts times the node
    weight and sum to the window area.
    """

    def __init__(self, serving_index: np.ndarray, n_stations: int, grid: EvalGrid):
        self.serving_index = serving_index
        self.n_stations = n_stations
        self.grid = grid
        self.node_count = np.bincount(serving_index, minlength=n_stations)
        self.surface_km2 = self.node_count * grid.node_weight_km2
        total = self.surface_km2.sum()
        if abs(total - grid.window.area_km2) > 1e-9 * grid.window.area_km2:
            raise ValueError("cell surfaces do not sum to the window area")

    def nodes_of(self, cell: int) -> np.ndarray:
        return np.flatnonzero(self.serving_index == cell)


def _argmax_rows(row_iter, n_stations: int, n_nodes: int) -> np.ndarray:
    """Running argmax over station rows; first index wins ties.

    Strict '>' keeps the earlier station on equal power, giving the
    deterministic lowest-index tie-break regardless of worker count.
    """
    best = np.full(n_nodes, -np.inf)
    winner = np.zeros(n_nodes, dtype=np.int32)
    for s, row in enumerate(row_iter):
        mask = row > best
        winner[mask] = s
        np.copyto(best, row, where=mask)
    return winner


def assign_cells(deployment: Deployment, model: "prop.PropagationModel",
                 grid: EvalGrid, extra_gain=None, power_matrix=None) -> CellPartition:
    """Partition the grid into strongest-received-power cells.

    When select_on_pilot is set the selection power is pilot_fraction * P.
    The pilot fraction is one global scalar, so it rescales every row
    alike and cannot change any argmax; it is applied anyway so the
    selection quantity is literally the pilot power.
    """
    powers = model.station_powers_dbm(deployment)
    pilot = model.link.pilot_fraction if model.link.select_on_pilot else 1.0
    if power_matrix is not None:
        rows = (pilot * power_matrix[s] for s in range(deployment.n_stations))
    else:
        def rows_gen():
            buf = np.empty(grid.n_nodes)
            for s in range(deployment.n_stations):
                prop.received_power_row(deployment.positions, powers, grid,
                                        model.pathloss, s, extra_gain=extra_gain,
                                        out=buf)
                yield pilot * buf
        rows = rows_gen()
    serving = _argmax_rows(rows, deployment.n_stations, grid.n_nodes)
    return CellPartition(serving, deployment.n_stations, grid)


def interior_cells(deployment: Deployment, guard_km=None) -> np.ndarray:
    """Indices of stations inside the guard-eroded window.

    Only these cells enter network averages; the margin approximates the
    infinite stationary network by discarding edge-biased cells.
    """
    inner = deployment.window.contains_inner(deployment.positions, guard_km)
    idx = np.flatnonzero(inner)
    if idx.size == 0:
        raise ValueError("no station lies inside the guard margin; "
                         "enlarge the window or reduce guard_km")
    return idx
