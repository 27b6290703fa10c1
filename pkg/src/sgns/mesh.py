"""Structured quadrilateral Taylor-Hood (Q2-Q1) meshes on rectangles.

Supported geometries: unit lid-driven cavity and a 12 x 2 channel, the latter
optionally with an axis-aligned rectangular obstacle formed by removing whole
grid cells.  Velocity nodes live on the biquadratic lattice, pressure nodes on
the bilinear one; boundary edges carry exactly one of the tags "wall", "lid",
"inflow", "outflow".
"""

from dataclasses import dataclass, field

import numpy as np

__all__ = ["Mesh", "build_mesh", "DEFAULT_OBSTACLE"]

# Default obstacle block in the channel, snapped to grid lines on construction.
DEFAULT_OBSTACLE = (1.75, 2.25, -0.25, 0.25)

_DIRICHLET_TAGS = ("wall", "lid", "inflow")


@dataclass
class Mesh:
    geometry: str
    nx: int
    ny: int
    bounds: tuple                 # (x0, x1, y0, y1)
    vel_coords: np.ndarray        # (n_vnodes, 2)
    pre_coords: np.ndarray        # (n_pnodes, 2)
    cells_q2: np.ndarray          # (n_elems, 9) velocity connectivity
    cells_q1: np.ndarray          # (n_elems, 4) pressure connectivity
    edge_nodes: np.ndarray        # (n_bedges, 3) velocity nodes per boundary edge
    edge_tags: list               # tag per boundary edge
    vel_lattice: np.ndarray       # flat index of each velocity node on the full lattice
    cell_grid: np.ndarray         # (nx, ny) kept-cell index or -1
    pin_pressure_dof: int = field(default=-1)  # -1 means no pin (Neumann outflow)

    @property
    def n_vnodes(self):
        return self.vel_coords.shape[0]

    @property
    def n_pnodes(self):
        return self.pre_coords.shape[0]

    @property
    def n_u(self):
        return 2 * self.n_vnodes

    @property
    def n_p(self):
        return self.n_pnodes

    @property
    def n_elems(self):
        return self.cells_q2.shape[0]

    @property
    def hx(self):
        x0, x1, _, _ = self.bounds
        return (x1 - x0) / self.nx

    @property
    def hy(self):
        _, _, y0, y1 = self.bounds
        return (y1 - y0) / self.ny

    def velocity_dof(self, node, comp):
        return comp * self.n_vnodes + node

    def node_tags(self):
        """Highest-priority boundary tag per velocity node (wall beats lid/inflow)."""
        prio = {"wall": 3, "inflow": 2, "lid": 2, "outflow": 1}
        tags = {}
        for nodes, tag in zip(self.edge_nodes, self.edge_tags):
            for n in nodes:
                n = int(n)
                if n not in tags or prio[tag] > prio[tags[n]]:
                    tags[n] = tag
        return tags

    def dirichlet_nodes(self):
        """Velocity nodes with essential boundary conditions, sorted."""
        tags = self.node_tags()
        return np.array(sorted(n for n, t in tags.items() if t in _DIRICHLET_TAGS),
                        dtype=np.int64)

    def dirichlet_values(self, bc=None):
        """(nodes, values) pairs for the essential boundary.

        `bc` maps (x, y, tag) -> (ux, uy); the default is the geometry profile:
        unit lid for the cavity, parabolic inflow 1 - y^2 for the channel, zero
        on walls.
        """
        nodes = self.dirichlet_nodes()
        tags = self.node_tags()
        if bc is None:
            bc = self._default_bc
        vals = np.zeros((nodes.size, 2))
        for i, n in enumerate(nodes):
            x, y = self.vel_coords[n]
            vals[i] = bc(x, y, tags[int(n)])
        return nodes, vals

    def _default_bc(self, x, y, tag):
        if tag == "lid":
            return (1.0, 0.0)
        if tag == "inflow":
            return (1.0 - y * y, 0.0)
        return (0.0, 0.0)

    def locate(self, x, y):
        """Element index and reference coordinates containing physical (x, y)."""
        x0, x1, y0, y1 = self.bounds
        if not (x0 - 1e-12 <= x <= x1 + 1e-12 and y0 - 1e-12 <= y <= y1 + 1e-12):
            raise ValueError(f"point ({x}, {y}) outside domain")
        cx = min(int((x - x0) / self.hx), self.nx - 1)
        cy = min(int((y - y0) / self.hy), self.ny - 1)
        e = self.cell_grid[cx, cy]
        if e < 0:
            raise ValueError(f"point ({x}, {y}) lies inside the obstacle")
        xc = x0 + (cx + 0.5) * self.hx
        yc = y0 + (cy + 0.5) * self.hy
        return int(e), 2.0 * (x - xc) / self.hx, 2.0 * (y - yc) / self.hy


def _q2_shape(xi, eta):
    lx = np.array([0.5 * xi * (xi - 1.0), 1.0 - xi * xi, 0.5 * xi * (xi + 1.0)])
    ly = np.array([0.5 * eta * (eta - 1.0), 1.0 - eta * eta, 0.5 * eta * (eta + 1.0)])
    return np.outer(ly, lx).ravel()  # local a = dj*3 + di


def _q1_shape(xi, eta):
    lx = np.array([0.5 * (1.0 - xi), 0.5 * (1.0 + xi)])
    ly = np.array([0.5 * (1.0 - eta), 0.5 * (1.0 + eta)])
    return np.outer(ly, lx).ravel()  # local c = dj*2 + di


def interpolate_velocity(mesh, u, points):
    """Evaluate a velocity coefficient vector (length n_u) at physical points."""
    u = np.asarray(u)
    pts = np.atleast_2d(points)
    out = np.zeros((pts.shape[0], 2))
    nv = mesh.n_vnodes
    for i, (x, y) in enumerate(pts):
        e, xi, eta = mesh.locate(x, y)
        phi = _q2_shape(xi, eta)
        nodes = mesh.cells_q2[e]
        out[i, 0] = phi @ u[nodes]
        out[i, 1] = phi @ u[nv + nodes]
    return out


def interpolate_pressure(mesh, p, points):
    """Evaluate a pressure coefficient vector (length n_p) at physical points."""
    p = np.asarray(p)
    pts = np.atleast_2d(points)
    out = np.zeros(pts.shape[0])
    for i, (x, y) in enumerate(pts):
        e, xi, eta = mesh.locate(x, y)
        out[i] = _q1_shape(xi, eta) @ p[mesh.cells_q1[e]]
    return out


def _snap_obstacle(rect, bounds, nx, ny):
    x0, x1, y0, y1 = bounds
    hx, hy = (x1 - x0) / nx, (y1 - y0) / ny
    xa, xb, ya, yb = rect

    def snap(a, b, h, origin):
        lo = int(np.floor((a - origin) / h + 0.5))
        hi = int(np.ceil((b - origin) / h - 0.5))
        if hi <= lo:  # narrower than a cell: cover the overlapped cells instead
            lo = int(np.floor((a - origin) / h))
            hi = int(np.ceil((b - origin) / h))
        return lo, hi

    ia, ib = snap(xa, xb, hx, x0)
    ja, jb = snap(ya, yb, hy, y0)
    if ib <= ia or jb <= ja:
        raise ValueError("obstacle block is empty after snapping to grid lines")
    if ia < 1 or ib > nx - 1 or ja < 1 or jb > ny - 1:
        raise ValueError("obstacle block must be strictly interior to the channel")
    return ia, ib, ja, jb


def build_mesh(geometry, nx, ny, obstacle=None):
    """Build a structured Taylor-Hood mesh.

    Parameters
    ----------
    geometry : str
        "cavity" (unit square, all-Dirichlet with moving lid),
        "channel" (12 x 2 channel, parabolic inflow, natural outflow) or
        "channel-obstacle" (channel with a rectangular block of cells removed;
        `obstacle` gives the block as (xa, xb, ya, yb), default
        ``DEFAULT_OBSTACLE``).
    nx, ny : int
        Number of cells per direction (>= 2).

    Returns
    -------
    Mesh
    """
    if nx < 2 or ny < 2:
        raise ValueError("need at least 2 cells per direction")
    if geometry == "cavity":
        bounds = (0.0, 1.0, 0.0, 1.0)
        block = None
    elif geometry == "channel":
        bounds = (0.0, 12.0, -1.0, 1.0)
        block = None
    elif geometry == "channel-obstacle":
        bounds = (0.0, 12.0, -1.0, 1.0)
        block = _snap_obstacle(obstacle or DEFAULT_OBSTACLE, bounds, nx, ny)
    else:
        raise ValueError(f"unknown geometry {geometry!r}")

    x0, x1, y0, y1 = bounds
    mvx, mvy = 2 * nx + 1, 2 * ny + 1        # velocity lattice
    xs = np.linspace(x0, x1, mvx)
    ys = np.linspace(y0, y1, mvy)
    xp = np.linspace(x0, x1, nx + 1)
    yp = np.linspace(y0, y1, ny + 1)

    keep = np.ones((nx, ny), dtype=bool)
    if block is not None:
        ia, ib, ja, jb = block
        keep[ia:ib, ja:jb] = False

    # Connectivity on the full lattices, then compress to kept nodes.
    cells_q2, cells_q1, cell_grid = [], [], -np.ones((nx, ny), dtype=np.int64)
    for cy in range(ny):
        for cx in range(nx):
            if not keep[cx, cy]:
                continue
            cell_grid[cx, cy] = len(cells_q2)
            q2 = [(2 * cy + dj) * mvx + (2 * cx + di)
                  for dj in range(3) for di in range(3)]
            q1 = [(cy + dj) * (nx + 1) + (cx + di)
                  for dj in range(2) for di in range(2)]
            cells_q2.append(q2)
            cells_q1.append(q1)
    cells_q2 = np.asarray(cells_q2, dtype=np.int64)
    cells_q1 = np.asarray(cells_q1, dtype=np.int64)

    vmap = _compress(cells_q2, mvx * mvy)
    pmap = _compress(cells_q1, (nx + 1) * (ny + 1))
    vel_lattice = np.flatnonzero(vmap >= 0)
    pre_lattice = np.flatnonzero(pmap >= 0)
    cells_q2 = vmap[cells_q2]
    cells_q1 = pmap[cells_q1]
    vel_coords = np.column_stack([xs[vel_lattice % mvx], ys[vel_lattice // mvx]])
    pre_coords = np.column_stack([xp[pre_lattice % (nx + 1)], yp[pre_lattice // (nx + 1)]])

    # Boundary edges: cell sides without a kept neighbor.
    def alive(cx, cy):
        return 0 <= cx < nx and 0 <= cy < ny and keep[cx, cy]

    edge_nodes, edge_tags = [], []
    sides = {  # side -> (neighbor offset, local Q2 node triple)
        "left": ((-1, 0), (0, 3, 6)),
        "right": ((1, 0), (2, 5, 8)),
        "bottom": ((0, -1), (0, 1, 2)),
        "top": ((0, 1), (6, 7, 8)),
    }
    for cy in range(ny):
        for cx in range(nx):
            e = cell_grid[cx, cy]
            if e < 0:
                continue
            for side, ((dx, dy), locs) in sides.items():
                if alive(cx + dx, cy + dy):
                    continue
                outer = (cx + dx < 0 or cx + dx >= nx or cy + dy < 0 or cy + dy >= ny)
                if geometry == "cavity":
                    tag = "lid" if side == "top" else "wall"
                else:
                    if not outer:
                        tag = "wall"  # obstacle surface
                    elif side == "left":
                        tag = "inflow"
                    elif side == "right":
                        tag = "outflow"
                    else:
                        tag = "wall"
                edge_nodes.append([cells_q2[e, l] for l in locs])
                edge_tags.append(tag)

    return Mesh(
        geometry=geometry,
        nx=nx,
        ny=ny,
        bounds=bounds,
        vel_coords=vel_coords,
        pre_coords=pre_coords,
        cells_q2=cells_q2,
        cells_q1=cells_q1,
        edge_nodes=np.asarray(edge_nodes, dtype=np.int64),
        edge_tags=edge_tags,
        vel_lattice=vel_lattice,
        cell_grid=cell_grid,
        pin_pressure_dof=0 if geometry == "cavity" else -1,
    )


def _compress(cells, n_total):
    used = np.zeros(n_total, dtype=bool)
    used[cells.ravel()] = True
    cmap = -np.ones(n_total, dtype=np.int64)
    cmap[used] = np.arange(used.sum())
    return cmap
