"""2-D object geometry and the antipodal grasp sampler.

Provides:
  ObjectModel        — CCW polygon + uniform body mass + point-mass attachments
  GraspPose          — a two-contact parallel-jaw grasp on the boundary
  BoundaryPair       — the two boundary exits of the line perpendicular to a grasp
  center_of_mass     — mass-weighted COM of body + attachments
  boundary_intersections — exits of the perpendicular ("reference") line
  is_force_closure   — antipodal friction-cone test for a contact pair
  sample_antipodal_grasps — friction-sweep sampler over the boundary
  rasterize_and_segment   — top-down occupancy grid + traced boundary polyline

Conventions:
  Polygons are simple, counterclockwise, in meters. The closing direction of a
  grasp (`normal_dir`) is canonicalized so that its 90-degree CCW rotation (the
  "reference direction", along which boundary exit `a` lies) points into the
  +x half-plane (ties resolved toward +y). All functions are pure; the sampler
  is deterministic given its seed.
"""

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage
from skimage import measure

from .errors import (
    CellTooCoarseError,
    DegenerateContactError,
    GeometryError,
    NoIntersectionError,
    SamplerExhaustedError,
)
from .seeding import as_rng

GRIPPER_STROKE = 0.08        # max jaw opening, meters
GRIP_FORCE_RANGE = (20.0, 100.0)   # commanded force limits, Newtons
FRICTION_STEP = 0.2          # sweep increment for the sampler

_EPS = 1e-12


def _as_point(p) -> np.ndarray:
    a = np.asarray(p, dtype=float).reshape(2)
    return a


def ccw90(v: np.ndarray) -> np.ndarray:
    """Rotate a 2-vector 90 degrees counterclockwise."""
    return np.array([-v[1], v[0]])


def _cross(u, v) -> float:
    return u[0] * v[1] - u[1] * v[0]


# ---------------------------------------------------------------------------
# Polygon primitives
# ---------------------------------------------------------------------------

def signed_area(polygon: np.ndarray) -> float:
    """Shoelace signed area; positive for CCW vertex order."""
    x, y = polygon[:, 0], polygon[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def polygon_centroid(polygon: np.ndarray) -> np.ndarray:
    """Centroid of the uniform lamina bounded by the polygon."""
    x, y = polygon[:, 0], polygon[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    area = 0.5 * np.sum(cross)
    cx = np.sum((x + xn) * cross) / (6.0 * area)
    cy = np.sum((y + yn) * cross) / (6.0 * area)
    return np.array([cx, cy])


def point_in_polygon(polygon: np.ndarray, point, tol: float = 1e-9) -> bool:
    """Even-odd test, inclusive of the boundary within ``tol``."""
    p = _as_point(point)
    if distance_to_boundary(polygon, p) <= tol:
        return True
    inside = False
    n = len(polygon)
    for i in range(n):
        a, b = polygon[i], polygon[(i + 1) % n]
        if (a[1] > p[1]) != (b[1] > p[1]):
            x_cross = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1])
            if p[0] < x_cross:
                inside = not inside
    return inside


def distance_to_boundary(polygon: np.ndarray, point) -> float:
    p = _as_point(point)
    best = np.inf
    n = len(polygon)
    for i in range(n):
        a, b = polygon[i], polygon[(i + 1) % n]
        d = b - a
        L2 = d @ d
        t = 0.0 if L2 < _EPS else float(np.clip((p - a) @ d / L2, 0.0, 1.0))
        best = min(best, float(np.linalg.norm(p - (a + t * d))))
    return best


def perimeter(polygon: np.ndarray) -> float:
    diffs = np.roll(polygon, -1, axis=0) - polygon
    return float(np.sum(np.linalg.norm(diffs, axis=1)))


def point_at_arclength(polygon: np.ndarray, s: float) -> np.ndarray:
    """Boundary point at arc length ``s`` from vertex 0, walking CCW."""
    s = float(s) % perimeter(polygon)
    n = len(polygon)
    for i in range(n):
        a, b = polygon[i], polygon[(i + 1) % n]
        seg = float(np.linalg.norm(b - a))
        if s <= seg:
            return a + (b - a) * (s / seg if seg > 0 else 0.0)
        s -= seg
    return polygon[0].copy()


def _is_simple(polygon: np.ndarray) -> bool:
    """No two non-adjacent edges may properly intersect."""
    n = len(polygon)
    for i in range(n):
        a1, a2 = polygon[i], polygon[(i + 1) % n]
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue
            b1, b2 = polygon[j], polygon[(j + 1) % n]
            d1, d2 = a2 - a1, b2 - b1
            denom = _cross(d1, d2)
            if abs(denom) < _EPS:
                continue
            t = _cross(b1 - a1, d2) / denom
            u = _cross(b1 - a1, d1) / denom
            if 1e-12 < t < 1 - 1e-12 and 1e-12 < u < 1 - 1e-12:
                return False
    return True


def inward_normal_at(polygon: np.ndarray, point, tol: float = 1e-7) -> np.ndarray:
    """Unit inward normal at a boundary point.

    Points on an edge interior get the edge normal; points within ``tol`` of a
    vertex get the normalized bisector of the two adjacent edge normals.
    """
    p = _as_point(point)
    n = len(polygon)
    # vertex case first: bisector of adjacent inward normals
    for i in range(n):
        if np.linalg.norm(p - polygon[i]) <= tol:
            prev_edge = polygon[i] - polygon[(i - 1) % n]
            next_edge = polygon[(i + 1) % n] - polygon[i]
            n1 = _edge_inward_normal(prev_edge)
            n2 = _edge_inward_normal(next_edge)
            bis = n1 + n2
            norm = np.linalg.norm(bis)
            if norm < _EPS:
                raise GeometryError("degenerate vertex normal (straight spike)")
            return bis / norm
    for i in range(n):
        a, b = polygon[i], polygon[(i + 1) % n]
        d = b - a
        L2 = d @ d
        if L2 < _EPS:
            continue
        t = float(np.clip((p - a) @ d / L2, 0.0, 1.0))
        if np.linalg.norm(p - (a + t * d)) <= tol:
            return _edge_inward_normal(d)
    raise GeometryError(f"point {p} is not on the polygon boundary")


def _edge_inward_normal(edge_vec: np.ndarray) -> np.ndarray:
    # CCW polygon: interior lies to the left of each directed edge
    n = ccw90(edge_vec)
    return n / np.linalg.norm(n)


def _line_boundary_hits(polygon: np.ndarray, origin: np.ndarray, direction: np.ndarray):
    """Signed line parameters t where origin + t*direction crosses the boundary.

    Each crossing is counted once (edge parameter half-open at the far vertex);
    crossings are deduplicated within 1e-12 in t.
    """
    hits = []
    n = len(polygon)
    for i in range(n):
        a, b = polygon[i], polygon[(i + 1) % n]
        d = b - a
        denom = _cross(direction, d)
        if abs(denom) < _EPS:
            continue
        rel = a - origin
        t = _cross(rel, d) / denom
        s = _cross(rel, direction) / denom
        if -1e-12 <= s < 1.0 - 1e-12:
            hits.append(float(t))
    hits.sort()
    dedup = []
    for t in hits:
        if not dedup or abs(t - dedup[-1]) > 1e-12:
            dedup.append(t)
    return dedup


def ray_exit_point(polygon: np.ndarray, origin: np.ndarray, direction: np.ndarray,
                   min_t: float = 1e-9):
    """Nearest boundary crossing strictly ahead of ``origin`` along the ray."""
    ts = [t for t in _line_boundary_hits(polygon, origin, direction) if t > min_t]
    if not ts:
        return None
    return origin + ts[0] * direction


def jaw_contact_points(polygon: np.ndarray, point, closing_dir):
    """Outermost boundary crossings of the closing line through ``point``.

    Long parallel jaws approach from both sides, so they land on the extreme
    crossings even where the section is locally concave. Returns (a, b) with
    a on the negative side of the line, or None if the line does not cross
    the boundary on both sides of ``point``.
    """
    origin = _as_point(point)
    direction = np.asarray(closing_dir, dtype=float)
    ts = _line_boundary_hits(polygon, origin, direction)
    pos = [t for t in ts if t > 1e-9]
    neg = [t for t in ts if t < -1e-9]
    if not pos or not neg:
        return None
    return origin + min(neg) * direction, origin + max(pos) * direction


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ObjectModel:
    """A rigid object: uniform-density CCW polygon plus point-mass attachments.

    Attributes
    ----------
    polygon : (N, 2) array, CCW order, meters
    body_mass : float
        Mass of the uniform lamina, kg.
    attachments : tuple of ((x, y), kg)
        Point masses fixed to the body, inside or on the polygon.
    name : str
    """

    polygon: np.ndarray
    body_mass: float
    attachments: tuple = ()
    name: str = "object"

    def __post_init__(self):
        poly = np.asarray(self.polygon, dtype=float)
        if poly.ndim != 2 or poly.shape[1] != 2 or len(poly) < 3:
            raise GeometryError("polygon must be an (N>=3, 2) array")
        if signed_area(poly) <= 0:
            raise GeometryError("polygon must be counterclockwise (signed area > 0)")
        if not _is_simple(poly):
            raise GeometryError("polygon must be simple (non-self-intersecting)")
        if not self.body_mass > 0:
            raise GeometryError("body_mass must be positive")
        attachments = []
        for pt, m in self.attachments:
            pt = _as_point(pt)
            if m < 0:
                raise GeometryError("attachment mass must be >= 0")
            if not point_in_polygon(poly, pt, tol=1e-9):
                raise GeometryError(f"attachment at {pt} lies outside the polygon")
            attachments.append((pt, float(m)))
        poly.setflags(write=False)
        object.__setattr__(self, "polygon", poly)
        object.__setattr__(self, "attachments", tuple(attachments))

    @property
    def total_mass(self) -> float:
        return self.body_mass + sum(m for _, m in self.attachments)

    def translated(self, offset) -> "ObjectModel":
        off = _as_point(offset)
        return ObjectModel(self.polygon + off, self.body_mass,
                           tuple((p + off, m) for p, m in self.attachments), self.name)

    def rotated(self, angle: float, about=(0.0, 0.0)) -> "ObjectModel":
        c, s = np.cos(angle), np.sin(angle)
        R = np.array([[c, -s], [s, c]])
        o = _as_point(about)
        return ObjectModel((self.polygon - o) @ R.T + o, self.body_mass,
                           tuple(((p - o) @ R.T + o, m) for p, m in self.attachments),
                           self.name)

    def mirrored_x(self) -> "ObjectModel":
        """Reflection across the y-axis (x -> -x), vertex order re-wound CCW."""
        poly = self.polygon.copy()
        poly[:, 0] *= -1.0
        return ObjectModel(poly[::-1], self.body_mass,
                           tuple((np.array([-p[0], p[1]]), m) for p, m in self.attachments),
                           self.name)


def canonical_closing_dir(contact_a, contact_b) -> np.ndarray:
    """Unit closing direction with its CCW-perpendicular in the +x half-plane."""
    a, b = _as_point(contact_a), _as_point(contact_b)
    v = b - a
    norm = np.linalg.norm(v)
    if norm < 1e-9:
        raise DegenerateContactError("contacts coincide")
    n = v / norm
    perp = ccw90(n)
    if perp[0] < 0 or (perp[0] == 0 and perp[1] < 0):
        n = -n
    return n


@dataclass(frozen=True)
class GraspPose:
    """A parallel-jaw grasp defined by its two boundary contacts.

    `normal_dir` is the canonicalized closing direction; `friction_coefficient`
    is the coefficient the pose is valid (force-closure) at, also used by the
    physics oracle as the physical surface friction.
    """

    contact_a: np.ndarray
    contact_b: np.ndarray
    center: np.ndarray
    normal_dir: np.ndarray
    depth_z: float
    grip_force: float
    friction_coefficient: float

    def __post_init__(self):
        for name in ("contact_a", "contact_b", "center", "normal_dir"):
            object.__setattr__(self, name, _as_point(getattr(self, name)))
        width = float(np.linalg.norm(self.contact_a - self.contact_b))
        if not 0.0 < width <= GRIPPER_STROKE + 1e-9:
            raise GeometryError(f"grasp width {width:.4f} m outside (0, {GRIPPER_STROKE}]")
        if np.linalg.norm(self.center - 0.5 * (self.contact_a + self.contact_b)) > 1e-9:
            raise GeometryError("center must be the contact midpoint")
        if abs(np.linalg.norm(self.normal_dir) - 1.0) > 1e-9:
            raise GeometryError("normal_dir must be a unit vector")
        lo, hi = GRIP_FORCE_RANGE
        if not lo <= self.grip_force <= hi:
            raise GeometryError(f"grip_force {self.grip_force} N outside [{lo}, {hi}]")
        if not 0.0 <= self.friction_coefficient <= 1.0:
            raise GeometryError("friction_coefficient outside [0, 1]")

    @property
    def width(self) -> float:
        return float(np.linalg.norm(self.contact_a - self.contact_b))

    @property
    def reference_dir(self) -> np.ndarray:
        """CCW-perpendicular of the closing direction (+x half-plane)."""
        return ccw90(self.normal_dir)

    def with_friction(self, mu: float) -> "GraspPose":
        return replace(self, friction_coefficient=float(mu))

    def with_force(self, grip_force: float) -> "GraspPose":
        return replace(self, grip_force=float(grip_force))


def grasp_from_contacts(contact_a, contact_b, depth_z: float, grip_force: float,
                        friction_coefficient: float) -> GraspPose:
    """Build a GraspPose with canonical closing direction and midpoint center."""
    a, b = _as_point(contact_a), _as_point(contact_b)
    return GraspPose(a, b, 0.5 * (a + b), canonical_closing_dir(a, b),
                     float(depth_z), float(grip_force), float(friction_coefficient))


@dataclass(frozen=True)
class BoundaryPair:
    """Boundary exits of the reference line through a grasp center.

    ``a`` lies in the +reference direction (the `d > 0` side), ``a_prime``
    opposite.
    """

    a: np.ndarray
    a_prime: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "a", _as_point(self.a))
        object.__setattr__(self, "a_prime", _as_point(self.a_prime))


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def center_of_mass(obj: ObjectModel) -> np.ndarray:
    """Mass-weighted COM of the uniform body and its attachments."""
    com = polygon_centroid(obj.polygon) * obj.body_mass
    total = obj.body_mass
    for pt, m in obj.attachments:
        com = com + pt * m
        total += m
    return com / total


def signed_com_offset(obj: ObjectModel, grasp: GraspPose) -> float:
    """Signed distance from grasp center to the COM along the reference line.

    Positive means the COM lies on the `a` side of the boundary pair.
    """
    return float((center_of_mass(obj) - grasp.center) @ grasp.reference_dir)


def boundary_intersections(obj: ObjectModel, grasp: GraspPose) -> BoundaryPair:
    """Nearest boundary exits on each side of the grasp center.

    The probe line runs through ``grasp.center`` along ``grasp.reference_dir``
    (perpendicular to the closing line). Non-convex extra crossings resolve to
    the nearest exit per side.
    """
    if not point_in_polygon(obj.polygon, grasp.center, tol=1e-12):
        raise NoIntersectionError("grasp center lies outside the object")
    perp = grasp.reference_dir
    ts = _line_boundary_hits(obj.polygon, grasp.center, perp)
    pos = [t for t in ts if t > 1e-12]
    neg = [t for t in ts if t < -1e-12]
    if not pos or not neg:
        raise NoIntersectionError("reference line does not exit on both sides")
    t_a = min(pos)
    t_ap = max(neg)
    return BoundaryPair(a=grasp.center + t_a * perp, a_prime=grasp.center + t_ap * perp)


def is_force_closure(obj: ObjectModel, contact_a, contact_b,
                     friction_coefficient: float) -> bool:
    """Antipodal test: closing line inside both contacts' friction cones.

    The cone half-angle is atan(mu) about the inward boundary normal; the test
    is inclusive within a 1e-9 cosine tolerance so a zero-friction grasp on
    exactly parallel edges passes.
    """
    a, b = _as_point(contact_a), _as_point(contact_b)
    if not 0.0 <= friction_coefficient <= 1.0:
        raise GeometryError("friction_coefficient outside [0, 1]")
    v = b - a
    dist = np.linalg.norm(v)
    if dist < 1e-9:
        raise DegenerateContactError("contacts coincide")
    u = v / dist
    cos_limit = 1.0 / np.sqrt(1.0 + friction_coefficient ** 2)
    n_a = inward_normal_at(obj.polygon, a)
    n_b = inward_normal_at(obj.polygon, b)
    return bool((u @ n_a) >= cos_limit - 1e-9 and (-u @ n_b) >= cos_limit - 1e-9)


def minimal_friction_step(obj: ObjectModel, contact_a, contact_b) -> float | None:
    """Smallest sweep step (0, 0.2, ..., 1.0) at which the pair is antipodal."""
    for k in range(6):
        mu = k * FRICTION_STEP
        if is_force_closure(obj, contact_a, contact_b, mu):
            return mu
    return None


def sample_antipodal_grasps(obj: ObjectModel, n_target: int, table_depth: float,
                            rng_seed, *, grip_force_range=GRIP_FORCE_RANGE,
                            object_height: float = 0.03,
                            max_tries_per_step: int = 2000) -> list[GraspPose]:
    """Sample force-closure contact pairs with a friction sweep.

    The friction coefficient starts at 0 and rises in 0.2 steps until at least
    ``n_target`` poses have accumulated (or the budget at 1.0 is spent, raising
    SamplerExhaustedError). A candidate pair is a boundary point plus the exit
    of its inward-normal ray. Each pose records the smallest sweep step at
    which it is force-closure, and a depth sampled uniformly between the table
    and the grasp center's top surface.
    """
    if n_target < 1:
        raise GeometryError("n_target must be >= 1")
    rng = as_rng(rng_seed)
    total_len = perimeter(obj.polygon)
    poses: list[GraspPose] = []
    seen: set = set()
    f_lo, f_hi = grip_force_range
    for k in range(6):
        mu_step = k * FRICTION_STEP
        tries = 0
        while len(poses) < n_target and tries < max_tries_per_step:
            tries += 1
            s = rng.uniform(0.0, total_len)
            a = point_at_arclength(obj.polygon, s)
            try:
                n_in = inward_normal_at(obj.polygon, a)
            except GeometryError:
                continue
            b = ray_exit_point(obj.polygon, a, n_in)
            if b is None:
                continue
            width = float(np.linalg.norm(b - a))
            if not 1e-6 < width <= GRIPPER_STROKE:
                continue
            key = (round(a[0], 6), round(a[1], 6), round(b[0], 6), round(b[1], 6))
            if key in seen:
                continue
            try:
                passed = is_force_closure(obj, a, b, mu_step)
            except DegenerateContactError:
                continue
            if not passed:
                continue
            min_step = minimal_friction_step(obj, a, b)
            depth_lo = table_depth - object_height
            pose = grasp_from_contacts(
                a, b,
                depth_z=float(rng.uniform(depth_lo, table_depth)),
                grip_force=float(rng.uniform(f_lo, f_hi)),
                friction_coefficient=min_step if min_step is not None else mu_step,
            )
            seen.add(key)
            poses.append(pose)
        if len(poses) >= n_target:
            return poses[:n_target]
    raise SamplerExhaustedError(
        f"found {len(poses)} of {n_target} force-closure poses at friction 1.0")


# ---------------------------------------------------------------------------
# Raster stand-in for depth-image segmentation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RasterGrid:
    """Top-down occupancy grid; ``occupancy[i, j]`` covers cell (i, j) with
    world center ``origin + (i + 0.5, j + 0.5) * cell``."""

    occupancy: np.ndarray   # (nx, ny) bool
    origin: np.ndarray      # world coords of the grid's min corner
    cell: float

    def cell_centers(self) -> np.ndarray:
        idx = np.argwhere(self.occupancy)
        return self.origin + (idx + 0.5) * self.cell

    def centroid(self) -> np.ndarray:
        """Mean world position of the filled cells (the visual-center stand-in)."""
        centers = self.cell_centers()
        if len(centers) == 0:
            raise GeometryError("empty occupancy grid")
        return centers.mean(axis=0)

    @property
    def area(self) -> float:
        return float(self.occupancy.sum()) * self.cell ** 2


def rasterize_and_segment(obj: ObjectModel, cell: float):
    """Occupancy grid plus a marching-squares boundary polyline.

    Returns ``(RasterGrid, polyline)`` where the polyline is an (M, 2) world
    coordinate array tracing the largest connected boundary. Raises
    CellTooCoarseError when the raster misrepresents the polygon (empty,
    fragmented into several components, or with area off by more than 10%).
    """
    if cell <= 0:
        raise GeometryError("cell size must be positive")
    poly = obj.polygon
    lo = poly.min(axis=0)
    hi = poly.max(axis=0)
    nx = max(1, int(np.ceil((hi[0] - lo[0]) / cell - 1e-9)))
    ny = max(1, int(np.ceil((hi[1] - lo[1]) / cell - 1e-9)))
    xs = lo[0] + (np.arange(nx) + 0.5) * cell
    ys = lo[1] + (np.arange(ny) + 0.5) * cell
    occ = np.zeros((nx, ny), dtype=bool)
    for i, x in enumerate(xs):
        for j, y in enumerate(ys):
            occ[i, j] = point_in_polygon(poly, (x, y), tol=0.0)
    _check_raster_fidelity(occ, cell, abs(signed_area(poly)))
    grid = RasterGrid(occupancy=occ, origin=lo.copy(), cell=float(cell))

    padded = np.zeros((nx + 2, ny + 2), dtype=float)
    padded[1:-1, 1:-1] = occ.astype(float)
    contours = measure.find_contours(padded, level=0.5)
    if not contours:
        raise CellTooCoarseError("no boundary traced; polygon thinner than the grid")
    contour = max(contours, key=len)
    polyline = lo + (contour - 1.0 + 0.5) * cell
    return grid, polyline


def _check_raster_fidelity(occ: np.ndarray, cell: float, true_area: float):
    if not occ.any():
        raise CellTooCoarseError("polygon does not cover any cell center")
    _, n_components = ndimage.label(occ)
    if n_components != 1:
        raise CellTooCoarseError(
            f"raster splits into {n_components} components; cell too coarse")
    raster_area = occ.sum() * cell * cell
    rel_err = abs(raster_area - true_area) / true_area
    if rel_err > 0.10:
        raise CellTooCoarseError(
            f"raster area off by {rel_err:.1%}; cell too coarse for this shape")


# Convenience constructors -------------------------------------------------

def rectangle(width: float, height: float, origin=(0.0, 0.0)) -> np.ndarray:
    """CCW rectangle [ox, ox+width] x [oy, oy+height]."""
    ox, oy = origin
    return np.array([[ox, oy], [ox + width, oy],
                     [ox + width, oy + height], [ox, oy + height]])


def regular_polygon(n: int, radius: float, center=(0.0, 0.0)) -> np.ndarray:
    ang = 2.0 * np.pi * np.arange(n) / n
    return np.stack([center[0] + radius * np.cos(ang),
                     center[1] + radius * np.sin(ang)], axis=1)
