"""Morse complexes by counting flow lines, plus relative complexes and
continuation maps.

Counting strategy for a pair x -> y with index drop one: shoot from the
unstable sphere of x, track the closest approach to y and the signed
offset w along y's unstable directions there, isolate sign changes of w by
bisection on the sphere parameter, then verify each candidate by strict
convergence into y's ball.  Every count is recomputed at doubled shooting
resolution; any discrepancy raises instead of returning silently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .complexes import GradedComplex, RING_Z, RING_Z2, homology, split_complex
from .errors import (
    AdmissibilityError,
    CountingIncompleteError,
    CountInstabilityError,
    GeometryError,
    InternalInconsistencyError,
)
from .geometry.flow import (
    CONVERGED,
    direction_point,
    fixed_time_flow,
    flow,
    orientation_sign,
    orthonormalize,
    parallel_frame,
    sphere_directions,
    transport_frame,
)

DEFAULT_RHO = 0.02
DEFAULT_K_CIRCLE = 48
DEFAULT_K_SPHERE = 160


# -- approach data --------------------------------------------------------------

@dataclass
class Approach:
    """Closest pass of one trajectory to one target critical point."""

    direction: np.ndarray
    limit_name: str          # strict limit, or None if unresolved
    min_dist: float
    w: np.ndarray            # offsets along the target's unstable frame
    point: np.ndarray        # closest-approach location

    @property
    def hit(self):
        return self.limit_name is not None


def _shoot(system, x_cp, u, rho, y_cp):
    start = direction_point(system, x_cp, rho, u)
    res = flow(system, start, +1, record=False,
               approach_targets=[y_cp.name], loose=True)
    if res.status != CONVERGED:
        raise CountingIncompleteError(
            "trajectory from %s (direction %s) did not resolve"
            % (x_cp.name, np.array2string(u, precision=3)))
    dist, _t, pt = res.closest[y_cp.name]
    disp = system.manifold.displacement(y_cp.point, pt)
    w = y_cp.unstable_frame.T @ disp
    return Approach(direction=np.asarray(u, dtype=float),
                    limit_name=res.limit.name, min_dist=dist, w=w, point=pt)


def refine_scalar_samples(eval_fn, t_lo, t_hi, grid, jump=0.5,
                          max_extra=500, min_dt=1e-9):
    """Sample a scalar on [t_lo, t_hi], subdividing fast swings.

    Wrapped offsets can sweep through zero and back inside one interval
    (e.g. when an auxiliary flow compresses the curve), so intervals whose
    values differ by more than ``jump`` are split until resolved.  Genuine
    discontinuities (antipodal wraps) stop at ``min_dt`` and surface as
    sign changes that downstream acceptance rejects.
    """
    ts = [float(t) for t in np.linspace(t_lo, t_hi, grid + 1)]
    ws = [float(eval_fn(t)) for t in ts]
    extra = 0
    i = 0
    while i < len(ts) - 1:
        if abs(ws[i + 1] - ws[i]) > jump and (ts[i + 1] - ts[i]) > min_dt:
            if extra >= max_extra:
                raise CountingIncompleteError(
                    "sample refinement budget exhausted; discriminator "
                    "varies too quickly")
            tm = 0.5 * (ts[i] + ts[i + 1])
            ts.insert(i + 1, tm)
            ws.insert(i + 1, float(eval_fn(tm)))
            extra += 1
        else:
            i += 1
    return ts, ws


def _illinois_root(fn, lo, hi, w_lo, w_hi, tol_x, max_iter=90):
    """Safeguarded regula falsi on a bracketed sign change.

    ``fn(x)`` returns (w, payload); a non-None payload short-circuits (the
    evaluation hit the target exactly).  Returns (root, payload or None).
    """
    flo, fhi = w_lo, w_hi
    side = 0
    for _ in range(max_iter):
        if hi - lo <= tol_x:
            break
        if fhi != flo:
            mid = hi - fhi * (hi - lo) / (fhi - flo)
            pad = 0.02 * (hi - lo)
            if not (lo + pad <= mid <= hi - pad):
                mid = 0.5 * (lo + hi)
        else:
            mid = 0.5 * (lo + hi)
        fm, payload = fn(mid)
        if payload is not None:
            return mid, payload
        if (fm < 0) == (flo < 0):
            lo, flo = mid, fm
            if side == -1:
                fhi *= 0.5
            side = -1
        else:
            hi, fhi = mid, fm
            if side == +1:
                flo *= 0.5
            side = +1
    return 0.5 * (lo + hi), None


def _verify_connection(system, x_cp, y_cp, u, rho):
    """Strict test: the trajectory in direction u must converge into y."""
    start = direction_point(system, x_cp, rho, u)
    res = flow(system, start, +1, record=True)
    if res.status == CONVERGED and res.limit.name == y_cp.name:
        return res
    return None


def connection_sign(system, x_cp, y_cp, u, rho, flow_result=None):
    """Sign of one isolated flow line from x to y.

    Transports the ordered unstable frame of x along the trajectory and
    compares it, near y, against (unstable frame of y, then the flow
    direction); the determinant's sign is the contribution.
    """
    if flow_result is None:
        flow_result = _verify_connection(system, x_cp, y_cp, u, rho)
        if flow_result is None:
            raise InternalInconsistencyError("sign requested for a non-connection")
    man = system.manifold
    pts = flow_result.points
    times = flow_result.times
    # truncate the path at the first point near y where frames are compared
    frame_radius = max(100.0 * system.tol.eps_conv, 1e-4)
    cut = len(pts) - 1
    for i in range(len(pts)):
        if man.distance(pts[i], y_cp.point) <= frame_radius:
            cut = i
            break
    q = pts[cut]
    moved = transport_frame(man, system.field, times[:cut + 1],
                            pts[:cut + 1], x_cp.unstable_frame)
    v = system.field(q)
    speed = np.linalg.norm(v)
    if speed < 1e-14:
        raise GeometryError("flow direction vanished before reaching y")
    ref_cols = [parallel_frame(man, q, y_cp.unstable_frame)[:, j]
                for j in range(y_cp.index)] if y_cp.index else []
    ref_cols.append(v / speed)
    ref = orthonormalize(np.stack(ref_cols, axis=1))
    return orientation_sign(moved, ref)


# -- connection finding ----------------------------------------------------------

def _bisect_circle(system, x_cp, y_cp, rho, a0, a1, w0, w1, frame_pair,
                   tol_angle=1e-13):
    e1, e2 = frame_pair

    def udir(a):
        return math.cos(a) * e1 + math.sin(a) * e2

    def eval_angle(a):
        app = _shoot(system, x_cp, udir(a), rho, y_cp)
        if app.limit_name == y_cp.name:
            return 0.0, udir(a)
        return (float(app.w[0]) if app.w.size else 0.0), None

    root, payload = _illinois_root(eval_angle, a0, a1, w0, w1, tol_angle)
    return payload if payload is not None else udir(root)


def _find_connections_d1(system, x_cp, y_cp, rho):
    dirs = sphere_directions(1, 2)
    out = []
    for u in dirs:
        res = _verify_connection(system, x_cp, y_cp, u, rho)
        if res is not None:
            out.append(np.asarray(u, dtype=float))
    return out


def _find_connections_d2(system, x_cp, y_cp, rho, k):
    e1 = np.array([1.0, 0.0])
    e2 = np.array([0.0, 1.0])
    angles = 0.5377156339 + 2.0 * np.pi * np.arange(k) / k
    apps = []
    for a in angles:
        u = math.cos(a) * e1 + math.sin(a) * e2
        apps.append(_shoot(system, x_cp, u, rho, y_cp))
    candidates = []
    for j in range(k):
        a0, a1 = angles[j], angles[(j + 1) % k]
        if j + 1 == k:
            a1 += 2.0 * np.pi
        w0 = float(apps[j].w[0])
        w1 = float(apps[(j + 1) % k].w[0])
        if apps[j].limit_name == y_cp.name:
            candidates.append(apps[j].direction)
            continue
        if w0 == 0.0 or w1 == 0.0:
            continue
        if w0 * w1 < 0:
            candidates.append(_bisect_circle(system, x_cp, y_cp, rho,
                                             a0, a1, w0, w1, (e1, e2)))
    return _dedupe_verified(system, x_cp, y_cp, rho, candidates)


def _find_connections_d3(system, x_cp, y_cp, rho, k):
    dirs = sphere_directions(3, k)
    apps = [_shoot(system, x_cp, u, rho, y_cp) for u in dirs]
    dists = np.array([a.min_dist for a in apps])
    # local minima of the approach distance over the direction lattice
    spacing = 2.0 / math.sqrt(k)
    seeds = []
    for i in range(k):
        nbrs = [j for j in range(k)
                if j != i and np.linalg.norm(dirs[j] - dirs[i]) < 2.5 * spacing]
        if all(dists[i] <= dists[j] for j in nbrs) and dists[i] < 0.8:
            seeds.append(i)
    candidates = []
    for i in seeds:
        u = _newton_direction(system, x_cp, y_cp, rho, dirs[i])
        if u is not None:
            candidates.append(u)
    return _dedupe_verified(system, x_cp, y_cp, rho, candidates)


def _newton_direction(system, x_cp, y_cp, rho, u0, max_iter=40):
    """Solve w(u) = 0 on the direction sphere by damped FD Newton."""
    d = len(u0)
    m = y_cp.index
    u = np.asarray(u0, dtype=float)
    u /= np.linalg.norm(u)

    def chart(u_base):
        # orthonormal tangent of the sphere S^{d-1} at u_base
        basis = []
        for i in range(d):
            e = np.zeros(d)
            e[i] = 1.0
            v = e - np.dot(e, u_base) * u_base
            basis.append(v)
        b = np.stack(basis, axis=1)
        q, r = np.linalg.qr(b)
        cols = [j for j in range(d) if abs(r[j, j]) > 1e-9]
        return q[:, cols[:d - 1]]

    def wfun(uu):
        return _shoot(system, x_cp, uu, rho, y_cp).w

    w = wfun(u)
    for _ in range(max_iter):
        if np.linalg.norm(w) < 1e-11:
            return u
        T = chart(u)
        eps = max(1e-7, 1e-4 * np.linalg.norm(w))
        J = np.zeros((m, T.shape[1]))
        for j in range(T.shape[1]):
            up = u + eps * T[:, j]
            up /= np.linalg.norm(up)
            um = u - eps * T[:, j]
            um /= np.linalg.norm(um)
            J[:, j] = (wfun(up) - wfun(um)) / (2 * eps)
        try:
            step = np.linalg.lstsq(J, -w, rcond=None)[0]
        except np.linalg.LinAlgError:
            return None
        if np.linalg.norm(step) > 0.8:
            step *= 0.8 / np.linalg.norm(step)
        improved = False
        for damp in (1.0, 0.5, 0.25, 0.1):
            u_new = u + T @ (damp * step)
            u_new /= np.linalg.norm(u_new)
            w_new = wfun(u_new)
            if np.linalg.norm(w_new) < np.linalg.norm(w):
                u, w = u_new, w_new
                improved = True
                break
        if not improved:
            return None
    return u if np.linalg.norm(w) < 1e-9 else None


def _dedupe_verified(system, x_cp, y_cp, rho, candidates, min_angle=1e-5):
    out = []
    for u in candidates:
        u = np.asarray(u, dtype=float)
        u = u / np.linalg.norm(u)
        if any(np.linalg.norm(u - v) < min_angle for v in out):
            continue
        if _verify_connection(system, x_cp, y_cp, u, rho) is not None:
            out.append(u)
    return out


def find_connections(system, x_cp, y_cp, rho=DEFAULT_RHO, k=None):
    """Directions on the unstable sphere of x whose flow lines reach y."""
    d = x_cp.index
    if d == 0:
        return []
    if d == 1:
        return _find_connections_d1(system, x_cp, y_cp, rho)
    if d == 2:
        return _find_connections_d2(system, x_cp, y_cp, rho,
                                    k or DEFAULT_K_CIRCLE)
    if d == 3:
        return _find_connections_d3(system, x_cp, y_cp, rho,
                                    k or DEFAULT_K_SPHERE)
    raise GeometryError(
        "connection search beyond three-dimensional unstable spheres is "
        "not implemented")


def count_flow_lines(system, x_cp, y_cp, rho=DEFAULT_RHO, k=None,
                     ring=RING_Z, stability=True):
    """Signed (or mod-2) number of flow lines between index-adjacent points."""
    if isinstance(x_cp, str):
        x_cp = system.point(x_cp)
    if isinstance(y_cp, str):
        y_cp = system.point(y_cp)
    if x_cp.index - y_cp.index != 1:
        raise ValueError("count requires index difference one, got %d - %d"
                         % (x_cp.index, y_cp.index))

    def run(kk):
        dirs = find_connections(system, x_cp, y_cp, rho=rho, k=kk)
        if ring == RING_Z2:
            return len(dirs) % 2, len(dirs)
        total = 0
        for u in dirs:
            total += connection_sign(system, x_cp, y_cp, u, rho)
        return total, len(dirs)

    base_k = k or (DEFAULT_K_CIRCLE if x_cp.index == 2 else DEFAULT_K_SPHERE)
    count, hits = run(base_k if x_cp.index >= 2 else None)
    if stability and x_cp.index >= 2:
        count2, hits2 = run(2 * base_k)
        if count2 != count or hits2 != hits:
            raise CountInstabilityError(
                "count %s->%s changed under resolution doubling "
                "(%d/%d lines -> %d/%d)"
                % (x_cp.name, y_cp.name, count, hits, count2, hits2))
    return count


def boundary_operator(system, ring=RING_Z, rho=DEFAULT_RHO, k=None,
                      stability=True):
    """Assemble the Morse complex; verifies the square-zero identity."""
    gens = {}
    for cp in system.critical_points:
        gens.setdefault(cp.index, []).append(cp.name)
    gens = {p: tuple(v) for p, v in gens.items()}
    maps = {}
    for p in sorted(gens):
        if (p - 1) not in gens:
            continue
        rows = gens[p - 1]
        cols = gens[p]
        mat = np.zeros((len(rows), len(cols)), dtype=object)
        for j, cname in enumerate(cols):
            for i, rname in enumerate(rows):
                mat[i, j] = count_flow_lines(system, cname, rname, rho=rho,
                                             k=k, ring=ring,
                                             stability=stability)
        maps[p] = mat
    return GradedComplex(gens, maps, ring=ring)


def morse_homology(system, ring=RING_Z, **kw):
    return homology(boundary_operator(system, ring=ring, **kw))


# -- relative complexes -----------------------------------------------------------

@dataclass
class SublevelRegion:
    """Open region {aux < level} used for relative complexes."""

    aux: object
    level: float
    name: str = "region"

    def contains(self, x):
        return self.aux(x) < self.level

    def signed_coordinate(self, x):
        return self.aux(x) - self.level


def empty_region():
    return SublevelRegion(aux=lambda x: 1.0, level=0.0, name="empty")


def band_region(c):
    """{ last-coordinate^2 < c } on an embedded sphere."""
    return SublevelRegion(aux=lambda x: float(x[-1] ** 2), level=float(c),
                          name="band<%g" % c)


def cap_region(c):
    """{ last coordinate < c } on an embedded sphere."""
    return SublevelRegion(aux=lambda x: float(x[-1]), level=float(c),
                          name="cap<%g" % c)


def _aux_gradient(region, x, eps=1e-6):
    g = np.zeros(len(x))
    for i in range(len(x)):
        xp = np.array(x, dtype=float)
        xm = np.array(x, dtype=float)
        xp[i] += eps
        xm[i] -= eps
        g[i] = (region.aux(xp) - region.aux(xm)) / (2 * eps)
    return g


def check_region_admissible(system, region, n_probes=40, seed=0,
                            margin=1e-3, trans_tol=1e-6):
    """Verify the outward-gradient condition on the region boundary.

    Flows from random seeds; every crossing of {aux = level} must be
    transverse and entering (descending flows may only move into the
    region).  Critical points must stay clear of the boundary.
    """
    man = system.manifold
    for cp in system.critical_points:
        if abs(region.signed_coordinate(cp.point)) < margin:
            raise AdmissibilityError(
                "critical point %s lies within %g of the region boundary"
                % (cp.name, margin))
    rng = np.random.default_rng(seed)
    crossings = 0
    for _ in range(n_probes):
        x = man.random_point(rng)
        res = flow(system, x, +1, record=True)
        vals = [region.signed_coordinate(p) for p in res.points]
        for i in range(len(vals) - 1):
            if vals[i] == 0.0:
                continue
            if vals[i] * vals[i + 1] < 0:
                crossings += 1
                if vals[i] < 0:  # leaving the region along a descending flow
                    raise AdmissibilityError(
                        "gradient points into the region at a boundary "
                        "crossing (flow exited %s)" % region.name)
                mid = man.project(0.5 * (res.points[i] + res.points[i + 1]))
                g = man.tangent_project(mid, system.grad(mid))
                a = man.tangent_project(mid, _aux_gradient(region, mid))
                if float(np.dot(g, a)) < trans_tol:
                    raise AdmissibilityError(
                        "gradient not outward-transverse on the boundary "
                        "of %s" % region.name)
    return crossings


def relative_complex(system, region, ring=RING_Z, check=True, **kw):
    """Split the Morse complex along the region; returns a RelativePair."""
    if check and region.name != "empty":
        check_region_admissible(system, region)
    total = boundary_operator(system, ring=ring, **kw)
    members = {cp.name: region.contains(cp.point)
               for cp in system.critical_points}
    return split_complex(total, lambda p, name: members[name])


# -- continuation ------------------------------------------------------------------

def _systems_identical(sys_f, sys_g, samples=8, seed=0, tol=1e-9):
    if sys_f is sys_g:
        return True
    if sys_f.manifold.coord_dim != sys_g.manifold.coord_dim:
        return False
    cf, cg = sys_f.critical_points, sys_g.critical_points
    if len(cf) != len(cg):
        return False
    for a, b in zip(cf, cg):
        if a.index != b.index:
            return False
        if sys_f.manifold.distance(a.point, b.point) > tol:
            return False
    rng = np.random.default_rng(seed)
    for _ in range(samples):
        x = sys_f.manifold.random_point(rng)
        if np.linalg.norm(sys_f.field(x) - sys_g.field(x)) > tol:
            return False
    return True


def approach_from_point(system, pt, target_cp, loose=True):
    """(strict limit name, closest distance, unstable offsets) of a flow."""
    res = flow(system, pt, +1, record=False,
               approach_targets=[target_cp.name], loose=loose)
    if res.status != CONVERGED:
        raise CountingIncompleteError("classification flow unresolved")
    dist, _t, loc = res.closest[target_cp.name]
    disp = system.manifold.displacement(target_cp.point, loc)
    w = target_cp.unstable_frame.T @ disp
    return res.limit.name, float(dist), w


def point_at_time(system, res, t):
    """Point of a recorded trajectory at an intermediate time.

    Re-integrates from the preceding node, so the result sits on the true
    trajectory to integrator accuracy (linear interpolation would spoil the
    bisections that rely on this).
    """
    i = int(np.searchsorted(res.times, t, side="right") - 1)
    i = max(0, min(i, len(res.times) - 1))
    dt = float(t - res.times[i])
    if dt <= 0:
        return res.points[i]
    seg = fixed_time_flow(system, res.points[i], dt, record=False)
    return seg.x_end


def stable_coorientation_frames(sys_g, m2_cp, z, approach_tol=None):
    """Frames (U, S) of W^u/W^s eigendata of m2 carried back to z.

    The point z must flow into m2's neighborhood under sys_g; the
    eigenframes of m2 are parallel-copied at the trajectory's closest pass
    and transported backward to z.  U coorients W^s(m2; g) there, S spans
    its tangent.  (Landing exactly on m2 is numerically unreachable when
    the unstable rate beats the stable one, hence closest-pass anchoring.)
    """
    man = sys_g.manifold
    n = man.dim
    if approach_tol is None:
        approach_tol = 0.5 * sys_g.tol.detect_radius
    res_g = flow(sys_g, z, +1, record=True, approach_targets=[m2_cp.name])
    dists = man.distances(m2_cp.point, res_g.points)
    cut = int(np.argmin(dists))
    if float(dists[cut]) > approach_tol:
        raise InternalInconsistencyError(
            "point misses %s by %.3g" % (m2_cp.name, dists[cut]))
    rev_pts = res_g.points[cut::-1]
    rev_times = (res_g.times[cut] - res_g.times[:cut + 1])[::-1]

    def neg_field(x):
        return -sys_g.field(x)

    U_g = (transport_frame(man, neg_field, rev_times, rev_pts,
                           m2_cp.unstable_frame)
           if m2_cp.index else np.zeros((man.coord_dim, 0)))
    S_g = (transport_frame(man, neg_field, rev_times, rev_pts,
                           m2_cp.stable_frame)
           if m2_cp.index < n else np.zeros((man.coord_dim, 0)))
    return U_g, S_g


def transverse_sign(a_frame, u_frame, s_frame):
    """Sign comparing two complements of a subspace spanned by s_frame."""
    if s_frame.shape[1]:
        def perp(fr):
            return orthonormalize(fr - s_frame @ (s_frame.T @ fr))
        return orientation_sign(perp(a_frame), perp(u_frame))
    return orientation_sign(a_frame, u_frame)


def _hybrid_sign_at(sys_f, sys_g, m_cp, m2_cp, z, f_path,
                    approach_tol=None):
    """Orientation sign at an intersection z of W^u(m; f) with W^s(m2; g).

    ``f_path`` is a recorded f-trajectory from near m ending at z.  The
    transported unstable frame of m is compared against the coorientation
    of W^s(m2; g).
    """
    man = sys_f.manifold
    times, pts = f_path
    A = transport_frame(man, sys_f.field, times, pts, m_cp.unstable_frame)
    U_g, S_g = stable_coorientation_frames(sys_g, m2_cp, z, approach_tol)
    return transverse_sign(A, U_g, S_g)


def _truncated_path(res, t_star, z):
    keep = res.times <= t_star
    times = np.append(res.times[keep], t_star)
    pts = np.concatenate([res.points[keep], z[None, :]], axis=0)
    return times, pts



def continuation(sys_f, sys_g, rho=DEFAULT_RHO, k=None, stability=True):
    """Chain map counting hybrid trajectories W^u(m; f) into W^s(m'; g).

    Returns {degree: matrix} in catalog order.  Identical systems short
    circuit to the identity: with one Morse-Smale system, an equal-index
    intersection W^u(m) with W^s(m') is empty unless m = m', where it is
    the point m itself with positive sign.
    """
    gens_f = {}
    for cp in sys_f.critical_points:
        gens_f.setdefault(cp.index, []).append(cp)
    gens_g = {}
    for cp in sys_g.critical_points:
        gens_g.setdefault(cp.index, []).append(cp)
    if _systems_identical(sys_f, sys_g):
        return {p: np.array(np.eye(len(cps), dtype=int), dtype=object)
                for p, cps in gens_f.items()}
    out = {}
    for p in sorted(gens_f):
        rows = gens_g.get(p, [])
        cols = gens_f[p]
        mat = np.zeros((len(rows), len(cols)), dtype=object)
        for j, m_cp in enumerate(cols):
            for i, m2_cp in enumerate(rows):
                mat[i, j] = _continuation_entry(sys_f, sys_g, m_cp, m2_cp,
                                                rho, k, stability)
        out[p] = mat
    return out


def _continuation_entry(sys_f, sys_g, m_cp, m2_cp, rho, k, stability):
    d = m_cp.index
    n = sys_f.manifold.dim

    def run(kk):
        if d == 0:
            res = flow(sys_g, m_cp.point, +1, record=False)
            if res.status != CONVERGED:
                raise CountingIncompleteError("continuation flow unresolved")
            return 1 if res.limit.name == m2_cp.name else 0
        if d == n:
            res = flow(sys_f, m2_cp.point, -1, record=True)
            if res.status != CONVERGED:
                raise CountingIncompleteError("continuation flow unresolved")
            if res.limit.name != m_cp.name:
                return 0
            pts = res.points[::-1]
            times = (res.times[-1] - res.times)[::-1]
            return _hybrid_sign_at(sys_f, sys_g, m_cp, m2_cp, m2_cp.point,
                                   f_path=(times, pts))
        if d == 1:
            return _crossings_along_unstable_curve(
                sys_f, sys_g, m_cp, m2_cp, kk, rho)
        raise GeometryError(
            "continuation for intermediate indices beyond curves is not "
            "implemented")

    base_k = k or 20
    total = run(base_k)
    if stability and d == 1:
        total2 = run(2 * base_k)
        if total2 != total:
            raise CountInstabilityError(
                "continuation entry %s->%s unstable under refinement"
                % (m_cp.name, m2_cp.name))
    return total


def _crossings_along_unstable_curve(sys_f, sys_g, m_cp, m2_cp, grid, rho):
    """Signed crossings of the 1-dim W^u(m; f) with W^s(m2; g).

    The discriminator along the curve is the signed offset w of the g-flow
    at its closest pass of m2 (strict limits cannot separate the two sides
    of a saddle's stable manifold when both fall to the same minimum).
    """
    total = 0
    for u in sphere_directions(1, 2):
        res = flow(sys_f, direction_point(sys_f, m_cp, rho, u), +1,
                   record=True)
        if res.status != CONVERGED:
            raise CountingIncompleteError("branch flow unresolved")
        strict_hits = []

        def w_at(t):
            pt = point_at_time(sys_f, res, t)
            limit, _dist, w = approach_from_point(sys_g, pt, m2_cp)
            if limit == m2_cp.name and not any(abs(t - s) < 1e-9
                                               for s in strict_hits):
                strict_hits.append(t)
            return float(w[0]) if w.size else 0.0

        ts, ws = refine_scalar_samples(w_at, 0.0, float(res.t_end), grid)
        for t0 in strict_hits:
            z = point_at_time(sys_f, res, t0)
            tp = _truncated_path(res, t0, z)
            total += _hybrid_sign_at(sys_f, sys_g, m_cp, m2_cp, z, tp)
        for (t0, w0), (t1, w1) in zip(zip(ts, ws), list(zip(ts, ws))[1:]):
            if any(t0 <= s <= t1 for s in strict_hits):
                continue
            if w0 == 0.0 or w1 == 0.0 or w0 * w1 > 0:
                continue
            hit = _bisect_w_crossing(sys_f, sys_g, res, t0, t1, w0, w1, m2_cp)
            if hit is None:
                continue
            t_star, z = hit
            tp = _truncated_path(res, t_star, z)
            total += _hybrid_sign_at(sys_f, sys_g, m_cp, m2_cp, z, tp)
    return total


def _bisect_w_crossing(sys_f, sys_g, res, t_lo, t_hi, w_lo, w_hi, m2_cp,
                       tol_t=1e-13):
    """Refine the w sign change along the recorded f-trajectory.

    Accepted when the refined point's g-flow passes well inside the
    detection ball of m2; a sign change of the wrapped offset far from m2
    (antipodal wrap, or a crossing of some other stable manifold) refines
    to an order-one approach distance and is dropped.
    """

    def eval_t(t):
        pt = point_at_time(sys_f, res, t)
        limit, _dist, w = approach_from_point(sys_g, pt, m2_cp)
        if limit == m2_cp.name:
            return 0.0, (t, pt)
        return (float(w[0]) if w.size else 0.0), None

    root, payload = _illinois_root(eval_t, t_lo, t_hi, w_lo, w_hi,
                                   tol_t * max(1.0, abs(t_hi)))
    if payload is not None:
        return payload
    pt = point_at_time(sys_f, res, root)
    _limit, dist, _w = approach_from_point(sys_g, pt, m2_cp)
    if dist <= 0.5 * sys_g.tol.detect_radius:
        return root, pt
    return None
