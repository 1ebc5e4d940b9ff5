"""Staging layout: radial dropoff placement, tiered growth, tree placement.

The core solver places angular coordinates around a hub to minimize squared
deviation from desired angles subject to pairwise separation constraints and
a wrap-around closure. The same solver lays out dropoff zones within a build
phase and sibling staging areas around a parent assembly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .model import PlanParams, ProjectSpec, Transform
from .transport import TransportUnitConfig, payload_points


class StagingError(ValueError):
    pass


@dataclass(frozen=True)
class RadialLayoutProblem:
    desired_angles: np.ndarray  # radians, ascending
    body_radii: np.ndarray  # component circle radii rho_i
    hub_radius: float

    def __post_init__(self):
        th = np.asarray(self.desired_angles, float)
        rho = np.asarray(self.body_radii, float)
        if len(th) != len(rho) or len(th) == 0:
            raise StagingError("need matching, non-empty angle and radius arrays")
        if np.any(rho <= 0):
            raise StagingError("body radii must be positive")
        if self.hub_radius < 0:
            raise StagingError("hub radius must be non-negative")
        if np.any(np.diff(th) < -1e-12):
            raise StagingError("desired angles must be sorted ascending")
        object.__setattr__(self, "desired_angles", th)
        object.__setattr__(self, "body_radii", rho)

    @property
    def half_widths(self) -> np.ndarray:
        rho = self.body_radii
        return np.arcsin(rho / (rho + self.hub_radius))

    def is_feasible(self) -> bool:
        return float(2 * self.half_widths.sum()) <= 2 * math.pi + 1e-12


@dataclass(frozen=True)
class RadialLayoutResult:
    feasible: bool
    angles: np.ndarray | None
    objective: float


def _pava(y: np.ndarray) -> np.ndarray:
    """Isotonic regression (nondecreasing, unit weights) by pool-adjacent-
    violators."""
    n = len(y)
    level = y.astype(float).copy()
    weight = np.ones(n)
    # blocks as (value, weight) merged right-to-left
    vals: list[float] = []
    wts: list[float] = []
    counts: list[int] = []
    for i in range(n):
        v, w, c = float(level[i]), 1.0, 1
        while vals and vals[-1] > v:
            pv, pw, pc = vals.pop(), wts.pop(), counts.pop()
            v = (v * w + pv * pw) / (w + pw)
            w += pw
            c += pc
        vals.append(v)
        wts.append(w)
        counts.append(c)
    out = np.empty(n)
    k = 0
    for v, c in zip(vals, counts):
        out[k:k + c] = v
        k += c
    return out


def solve_radial_layout(problem: RadialLayoutProblem) -> RadialLayoutResult:
    """Least-squares angular placement with separation and wrap-around
    constraints, via a substitution to bounded isotonic regression."""
    theta_hat = problem.desired_angles
    delta = problem.half_widths
    n = len(theta_hat)
    if not problem.is_feasible():
        return RadialLayoutResult(False, None, math.inf)
    if n == 1:
        return RadialLayoutResult(True, theta_hat.copy(), 0.0)

    sep = delta + np.roll(delta, -1)  # sep[i] between component i and i+1 (cyclic)
    cum = np.concatenate([[0.0], np.cumsum(sep[:-1])])
    u_hat = theta_hat - cum
    gap = 2 * math.pi - float(sep.sum())  # admissible spread of u

    u0 = _pava(u_hat)

    def cost(u: np.ndarray) -> float:
        return float(np.sum((u - u_hat) ** 2))

    if u0[-1] - u0[0] <= gap + 1e-15:
        u = u0
    else:
        # range constraint binds: clip the isotonic fit into a width-`gap`
        # band and line-search the band position (convex in the offset)
        def band_cost(t: float) -> float:
            return cost(np.clip(u0, t, t + gap))

        lo = float(u_hat.min()) - gap - 1.0
        hi = float(u_hat.max()) + 1.0
        for _ in range(200):
            m1 = lo + (hi - lo) / 3
            m2 = hi - (hi - lo) / 3
            if band_cost(m1) <= band_cost(m2):
                hi = m2
            else:
                lo = m1
        t = (lo + hi) / 2
        u = np.clip(u0, t, t + gap)

    theta = u + cum
    return RadialLayoutResult(True, theta, cost(u))


@dataclass(frozen=True)
class DropoffZone:
    component_id: str
    phase: int
    position: np.ndarray  # world frame (2,), center of the transport unit circle
    radius: float  # transport unit bounding circle radius
    angle: float  # placement angle relative to the staging center
    tier: int

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, float).reshape(2))


@dataclass
class AssemblyStaging:
    assembly_id: str
    center: np.ndarray  # world frame (2,)
    hub_center_local: np.ndarray  # bounding cylinder center in assembly frame
    final_radius: float  # assembly bounding cylinder radius
    phase_radii: list[float]  # staging radius after each phase layout
    dropoffs: dict[str, DropoffZone]

    @property
    def staging_radius(self) -> float:
        return self.phase_radii[-1] if self.phase_radii else self.final_radius


@dataclass
class StagingPlan:
    assemblies: dict[str, AssemblyStaging]
    part_sources: dict[str, np.ndarray]  # payload-frame origin positions, world
    buffer_radius: float

    def staging_circle(self, assembly_id: str, phase: int) -> tuple[np.ndarray, float]:
        st = self.assemblies[assembly_id]
        return st.center, st.phase_radii[phase - 1]


def _rank_key(rho: float, order: int) -> tuple:
    return (-rho, order)


def layout_phase(
    desired: list[tuple[str, float, float]],  # (component id, desired angle, rho)
    hub_radius: float,
    prev_radius: float,
    phase: int,
) -> tuple[list[DropoffZone], float]:
    """Place one build phase's dropoff zones, tiering outward when a single
    ring cannot hold every component. Returns zones (positions relative to
    the staging center) and the resulting phase staging radius."""
    remaining = list(desired)
    # spatial priority: larger bodies first, stable on input order
    remaining.sort(key=lambda item: (-item[2], item[0]))
    zones: list[DropoffZone] = []
    hub = hub_radius
    tier = 0
    while remaining:
        tier += 1
        prefix: list[tuple[str, float, float]] = []
        total = 0.0
        for item in remaining:
            rho = item[2]
            half = math.asin(rho / (rho + hub)) if hub > 0 or rho > 0 else 0.0
            if prefix and total + 2 * half > 2 * math.pi + 1e-12:
                continue
            total += 2 * half
            prefix.append(item)
        prefix_ids = {cid for cid, _, _ in prefix}
        prefix.sort(key=lambda item: item[1])  # solver wants ascending angles
        problem = RadialLayoutProblem(
            desired_angles=np.array([a for _, a, _ in prefix]),
            body_radii=np.array([r for _, _, r in prefix]),
            hub_radius=hub,
        )
        result = solve_radial_layout(problem)
        if not result.feasible:  # pragma: no cover - prefix chosen feasible
            raise StagingError("infeasible tier despite prefix selection")
        for (cid, _, rho), angle in zip(prefix, result.angles):
            ring = hub + rho
            pos = np.array([ring * math.cos(angle), ring * math.sin(angle)])
            zones.append(DropoffZone(cid, phase, pos, rho, float(angle), tier))
        hub = hub + 2 * max(r for _, _, r in prefix)
        remaining = [item for item in remaining if item[0] not in prefix_ids]
    reach = max((float(np.linalg.norm(z.position)) + z.radius) for z in zones)
    radius = max(prev_radius, hub_radius, reach)
    return zones, radius


def _partial_hull_radius(points_by_phase: dict[int, np.ndarray], upto_phase: int,
                         center: np.ndarray) -> float:
    pts = [p for k, p in points_by_phase.items() if k < upto_phase]
    if not pts:
        return 0.0
    allp = np.vstack(pts)
    return float(np.max(np.linalg.norm(allp[:, :2] - center, axis=1)))


def build_staging_plan(
    project: ProjectSpec,
    transport_configs: dict[str, TransportUnitConfig],
    params: PlanParams,
) -> StagingPlan:
    """Lay out every assembly's per-phase dropoff zones and place the
    assembly tree bottom-up, root centered at the origin."""
    from . import geometry

    buffer = params.buffer_radius
    local: dict[str, AssemblyStaging] = {}
    child_offsets: dict[str, dict[str, np.ndarray]] = {}  # parent -> child -> offset

    def layout_assembly(aid: str) -> AssemblyStaging:
        asm = project.assemblies[aid]
        # bounding geometry of the finished assembly
        pts = payload_points(project, aid)
        cyl = geometry.bounding_cylinder(pts)
        hub_center = cyl.center

        # child subassemblies laid out first (bottom-up)
        for cid, _ in asm.components:
            if project.is_assembly(cid) and cid not in local:
                local[cid] = layout_assembly(cid)

        points_by_phase: dict[int, np.ndarray] = {}
        for phase in asm.build_phases:
            member_pts = []
            for cid in phase.member_ids:
                tf = asm.transform_of(cid)
                member_pts.append(tf.apply(payload_points(project, cid)))
            points_by_phase[phase.index] = np.vstack(member_pts)

        dropoffs: dict[str, DropoffZone] = {}
        phase_radii: list[float] = []
        prev_radius = 0.0
        order = {cid: i for i, (cid, _) in enumerate(asm.components)}
        for phase in asm.build_phases:
            hub = _partial_hull_radius(points_by_phase, phase.index, hub_center)
            desired = []
            for cid in sorted(phase.member_ids, key=order.__getitem__):
                tgt = asm.transform_of(cid).translation[:2] - hub_center
                angle = math.atan2(tgt[1], tgt[0]) if np.linalg.norm(tgt) > 1e-12 else 0.0
                angle %= 2 * math.pi
                rho = transport_configs[cid].bounding_circle.radius
                desired.append((cid, angle, rho))
            zones, radius = layout_phase(desired, hub, prev_radius, phase.index)
            radius = max(radius, cyl.radius)
            for z in zones:
                dropoffs[z.component_id] = z
            phase_radii.append(radius)
            prev_radius = radius

        return AssemblyStaging(
            assembly_id=aid,
            center=np.zeros(2),
            hub_center_local=hub_center,
            final_radius=cyl.radius,
            phase_radii=phase_radii,
            dropoffs=dropoffs,
        )

    local[project.root] = layout_assembly(project.root)

    # bottom-up: lay out each assembly's child staging areas in its own frame
    # and record the radius enclosing the whole subtree, so a child placed at
    # one level can never land inside an ancestor's staging circle
    cluster_radius: dict[str, float] = {}

    def cluster(aid: str) -> float:
        st = local[aid]
        asm = project.assemblies[aid]
        children = [cid for cid, _ in asm.components if project.is_assembly(cid)]
        offsets: dict[str, np.ndarray] = {}
        radius = st.staging_radius
        if children:
            desired = []
            for cid in children:
                rho = cluster(cid) + buffer
                z = st.dropoffs[cid]
                desired.append((cid, z.angle, rho))
            hub = st.staging_radius + buffer
            zones, _ = layout_phase(desired, hub, 0.0, 0)
            for z in zones:
                offsets[z.component_id] = z.position
                radius = max(radius, float(np.linalg.norm(z.position))
                             + cluster_radius[z.component_id])
        child_offsets[aid] = offsets
        cluster_radius[aid] = radius
        return radius

    cluster(project.root)

    # top-down: convert the local offsets into world-frame centers
    def place(aid: str, center: np.ndarray) -> None:
        st = local[aid]
        st.center = center
        st.dropoffs = {
            cid: DropoffZone(z.component_id, z.phase, center + z.position,
                             z.radius, z.angle, z.tier)
            for cid, z in st.dropoffs.items()
        }
        for cid, offset in child_offsets[aid].items():
            place(cid, center + offset)

    place(project.root, np.zeros(2))

    part_sources = _place_part_sources(project, local, transport_configs, params)
    return StagingPlan(assemblies=local, part_sources=part_sources, buffer_radius=buffer)


def _place_part_sources(
    project: ProjectSpec,
    staged: dict[str, AssemblyStaging],
    configs: dict[str, TransportUnitConfig],
    params: PlanParams,
) -> dict[str, np.ndarray]:
    """Raw material source locations: spaced on a ring outside every staging
    circle, deterministic in the seed."""
    site = max(
        float(np.linalg.norm(st.center)) + st.staging_radius + params.buffer_radius
        for st in staged.values()
    )
    part_ids = sorted(project.parts_catalog)
    rng = np.random.default_rng(params.seed)
    start_angle = float(rng.uniform(0, 2 * math.pi))
    sources: dict[str, np.ndarray] = {}
    angle = start_angle
    ring = site + 2 * max(configs[p].bounding_circle.radius for p in part_ids)
    prev_rho = 0.0
    for pid in part_ids:
        cfg = configs[pid]
        rho = cfg.bounding_circle.radius
        if prev_rho > 0:
            angle += 2 * math.asin(min(1.0, (prev_rho + rho) * 1.1 / (2 * ring)))
        # origin of the payload frame so the unit circle sits on the ring
        center = np.array([ring * math.cos(angle), ring * math.sin(angle)])
        sources[pid] = center - cfg.bounding_circle.center[:2]
        prev_rho = rho
        if angle - start_angle > 2 * math.pi - 0.3:  # start a wider ring
            ring += 4 * max(configs[p].bounding_circle.radius for p in part_ids)
            start_angle = angle = angle + 0.3
            prev_rho = 0.0
    return sources


# -- export ------------------------------------------------------------------


def staging_plan_to_jsonable(plan: StagingPlan) -> dict:
    return {
        "buffer_radius": plan.buffer_radius,
        "assemblies": {
            aid: {
                "center": st.center.tolist(),
                "hub_center_local": st.hub_center_local.tolist(),
                "final_radius": st.final_radius,
                "phase_radii": st.phase_radii,
                "dropoffs": {
                    cid: {
                        "phase": z.phase,
                        "position": z.position.tolist(),
                        "radius": z.radius,
                        "angle": z.angle,
                        "tier": z.tier,
                    }
                    for cid, z in sorted(st.dropoffs.items())
                },
            }
            for aid, st in sorted(plan.assemblies.items())
        },
        "part_sources": {pid: pos.tolist() for pid, pos in sorted(plan.part_sources.items())},
    }


def staging_plan_from_jsonable(data: dict) -> StagingPlan:
    assemblies = {}
    for aid, body in data["assemblies"].items():
        assemblies[aid] = AssemblyStaging(
            assembly_id=aid,
            center=np.array(body["center"]),
            hub_center_local=np.array(body["hub_center_local"]),
            final_radius=body["final_radius"],
            phase_radii=list(body["phase_radii"]),
            dropoffs={
                cid: DropoffZone(cid, z["phase"], np.array(z["position"]),
                                 z["radius"], z["angle"], z["tier"])
                for cid, z in body["dropoffs"].items()
            },
        )
    return StagingPlan(
        assemblies=assemblies,
        part_sources={pid: np.array(p) for pid, p in data["part_sources"].items()},
        buffer_radius=data["buffer_radius"],
    )


def staging_plan_to_svg(plan: StagingPlan) -> str:
    """Render staging circles (red), final bounding cylinders (blue), and
    dropoff zones (green) to a standalone SVG document."""
    elements: list[str] = []
    xs: list[float] = []
    ys: list[float] = []

    def circle(cx, cy, r, color, width=0.01, dash=""):
        xs.extend([cx - r, cx + r])
        ys.extend([cy - r, cy + r])
        d = f' stroke-dasharray="{dash}"' if dash else ""
        elements.append(
            f'<circle cx="{cx:.4f}" cy="{-cy:.4f}" r="{r:.4f}" fill="none" '
            f'stroke="{color}" stroke-width="{width}"{d}/>'
        )

    for st in plan.assemblies.values():
        cx, cy = st.center
        for radius in st.phase_radii:
            circle(cx, cy, radius, "red")
        circle(cx, cy, st.final_radius, "blue")
        if plan.buffer_radius > 0:
            circle(cx, cy, st.staging_radius + plan.buffer_radius, "gray", dash="0.05,0.05")
        for z in st.dropoffs.values():
            circle(z.position[0], z.position[1], z.radius, "green")
    for pos in plan.part_sources.values():
        circle(pos[0], pos[1], 0.05, "black")

    pad = 0.5
    x0, x1 = min(xs) - pad, max(xs) + pad
    y0, y1 = min(ys) - pad, max(ys) + pad
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="{x0:.3f} {-y1:.3f} '
        f'{x1 - x0:.3f} {y1 - y0:.3f}">\n' + "\n".join(elements) + "\n</svg>\n"
    )
