"""Robot-to-slot assignment: greedy coalition formation, a sparse
mixed-integer model with LP export, and a small exact branch-and-bound.

The greedy pass commits one whole transport team per iteration, always the
team with the earliest pickup time among active build steps. The exact
solver branches over the chain edges feeding each pickup placeholder.
"""

from __future__ import annotations

import math
import re
import time as _time
from dataclasses import dataclass, field

import numpy as np

from .model import RobotFleet
from .schedule import (
    ScheduleGraph,
    ScheduleError,
    evaluate_schedule,
    topological_order,
    upstream,
    validate_schedule,
)


class AllocationError(ValueError):
    pass


@dataclass
class RobotState:
    id: str
    position: np.ndarray  # (2,)
    available_time: float = 0.0

    def __post_init__(self):
        self.position = np.asarray(self.position, float).reshape(2)
        if self.available_time < 0:
            raise AllocationError("available_time must be non-negative")


@dataclass(frozen=True)
class AllocationResult:
    graph: ScheduleGraph
    makespan: float
    method: str
    status: str  # optimal | incumbent | infeasible
    added_edges: tuple[tuple[str, str], ...] = ()


# -- helpers over the schedule grammar ---------------------------------------


def _chain_structure(graph: ScheduleGraph):
    """Pickup/dropoff RobotGo nodes per payload, and RobotStart nodes."""
    pickups: dict[str, list[str]] = {}
    dropoffs: dict[str, dict[int, str]] = {}
    starts: list[str] = []
    for nid, node in sorted(graph.nodes.items()):
        if node.kind == "RobotGo" and node.role == "pickup":
            pickups.setdefault(node.subject, []).append(nid)
        elif node.kind == "RobotGo" and node.role == "dropoff":
            dropoffs.setdefault(node.subject, {})[node.slot] = nid
        elif node.kind == "RobotStart":
            starts.append(nid)
    for subject in pickups:
        pickups[subject].sort(key=lambda i: graph.nodes[i].slot)
    return pickups, dropoffs, starts


def earliest_arrival(
    robots: list[RobotState], goals: list[tuple[int, np.ndarray]], v_max: float
) -> tuple[tuple[RobotState, tuple[int, np.ndarray]], float]:
    """Best (robot, goal) pair by arrival time max(avail, 0) + dist / v_max,
    ties broken by (robot id, goal index)."""
    if not robots or not goals:
        raise AllocationError("earliest_arrival needs non-empty robots and goals")
    best = None
    for robot in robots:
        for gi, gpos in goals:
            t = max(robot.available_time, 0.0) + float(
                np.linalg.norm(gpos - robot.position)) / v_max
            key = (t, robot.id, gi)
            if best is None or key < best[0]:
                best = (key, (robot, (gi, gpos)))
    (t, _, _), pair = best
    return pair, t


def greedy_pccf(graph: ScheduleGraph, fleet: RobotFleet) -> AllocationResult:
    """Greedy precedence-constrained coalition formation over the partial
    schedule; returns a complete, valid schedule."""
    pickups, dropoffs, starts = _chain_structure(graph)
    n_robots = len(starts)
    if pickups and max(len(v) for v in pickups.values()) > n_robots:
        raise AllocationError(
            "fleet smaller than the largest transport team; allocation infeasible")

    robots = [
        RobotState(graph.nodes[s].subject, np.array(graph.nodes[s].origin))
        for s in starts
    ]
    chain_tail = {r.id: s for r, s in zip(robots, starts)}

    # project structure from graph metadata
    assemblies = sorted({a for a, _ in graph.phase_members})
    phases = {a: sorted(k for (x, k) in graph.phase_members if x == a) for a in assemblies}
    active_step = {a: phases[a][0] for a in assemblies}
    active = set(assemblies)
    parts = {n.subject for n in graph.nodes.values() if n.kind == "ObjectStart"}
    available_components = set(parts)
    assigned: set[str] = set()

    # event-time bookkeeping (greedy's internal clock)
    ready_time = {p: 0.0 for p in parts}  # payload availability
    open_time = {(a, phases[a][0]): 0.0 for a in assemblies}
    lift_end: dict[tuple[str, int], list[float]] = {}
    parent_phase = {
        c: (a, k) for (a, k), members in graph.phase_members.items() for c in members
    }
    durations = {nid: n.duration for nid, n in graph.nodes.items()}

    added: list[tuple[str, str]] = []

    def commit(component: str, pairs: list[tuple[RobotState, int]], t_task: float):
        form_dur = durations[f"FormTransportUnit:{component}"]
        tugo = durations[f"TransportUnitGo:{component}"]
        dep_dur = durations[f"DepositCargo:{component}"]
        lift_dur = durations[f"LiftIntoPlace:{component}"]
        a, k = parent_phase[component]
        t_form_end = max(t_task, ready_time[component]) + form_dur
        t_arrive = t_form_end + tugo
        t_dep_end = max(t_arrive, open_time[(a, k)]) + dep_dur
        t_lift_end = t_dep_end + lift_dur
        lift_end.setdefault((a, k), []).append(t_lift_end)
        for robot, slot in pairs:
            pick = pickups[component][slot]
            drop = dropoffs[component][slot]
            added.append((chain_tail[robot.id], pick))
            chain_tail[robot.id] = drop
            robot.position = np.array(graph.nodes[drop].origin)
            robot.available_time = t_dep_end
        assigned.add(component)

        members = graph.phase_members[(a, k)]
        if all(m in assigned for m in members):
            close = max(lift_end[(a, k)])
            if k == phases[a][-1]:
                active.discard(a)
                available_components.add(a)
                ready_time[a] = close
            else:
                nxt = phases[a][phases[a].index(k) + 1]
                active_step[a] = nxt
                open_time[(a, nxt)] = close

    while active:
        best_team: tuple[str, list[tuple[RobotState, int]], float] | None = None
        t_min = math.inf
        for a in sorted(active):
            k = active_step[a]
            for component in graph.phase_members[(a, k)]:
                if component in assigned or component not in available_components:
                    continue
                goals = [
                    (graph.nodes[p].slot, np.array(graph.nodes[p].destination))
                    for p in pickups[component]
                ]
                pool = list(robots)
                pairs: list[tuple[RobotState, int]] = []
                t_task = 0.0
                while goals:
                    (robot, (gi, _)), t = earliest_arrival(pool, goals, fleet.v_max)
                    t_task = max(t_task, t)
                    if t_task >= t_min:
                        break
                    pairs.append((robot, gi))
                    pool = [r for r in pool if r.id != robot.id]
                    goals = [g for g in goals if g[0] != gi]
                if not goals and t_task < t_min:
                    best_team = (component, pairs, t_task)
                    t_min = t_task
        if best_team is None:
            raise AllocationError("no assignable component; schedule is stuck")
        commit(*best_team)

    complete = graph.with_edges(set(added))
    violations = validate_schedule(complete, "complete")
    if violations:  # pragma: no cover - construction guarantees validity
        raise AllocationError(f"greedy produced an invalid schedule: {violations[:3]}")
    _, _, makespan = evaluate_schedule(complete, fleet)
    return AllocationResult(complete, makespan, "greedy", "incumbent", tuple(added))


# -- sparse mixed-integer model ----------------------------------------------


@dataclass
class ScheduleMilp:
    graph: ScheduleGraph
    fleet: RobotFleet
    variables: tuple[tuple[str, str], ...]  # candidate assignment edges (u, v)
    cond_duration: dict[tuple[str, str], float]  # pickup travel if edge chosen
    big_m: float
    terminal_nodes: tuple[str, ...]


def _candidate_edges(graph: ScheduleGraph) -> list[tuple[str, str]]:
    """Assignment edges with free capacity on both endpoints that cannot
    close a cycle in the partial graph."""
    pickups, dropoffs, starts = _chain_structure(graph)
    sources = sorted(starts) + sorted(d for by in dropoffs.values() for d in by.values())
    targets = sorted(p for by in pickups.values() for p in by)
    up = {u: upstream(graph, u) for u in sources}
    out = []
    for u in sources:
        for v in targets:
            if v in up[u]:  # edge u -> v would close a cycle
                continue
            out.append((u, v))
    return out


def _travel(graph: ScheduleGraph, u: str, v: str, v_max: float) -> float:
    origin = graph.nodes[u].origin
    dest = graph.nodes[v].destination
    return float(np.hypot(dest[0] - origin[0], dest[1] - origin[1])) / v_max


def build_milp(graph: ScheduleGraph, fleet: RobotFleet) -> ScheduleMilp:
    variables = _candidate_edges(graph)
    cond = {(u, v): _travel(graph, u, v, fleet.v_max) for u, v in variables}
    fixed = sum(n.duration or 0.0 for n in graph.nodes.values())
    by_target: dict[str, float] = {}
    for (u, v), d in cond.items():
        by_target[v] = max(by_target.get(v, 0.0), d)
    big_m = fixed + sum(by_target.values()) + 1.0
    return ScheduleMilp(graph, fleet, tuple(variables), cond, big_m,
                        graph.terminal_nodes)


def _lp_name(raw: str, taken: dict[str, str]) -> str:
    base = re.sub(r"[^A-Za-z0-9_]", "_", raw)
    name = base
    k = 1
    while name in taken and taken[name] != raw:
        k += 1
        name = f"{base}_{k}"
    taken[name] = raw
    return name


def export_lp(milp: ScheduleMilp) -> str:
    """CPLEX-LP text for the model: edge binaries, node start/finish times,
    big-M precedence and conditional-duration rows."""
    g = milp.graph
    taken: dict[str, str] = {}
    node_name = {nid: _lp_name(nid, taken) for nid in sorted(g.nodes)}
    var_name = {
        (u, v): f"X_{node_name[u]}__{node_name[v]}" for u, v in milp.variables
    }
    M = milp.big_m

    lines = ["\\ sparse adjacency assignment model", "Minimize"]
    obj = " + ".join(f"tF_{node_name[t]}" for t in milp.terminal_nodes)
    lines.append(f" obj: {obj}")
    lines.append("Subject To")
    row = 0

    def emit(expr: str):
        nonlocal row
        row += 1
        lines.append(f" c{row}: {expr}")

    pred, _ = g.adjacency()
    # durations (fixed) and precedence over existing edges
    for nid in sorted(g.nodes):
        node = g.nodes[nid]
        if node.duration is not None:
            emit(f"tF_{node_name[nid]} - t0_{node_name[nid]} >= {node.duration:.9g}")
        else:
            emit(f"tF_{node_name[nid]} - t0_{node_name[nid]} >= 0")
    for u, v in sorted(g.edges):
        emit(f"t0_{node_name[v]} - tF_{node_name[u]} >= 0")

    # degree rows over candidate variables
    in_vars: dict[str, list[tuple[str, str]]] = {}
    out_vars: dict[str, list[tuple[str, str]]] = {}
    for u, v in milp.variables:
        in_vars.setdefault(v, []).append((u, v))
        out_vars.setdefault(u, []).append((u, v))
    for v in sorted(in_vars):
        terms = " + ".join(var_name[e] for e in in_vars[v])
        emit(f"{terms} >= 1")
        emit(f"{terms} <= 1")
    for u in sorted(out_vars):
        terms = " + ".join(var_name[e] for e in out_vars[u])
        emit(f"{terms} <= 1")

    # big-M precedence and conditional durations for candidate edges:
    # t0_v - tF_u >= -M (1 - X)  and  tF_v - t0_v >= d (activated when X = 1)
    for u, v in milp.variables:
        x = var_name[(u, v)]
        emit(f"t0_{node_name[v]} - tF_{node_name[u]} - {M:.9g} {x} >= {-M:.9g}")
        d = milp.cond_duration[(u, v)]
        if d > 0:
            emit(f"tF_{node_name[v]} - t0_{node_name[v]} - {d:.9g} {x} >= 0")

    lines.append("Bounds")
    for nid in sorted(g.nodes):
        lines.append(f" t0_{node_name[nid]} >= 0")
        lines.append(f" tF_{node_name[nid]} >= 0")
    lines.append("Binary")
    for e in milp.variables:
        lines.append(f" {var_name[e]}")
    lines.append("End")
    return "\n".join(lines) + "\n"


# -- exact branch-and-bound --------------------------------------------------


@dataclass
class BnbLimits:
    max_nodes: int | None = None
    time_limit: float | None = None


def solve_bnb(
    milp: ScheduleMilp,
    incumbent: AllocationResult | None = None,
    limits: BnbLimits | None = None,
) -> AllocationResult:
    """Depth-first branch-and-bound over chain edges into pickup
    placeholders; bounding by the forward pass that zeroes unassigned
    travel. Warm start seeds the incumbent."""
    limits = limits or BnbLimits()
    g = milp.graph
    fleet = milp.fleet
    by_target: dict[str, list[str]] = {}
    for u, v in milp.variables:
        by_target.setdefault(v, []).append(u)

    # branch pickups in schedule order so bounds tighten early
    order = [nid for nid in topological_order(g) if nid in by_target]
    for v in order:
        by_target[v].sort()

    best_edges: tuple[tuple[str, str], ...] | None = None
    best_makespan = math.inf
    if incumbent is not None and incumbent.status != "infeasible":
        best_edges = incumbent.added_edges
        best_makespan = incumbent.makespan

    t_start = _time.monotonic()
    explored = 0
    hit_limit = False

    _, succ_static = g.adjacency()

    def reaches(edges: dict[str, str], src: str, dst: str) -> bool:
        """Is dst reachable from src with the chosen edges added?"""
        extra: dict[str, list[str]] = {}
        for v, u in edges.items():
            extra.setdefault(u, []).append(v)
        stack, seen = [src], set()
        while stack:
            x = stack.pop()
            if x == dst:
                return True
            if x in seen:
                continue
            seen.add(x)
            stack.extend(succ_static[x])
            stack.extend(extra.get(x, []))
        return False

    chosen: dict[str, str] = {}  # pickup node -> chain source
    used: set[str] = set()

    def descend(idx: int):
        nonlocal best_edges, best_makespan, explored, hit_limit
        if hit_limit:
            return
        if limits.max_nodes is not None and explored >= limits.max_nodes:
            hit_limit = True
            return
        if limits.time_limit is not None and _time.monotonic() - t_start > limits.time_limit:
            hit_limit = True
            return
        explored += 1
        edge_set = {(u, v) for v, u in chosen.items()}
        partial = g.with_edges(edge_set)
        try:
            _, _, lb = evaluate_schedule(partial, fleet, partial_ok=True)
        except ScheduleError:  # pragma: no cover - chosen edges stay acyclic
            return
        if lb >= best_makespan:
            return
        if idx == len(order):
            best_makespan = lb
            best_edges = tuple(sorted(edge_set))
            return
        v = order[idx]
        candidates = []
        for u in by_target[v]:
            if u in used or reaches(chosen, v, u):
                continue
            candidates.append(u)
        for u in candidates:
            chosen[v] = u
            used.add(u)
            descend(idx + 1)
            del chosen[v]
            used.discard(u)

    descend(0)

    if best_edges is None:
        return AllocationResult(g, math.inf, "bnb", "infeasible", ())
    complete = g.with_edges(set(best_edges))
    _, _, makespan = evaluate_schedule(complete, fleet)
    status = "incumbent" if hit_limit else "optimal"
    return AllocationResult(complete, makespan, "bnb", status, tuple(best_edges))


def allocation_to_jsonable(result: AllocationResult, fleet: RobotFleet) -> dict:
    t0, tF, makespan = evaluate_schedule(result.graph, fleet)
    return {
        "method": result.method,
        "status": result.status,
        "makespan": makespan,
        "added_edges": [list(e) for e in result.added_edges],
        "t0": {k: t0[k] for k in sorted(t0)},
        "tF": {k: tF[k] for k in sorted(tF)},
    }
