"""Operating-schedule DAG: typed nodes, construction, validation, evaluation.

A partial schedule encodes all task precedence but no robot assignments;
assignment edges (RobotStart -> pickup RobotGo, dropoff RobotGo -> next
pickup RobotGo) complete it. Timing is an earliest-start forward pass.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from .model import PlanParams, ProjectSpec, RobotFleet
from .staging import StagingPlan
from .transport import TransportUnitConfig

KINDS = (
    "ObjectStart", "RobotStart", "RobotGo", "AssemblyStart", "OpenBuildStep",
    "FormTransportUnit", "TransportUnitGo", "DepositCargo", "LiftIntoPlace",
    "CloseBuildStep", "AssemblyComplete", "ProjectComplete",
)

CHECKPOINT_KINDS = {
    "ObjectStart", "RobotStart", "AssemblyStart", "OpenBuildStep",
    "CloseBuildStep", "AssemblyComplete", "ProjectComplete",
}


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True)
class ScheduleNode:
    id: str
    kind: str
    subject: str
    slot: int | None = None  # carry-slot index (RobotGo) or phase index
    role: str | None = None  # RobotGo: "pickup" | "dropoff"
    origin: tuple[float, float] | None = None
    destination: tuple[float, float] | None = None
    duration: float | None = None  # None => computed during evaluation


@dataclass
class ScheduleGraph:
    nodes: dict[str, ScheduleNode]
    edges: set[tuple[str, str]]
    terminal_nodes: tuple[str, ...]
    team_sizes: dict[str, int] = field(default_factory=dict)  # payload -> slots
    phase_members: dict[tuple[str, int], tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self):
        for u, v in self.edges:
            if u not in self.nodes or v not in self.nodes:
                raise ScheduleError(f"edge ({u}, {v}) references unknown node")

    def preds(self, v: str) -> list[str]:
        return sorted(u for (u, w) in self.edges if w == v)

    def succs(self, u: str) -> list[str]:
        return sorted(w for (x, w) in self.edges if x == u)

    def adjacency(self) -> tuple[dict[str, list[str]], dict[str, list[str]]]:
        pred: dict[str, list[str]] = {v: [] for v in self.nodes}
        succ: dict[str, list[str]] = {v: [] for v in self.nodes}
        for u, v in sorted(self.edges):
            succ[u].append(v)
            pred[v].append(u)
        return pred, succ

    def with_edges(self, extra: set[tuple[str, str]]) -> "ScheduleGraph":
        return ScheduleGraph(
            nodes=dict(self.nodes),
            edges=set(self.edges) | set(extra),
            terminal_nodes=self.terminal_nodes,
            team_sizes=dict(self.team_sizes),
            phase_members=dict(self.phase_members),
        )


def topological_order(graph: ScheduleGraph) -> list[str]:
    """Kahn's algorithm over sorted node ids; raises on cycles."""
    pred, succ = graph.adjacency()
    indeg = {v: len(ps) for v, ps in pred.items()}
    queue = deque(sorted(v for v, d in indeg.items() if d == 0))
    order: list[str] = []
    while queue:
        v = queue.popleft()
        order.append(v)
        for w in succ[v]:
            indeg[w] -= 1
            if indeg[w] == 0:
                queue.append(w)
    if len(order) != len(graph.nodes):
        raise ScheduleError("schedule graph contains a cycle")
    return order


def is_acyclic(graph: ScheduleGraph) -> bool:
    try:
        topological_order(graph)
        return True
    except ScheduleError:
        return False


def upstream(graph: ScheduleGraph, v: str) -> set[str]:
    """All nodes from which v is reachable (v excluded in a DAG)."""
    pred, _ = graph.adjacency()
    seen: set[str] = set()
    stack = list(pred[v])
    while stack:
        u = stack.pop()
        if u in seen:
            continue
        seen.add(u)
        stack.extend(pred[u])
    return seen


# -- construction ------------------------------------------------------------


def _nid(kind: str, subject: str, slot: int | None = None, role: str | None = None) -> str:
    parts = [kind, subject]
    if slot is not None:
        parts.append(str(slot))
    if role is not None:
        parts.append(role)
    return ":".join(parts)


def build_partial_schedule(
    project: ProjectSpec,
    staging_plan: StagingPlan,
    transport_configs: dict[str, TransportUnitConfig],
    fleet: RobotFleet,
    params: PlanParams,
) -> ScheduleGraph:
    """Construct the unassigned operating schedule for a project."""
    nodes: dict[str, ScheduleNode] = {}
    edges: set[tuple[str, str]] = set()
    team_sizes: dict[str, int] = {}
    phase_members: dict[tuple[str, int], tuple[str, ...]] = {}

    def add(node: ScheduleNode) -> str:
        nodes[node.id] = node
        return node.id

    def component_world_frames(aid: str):
        """Payload-frame origin of each child at pickup and dropoff, world."""
        st = staging_plan.assemblies[aid]
        out = {}
        for cid, _ in project.assemblies[aid].components:
            cfg = transport_configs.get(cid)
            if cfg is None:
                raise ScheduleError(f"component {cid} has no transport config")
            zone = st.dropoffs.get(cid)
            if zone is None:
                raise ScheduleError(f"component {cid} has no dropoff pose")
            bc = np.asarray(cfg.bounding_circle.center, float)[:2]
            drop_origin = zone.position - bc
            if project.is_part(cid):
                pick_origin = staging_plan.part_sources[cid]
            else:
                child = staging_plan.assemblies[cid]
                pick_origin = child.center - child.hub_center_local
            out[cid] = (np.asarray(pick_origin, float), drop_origin, cfg, zone)
        return out

    for aid in sorted(project.assemblies):
        asm = project.assemblies[aid]
        a_start = add(ScheduleNode(_nid("AssemblyStart", aid), "AssemblyStart", aid, duration=0.0))
        a_done = add(ScheduleNode(_nid("AssemblyComplete", aid), "AssemblyComplete", aid, duration=0.0))
        frames = component_world_frames(aid)
        prev_close: str | None = None
        for phase in asm.build_phases:
            k = phase.index
            open_id = add(ScheduleNode(_nid("OpenBuildStep", aid, k), "OpenBuildStep", aid, slot=k, duration=0.0))
            close_id = add(ScheduleNode(_nid("CloseBuildStep", aid, k), "CloseBuildStep", aid, slot=k, duration=0.0))
            edges.add((a_start if prev_close is None else prev_close, open_id))
            phase_members[(aid, k)] = tuple(phase.member_ids)
            for cid in phase.member_ids:
                pick_origin, drop_origin, cfg, zone = frames[cid]
                if project.is_part(cid):
                    src = add(ScheduleNode(_nid("ObjectStart", cid), "ObjectStart", cid, duration=0.0))
                else:
                    src = _nid("AssemblyComplete", cid)
                form = add(ScheduleNode(
                    _nid("FormTransportUnit", cid), "FormTransportUnit", cid,
                    duration=params.duration_form))
                bc = np.asarray(cfg.bounding_circle.center, float)[:2]
                go = add(ScheduleNode(
                    _nid("TransportUnitGo", cid), "TransportUnitGo", cid,
                    origin=tuple(pick_origin + bc), destination=tuple(zone.position),
                    duration=float(np.linalg.norm(zone.position - (pick_origin + bc)))
                    / cfg.speed_limit))
                deposit = add(ScheduleNode(
                    _nid("DepositCargo", cid), "DepositCargo", cid,
                    duration=params.duration_deposit))
                lift = add(ScheduleNode(
                    _nid("LiftIntoPlace", cid), "LiftIntoPlace", cid,
                    duration=params.duration_lift))
                edges.update([
                    (src, form), (form, go), (go, deposit),
                    (deposit, lift), (lift, close_id), (open_id, deposit),
                ])
                team_sizes[cid] = cfg.n
                for s in range(cfg.n):
                    slot_pick = tuple(pick_origin + cfg.carry_positions[s])
                    slot_drop = tuple(drop_origin + cfg.carry_positions[s])
                    pick = add(ScheduleNode(
                        _nid("RobotGo", cid, s, "pickup"), "RobotGo", cid,
                        slot=s, role="pickup", destination=slot_pick))
                    drop = add(ScheduleNode(
                        _nid("RobotGo", cid, s, "dropoff"), "RobotGo", cid,
                        slot=s, role="dropoff", origin=slot_drop, duration=0.0))
                    edges.add((pick, form))
                    edges.add((deposit, drop))
            prev_close = close_id
        assert prev_close is not None
        edges.add((prev_close, a_done))

    project_done = ScheduleNode(
        _nid("ProjectComplete", project.root), "ProjectComplete", project.root, duration=0.0)
    nodes[project_done.id] = project_done
    edges.add((_nid("AssemblyComplete", project.root), project_done.id))

    for i, pos in enumerate(fleet.initial_positions):
        rid = f"robot{i}"
        nodes[_nid("RobotStart", rid)] = ScheduleNode(
            _nid("RobotStart", rid), "RobotStart", rid,
            origin=(float(pos[0]), float(pos[1])), duration=0.0)

    return ScheduleGraph(
        nodes=nodes, edges=edges, terminal_nodes=(project_done.id,),
        team_sizes=team_sizes, phase_members=phase_members,
    )


# -- validation --------------------------------------------------------------


@dataclass(frozen=True)
class ScheduleViolation:
    node: str
    rule: str
    message: str


def validate_schedule(graph: ScheduleGraph, mode: str = "complete") -> list[ScheduleViolation]:
    """Check every node's neighborhood against the required/eligible table.

    Partial mode exempts missing robot-assignment links (pickup RobotGo
    predecessors, RobotStart / dropoff RobotGo successors are optional
    in both modes up to their caps).
    """
    if mode not in ("partial", "complete"):
        raise ScheduleError(f"unknown validation mode {mode!r}")
    out: list[ScheduleViolation] = []
    pred, succ = graph.adjacency()

    if not is_acyclic(graph):
        out.append(ScheduleViolation("", "acyclic", "schedule graph contains a cycle"))

    def kinds(ids: list[str]) -> list[tuple[str, str]]:
        return [(graph.nodes[i].kind, i) for i in ids]

    def expect_exact(node: ScheduleNode, ids: list[str], side: str,
                     spec: dict[str, int], one_of: tuple[str, ...] = ()):
        """Neighbors must consist of `spec` counts per kind, plus exactly one
        neighbor among `one_of` kinds when given."""
        counts: dict[str, int] = {}
        for k, _ in kinds(ids):
            counts[k] = counts.get(k, 0) + 1
        alt = sum(counts.pop(k, 0) for k in one_of)
        if one_of and alt != 1:
            out.append(ScheduleViolation(
                node.id, f"required-{side}",
                f"expected exactly one {'/'.join(one_of)} {side}, got {alt}"))
        for k, want in spec.items():
            got = counts.pop(k, 0)
            if got != want:
                rule = "required" if got < want else "eligible"
                out.append(ScheduleViolation(
                    node.id, f"{rule}-{side}",
                    f"expected {want} {k} {side}(s), got {got}"))
        for k, got in counts.items():
            out.append(ScheduleViolation(
                node.id, f"eligible-{side}", f"unexpected {k} {side} ({got})"))

    def expect_at_most(node: ScheduleNode, ids: list[str], side: str,
                       caps: dict[str, int], required: dict[str, int] = {}):
        counts: dict[str, int] = {}
        for k, _ in kinds(ids):
            counts[k] = counts.get(k, 0) + 1
        for k, got in counts.items():
            cap = caps.get(k)
            if cap is None:
                out.append(ScheduleViolation(
                    node.id, f"eligible-{side}", f"unexpected {k} {side} ({got})"))
            elif got > cap:
                out.append(ScheduleViolation(
                    node.id, f"eligible-{side}",
                    f"at most {cap} {k} {side}(s) allowed, got {got}"))
        for k, want in required.items():
            if counts.get(k, 0) < want:
                out.append(ScheduleViolation(
                    node.id, f"required-{side}",
                    f"expected at least {want} {k} {side}(s), got {counts.get(k, 0)}"))

    for nid, node in sorted(graph.nodes.items()):
        p, s = pred[nid], succ[nid]
        k = node.kind
        if k == "ProjectComplete":
            expect_exact(node, p, "predecessor", {"AssemblyComplete": 1})
            expect_exact(node, s, "successor", {})
        elif k == "ObjectStart":
            expect_exact(node, p, "predecessor", {})
            expect_exact(node, s, "successor", {"FormTransportUnit": 1})
        elif k == "AssemblyStart":
            expect_exact(node, p, "predecessor", {})
            expect_exact(node, s, "successor", {"OpenBuildStep": 1})
        elif k == "AssemblyComplete":
            expect_exact(node, p, "predecessor", {"CloseBuildStep": 1})
            expect_exact(node, s, "successor", {},
                         one_of=("FormTransportUnit", "ProjectComplete"))
        elif k == "OpenBuildStep":
            expect_exact(node, p, "predecessor", {},
                         one_of=("AssemblyStart", "CloseBuildStep"))
            want = len(graph.phase_members.get((node.subject, node.slot or 0), ()))
            expect_exact(node, s, "successor", {"DepositCargo": want})
        elif k == "CloseBuildStep":
            want = len(graph.phase_members.get((node.subject, node.slot or 0), ()))
            expect_exact(node, p, "predecessor", {"LiftIntoPlace": want})
            expect_exact(node, s, "successor", {},
                         one_of=("AssemblyComplete", "OpenBuildStep"))
        elif k == "RobotStart":
            expect_exact(node, p, "predecessor", {})
            expect_at_most(node, s, "successor", {"RobotGo": 1})
        elif k == "RobotGo":
            if node.role == "pickup":
                if mode == "complete":
                    expect_at_most(node, p, "predecessor",
                                   {"RobotStart": 1, "RobotGo": 1})
                    total = len(p)
                    if total != 1:
                        out.append(ScheduleViolation(
                            nid, "required-predecessor",
                            f"expected one RobotStart/RobotGo predecessor, got {total}"))
                else:
                    expect_at_most(node, p, "predecessor",
                                   {"RobotStart": 1, "RobotGo": 1})
                    if len(p) > 1:
                        out.append(ScheduleViolation(
                            nid, "eligible-predecessor",
                            f"expected at most one chain predecessor, got {len(p)}"))
                expect_exact(node, s, "successor", {"FormTransportUnit": 1})
            else:  # dropoff
                expect_exact(node, p, "predecessor", {"DepositCargo": 1})
                expect_at_most(node, s, "successor", {"RobotGo": 1})
        elif k == "FormTransportUnit":
            team = graph.team_sizes.get(node.subject, 0)
            expect_exact(node, p, "predecessor", {"RobotGo": team},
                         one_of=("ObjectStart", "AssemblyComplete"))
            expect_exact(node, s, "successor", {"TransportUnitGo": 1})
        elif k == "TransportUnitGo":
            expect_exact(node, p, "predecessor", {"FormTransportUnit": 1})
            expect_exact(node, s, "successor", {"DepositCargo": 1})
        elif k == "DepositCargo":
            team = graph.team_sizes.get(node.subject, 0)
            expect_exact(node, p, "predecessor",
                         {"OpenBuildStep": 1, "TransportUnitGo": 1})
            expect_exact(node, s, "successor",
                         {"LiftIntoPlace": 1, "RobotGo": team})
        elif k == "LiftIntoPlace":
            expect_exact(node, p, "predecessor", {"DepositCargo": 1})
            expect_exact(node, s, "successor", {"CloseBuildStep": 1})
        else:
            out.append(ScheduleViolation(nid, "kind", f"unknown node kind {k!r}"))
    return out


# -- evaluation --------------------------------------------------------------


def evaluate_schedule(
    graph: ScheduleGraph, fleet: RobotFleet, partial_ok: bool = False
) -> tuple[dict[str, float], dict[str, float], float]:
    """Earliest-start forward pass. Pickup RobotGo durations depend on the
    chain predecessor's position (RobotStart origin or the previous dropoff
    slot) and use the unladen speed v_max.

    With partial_ok, unassigned pickup RobotGo nodes get zero travel time,
    which lower-bounds every completion of the graph."""
    order = topological_order(graph)
    pred, _ = graph.adjacency()
    t0: dict[str, float] = {}
    tF: dict[str, float] = {}
    for nid in order:
        node = graph.nodes[nid]
        start = max((tF[p] for p in pred[nid]), default=0.0)
        dur = node.duration
        if dur is None:
            if node.kind != "RobotGo" or node.role != "pickup":
                raise ScheduleError(f"node {nid} has no duration")
            chain = [p for p in pred[nid]
                     if graph.nodes[p].kind in ("RobotStart", "RobotGo")]
            if len(chain) != 1:
                if partial_ok and not chain:
                    dur = 0.0
                else:
                    raise ScheduleError(
                        f"pickup RobotGo {nid} needs exactly one chain predecessor")
            else:
                origin = graph.nodes[chain[0]].origin
                if origin is None or node.destination is None:
                    raise ScheduleError(f"missing pose data on chain into {nid}")
                dist = float(np.hypot(node.destination[0] - origin[0],
                                      node.destination[1] - origin[1]))
                dur = dist / fleet.v_max
        t0[nid] = start
        tF[nid] = start + dur
    makespan = max(tF[t] for t in graph.terminal_nodes)
    return t0, tF, makespan


# -- export ------------------------------------------------------------------


_DOT_SHORT = {
    "ObjectStart": "OS", "RobotStart": "RS", "RobotGo": "R", "AssemblyStart": "AS",
    "OpenBuildStep": "O", "FormTransportUnit": "F", "TransportUnitGo": "T",
    "DepositCargo": "D", "LiftIntoPlace": "L", "CloseBuildStep": "C",
    "AssemblyComplete": "AC", "ProjectComplete": "PC",
}


def schedule_to_dot(graph: ScheduleGraph) -> str:
    lines = ["digraph schedule {", "  rankdir=LR;"]
    for nid, node in sorted(graph.nodes.items()):
        label = f"{_DOT_SHORT[node.kind]} {node.subject}"
        if node.slot is not None:
            label += f"/{node.slot}"
        shape = "ellipse" if node.kind in CHECKPOINT_KINDS else "box"
        lines.append(f'  "{nid}" [label="{label}", shape={shape}];')
    for u, v in sorted(graph.edges):
        lines.append(f'  "{u}" -> "{v}";')
    lines.append("}")
    return "\n".join(lines) + "\n"


def schedule_to_jsonable(graph: ScheduleGraph) -> dict:
    return {
        "nodes": [
            {
                "id": n.id, "kind": n.kind, "subject": n.subject, "slot": n.slot,
                "role": n.role, "origin": n.origin, "destination": n.destination,
                "duration": n.duration,
            }
            for _, n in sorted(graph.nodes.items())
        ],
        "edges": sorted(list(e) for e in graph.edges),
        "terminal_nodes": list(graph.terminal_nodes),
        "team_sizes": dict(sorted(graph.team_sizes.items())),
        "phase_members": {
            f"{aid}:{k}": list(m) for (aid, k), m in sorted(graph.phase_members.items())
        },
    }


def schedule_from_jsonable(data: dict) -> ScheduleGraph:
    nodes = {
        rec["id"]: ScheduleNode(
            id=rec["id"], kind=rec["kind"], subject=rec["subject"], slot=rec["slot"],
            role=rec["role"],
            origin=tuple(rec["origin"]) if rec["origin"] else None,
            destination=tuple(rec["destination"]) if rec["destination"] else None,
            duration=rec["duration"],
        )
        for rec in data["nodes"]
    }
    phase_members = {}
    for key, members in data["phase_members"].items():
        aid, k = key.rsplit(":", 1)
        phase_members[(aid, int(k))] = tuple(members)
    return ScheduleGraph(
        nodes=nodes,
        edges={tuple(e) for e in data["edges"]},
        terminal_nodes=tuple(data["terminal_nodes"]),
        team_sizes=dict(data["team_sizes"]),
        phase_members=phase_members,
    )
