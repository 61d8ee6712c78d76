"""Compile PDE definitions into typed computational DAGs.

Node conventions follow the usual operand-edge reading: an edge ``a -> b``
means "a is an operand of b".  Auxiliary nodes are appended after the core
graph: ``Mod`` nodes (``L`` per unknown, pointing at its ``UF``) and then
``Branch`` nodes (``N`` per sampled field) so that all function-encoded rows
sit at the end of the node list.
"""
from __future__ import annotations

import hashlib
import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dsl
from .dsl import (
    Const, Cos, Dt, Dx, Expr, FieldCoef, Neg, PdeDefinition, Pow, Prod, Sin, Square, Sum, Var,
)

CORE_TYPES = (
    "UF", "SC", "CF", "VC", "IC", "BvLeft", "BvRight",
    "dt", "dx", "Add", "Mul", "Neg", "Square", "Sin", "Cos", "EqZero",
)
SOURCE_TYPES = frozenset({"UF", "SC", "CF", "VC"})
VARIADIC_TYPES = frozenset({"Add", "Mul"})
PATH_CAP = 14
MASK_VALUE = -1e9

_UNARY = {Dt: "dt", Dx: "dx", Neg: "Neg", Square: "Square", Sin: "Sin", Cos: "Cos"}


class CompileError(ValueError):
    pass


@dataclass(frozen=True)
class Node:
    type: str
    index: int = 0  # 1-based index for Branch/Mod, 0 otherwise
    slot: str | None = None
    component: str | None = None  # "t"/"x" for the two halves of a separable field

    @property
    def label(self) -> str:
        return f"{self.type}{self.index}" if self.type in ("Branch", "Mod") else self.type

    @property
    def is_aux(self) -> bool:
        return self.type in ("Branch", "Mod")


@dataclass
class PdeDag:
    nodes: list[Node]
    edges: list[tuple[int, int]]
    n_branch: int
    n_mod: int
    variables: dict[str, int] = field(default_factory=dict)  # name -> UF node
    mod_nodes: dict[str, list[int]] = field(default_factory=dict)
    branch_nodes: dict[int, list[int]] = field(default_factory=dict)  # field node -> branches
    n_equations: int = 0

    @property
    def n(self) -> int:
        return len(self.nodes)

    def core_indices(self) -> list[int]:
        return [i for i, nd in enumerate(self.nodes) if not nd.is_aux]

    def copy(self) -> "PdeDag":
        return PdeDag(
            list(self.nodes), list(self.edges), self.n_branch, self.n_mod, dict(self.variables),
            {k: list(v) for k, v in self.mod_nodes.items()},
            {k: list(v) for k, v in self.branch_nodes.items()}, self.n_equations,
        )


# ---------------------------------------------------------------------------
# compile


class _Builder:
    def __init__(self):
        self.nodes: list[Node] = []
        self.edges: list[tuple[int, int]] = []
        self.memo: dict[str, int] = {}

    def node(self, nd: Node, operands=(), key: str | None = None) -> int:
        if key is not None and key in self.memo:
            return self.memo[key]
        idx = len(self.nodes)
        self.nodes.append(nd)
        self.edges.extend((o, idx) for o in operands)
        if key is not None:
            self.memo[key] = idx
        return idx

    def expr(self, e: Expr) -> int:
        k = e.key()
        if k in self.memo:
            return self.memo[k]
        if isinstance(e, Var):
            raise CompileError(f"unknown {e.name!r} was not declared")
        if isinstance(e, Const):
            return self.node(Node("SC", slot=e.slot), key=k)
        if isinstance(e, FieldCoef):
            if e.dependency == "x":
                return self.node(Node("CF", slot=e.slot), key=k)
            if e.dependency == "t":
                return self.node(Node("VC", slot=e.slot), key=k)
            vt = self.node(Node("VC", slot=e.slot, component="t"), key=k + ":t")
            cx = self.node(Node("CF", slot=e.slot, component="x"), key=k + ":x")
            return self.node(Node("Mul"), (vt, cx), key=k)
        if isinstance(e, Pow):
            return self.power(e.base, e.exponent)
        if type(e) in _UNARY:
            arg = self.expr(e.arg)
            return self.node(Node(_UNARY[type(e)]), (arg,), key=k)
        if isinstance(e, (Sum, Prod)):
            ops = [self.expr(a) for a in e.args]
            return self.node(Node("Add" if isinstance(e, Sum) else "Mul"), ops, key=k)
        raise CompileError(f"unsupported operator {type(e).__name__}")

    def power(self, base: Expr, k: int) -> int:
        """u^k by binary expansion: u^11 = ((u^2)^2)^2 * u^2 * u."""
        key = f"pow({base.key()},{k})"
        if key in self.memo:
            return self.memo[key]
        chain = [self.expr(base)]
        sq_expr = base
        for _ in range(k.bit_length() - 1):
            sq_expr = Square(sq_expr)
            chain.append(self.expr(sq_expr))
        bits = [i for i in range(k.bit_length()) if (k >> i) & 1]
        factors = [chain[i] for i in reversed(bits)]
        if len(factors) == 1:
            self.memo[key] = factors[0]
            return factors[0]
        return self.node(Node("Mul"), factors, key=key)


def compile_pde(defn: PdeDefinition, n_branch: int = 4, n_mod: int = 4) -> PdeDag:
    """Build the computational DAG of ``defn`` with auxiliary nodes."""
    if n_branch < 1 or n_mod < 1:
        raise ValueError("n_branch and n_mod must be positive")
    b = _Builder()
    variables = {}
    for v in defn.variables:
        variables[v] = b.node(Node("UF", slot=v), key=Var(v).key())
    for ic in defn.initial_conditions:
        target = Var(ic.variable) if ic.order == 0 else Dt(Var(ic.variable))
        b.node(Node("IC", slot=ic.slot), (b.expr(target),))
    for eq in defn.equations:
        b.node(Node("EqZero"), (b.expr(eq),))
    for bc in defn.boundary:
        if bc.kind == "general":
            nt = "BvLeft" if bc.side == "left" else "BvRight"
            b.node(Node(nt, slot=bc.value_slot), (b.expr(bc.lhs),))
    dag = PdeDag(b.nodes, b.edges, n_branch, n_mod, variables, n_equations=len(defn.equations))
    for v, uf in variables.items():
        dag.mod_nodes[v] = []
        for ell in range(1, n_mod + 1):
            dag.mod_nodes[v].append(_append(dag, Node("Mod", ell, slot=v), [(None, uf)]))
    sampled = [i for i, nd in enumerate(dag.nodes) if nd.type in ("IC", "CF", "VC")]
    for i in sampled:
        nd = dag.nodes[i]
        dag.branch_nodes[i] = []
        for k in range(1, n_branch + 1):
            aux = Node("Branch", k, slot=nd.slot, component=nd.component)
            wiring = [(i, None)] if nd.type == "IC" else [(None, i)]
            dag.branch_nodes[i].append(_append(dag, aux, wiring))
    if _cycle_nodes(dag.n, dag.edges):
        raise CompileError("definition produced a cyclic graph")
    return dag


def _append(dag: PdeDag, nd: Node, wiring) -> int:
    idx = len(dag.nodes)
    dag.nodes.append(nd)
    for src, dst in wiring:
        dag.edges.append((idx if src is None else src, idx if dst is None else dst))
    return idx


# ---------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class Violation:
    node: int | None
    rule: str
    message: str


def _cycle_nodes(n: int, edges) -> list[int]:
    indeg = [0] * n
    succ = [[] for _ in range(n)]
    for s, d in edges:
        succ[s].append(d)
        indeg[d] += 1
    stack = [i for i in range(n) if indeg[i] == 0]
    seen = 0
    while stack:
        i = stack.pop()
        seen += 1
        for j in succ[i]:
            indeg[j] -= 1
            if indeg[j] == 0:
                stack.append(j)
    return [i for i in range(n) if indeg[i] > 0] if seen < n else []


def validate(dag: PdeDag) -> list[Violation]:
    out: list[Violation] = []
    n = dag.n
    bad = [(s, d) for s, d in dag.edges if not (0 <= s < n and 0 <= d < n)]
    for s, d in bad:
        out.append(Violation(None, "edge-range", f"edge {s}->{d} references a missing node"))
    edges = [(s, d) for s, d in dag.edges if (s, d) not in bad]
    cyc = _cycle_nodes(n, edges)
    if cyc:
        out.append(Violation(cyc[0], "acyclic", f"nodes {cyc} lie on or behind a cycle"))

    ins = [[] for _ in range(n)]
    outs = [[] for _ in range(n)]
    for s, d in edges:
        ins[d].append(s)
        outs[s].append(d)
    aux = [nd.is_aux for nd in dag.nodes]
    for i, nd in enumerate(dag.nodes):
        if nd.is_aux:
            continue
        core_in = sum(1 for s in ins[i] if not aux[s])
        if nd.type in SOURCE_TYPES:
            ok, want = core_in == 0, "0"
        elif nd.type in VARIADIC_TYPES:
            ok, want = core_in >= 2, ">= 2"
        elif nd.type in CORE_TYPES:
            ok, want = core_in == 1, "1"
        else:
            out.append(Violation(i, "node-type", f"unknown node type {nd.type!r}"))
            continue
        if not ok:
            out.append(Violation(i, "in-degree", f"{nd.type} node has core in-degree {core_in}, expected {want}"))
        if nd.type in ("SC", "CF", "VC", "IC", "BvLeft", "BvRight") and nd.slot is None:
            out.append(Violation(i, "payload", f"{nd.type} node has no payload slot"))
        if nd.type == "EqZero" and outs[i]:
            out.append(Violation(i, "eq-sink", "EqZero node must be a sink"))

    n_eqz = sum(nd.type == "EqZero" for nd in dag.nodes)
    if n_eqz == 0 or (dag.n_equations and n_eqz != dag.n_equations):
        out.append(Violation(None, "eq-count", f"{n_eqz} EqZero nodes for {dag.n_equations} equations"))

    mods_of: dict[int, list[int]] = {}
    branches_of: dict[int, list[int]] = {}
    for i, nd in enumerate(dag.nodes):
        if nd.type == "Mod":
            tgt = [d for d in outs[i]]
            if ins[i] or len(tgt) != 1 or dag.nodes[tgt[0]].type != "UF":
                out.append(Violation(i, "mod-edge", "Mod node must have a single edge towards a UF node"))
            else:
                mods_of.setdefault(tgt[0], []).append(dag.nodes[i].index)
        elif nd.type == "Branch":
            src = [s for s in ins[i]]
            dst = [d for d in outs[i]]
            if len(src) == 1 and not dst and dag.nodes[src[0]].type == "IC":
                branches_of.setdefault(src[0], []).append(nd.index)
            elif len(dst) == 1 and not src and dag.nodes[dst[0]].type in ("CF", "VC"):
                branches_of.setdefault(dst[0], []).append(nd.index)
            else:
                out.append(Violation(i, "branch-edge", "Branch node must receive from IC or point to CF/VC"))
    want_mod = list(range(1, dag.n_mod + 1))
    want_branch = list(range(1, dag.n_branch + 1))
    for i, nd in enumerate(dag.nodes):
        if nd.type == "UF" and sorted(mods_of.get(i, [])) != want_mod:
            out.append(Violation(i, "mod-count", f"UF node carries Mod indices {sorted(mods_of.get(i, []))}"))
        if nd.type in ("IC", "CF", "VC") and sorted(branches_of.get(i, [])) != want_branch:
            out.append(Violation(i, "branch-count", f"{nd.type} node carries Branch indices {sorted(branches_of.get(i, []))}"))
    return out


# ---------------------------------------------------------------------------
# structural features


@dataclass
class StructuralFeatures:
    in_deg: np.ndarray
    out_deg: np.ndarray
    phi: np.ndarray  # capped directed shortest-path lengths
    connected: np.ndarray  # path i->j or j->i

    @property
    def d_mask(self) -> np.ndarray:
        return np.where(self.connected, 0.0, -np.inf)


def structural_features(dag: PdeDag, cap: int = PATH_CAP) -> StructuralFeatures:
    n = dag.n
    adj = np.zeros((n, n), dtype=bool)
    in_deg = np.zeros(n, dtype=np.int64)
    out_deg = np.zeros(n, dtype=np.int64)
    for s, d in dag.edges:
        adj[s, d] = True
        in_deg[d] += 1
        out_deg[s] += 1
    phi = np.full((n, n), cap, dtype=np.int64)
    reach = np.eye(n, dtype=bool)
    frontier = reach.copy()
    step = 0
    # breadth-first expansion from all sources at once
    while frontier.any():
        if step < cap:
            phi[frontier] = step
        step += 1
        nxt = (frontier.astype(np.uint8) @ adj.astype(np.uint8)) > 0
        frontier = nxt & ~reach
        reach |= frontier
    return StructuralFeatures(in_deg, out_deg, phi, reach | reach.T)


# ---------------------------------------------------------------------------
# digest / export / serialization


def _h(s: str) -> str:
    return hashlib.sha256(s.encode()).hexdigest()[:24]


def canonical_digest(dag: PdeDag) -> str:
    """Isomorphism-invariant digest (ignores node order, slot names and values)."""
    n = dag.n
    ins = [[] for _ in range(n)]
    outs = [[] for _ in range(n)]
    for s, d in dag.edges:
        ins[d].append(s)
        outs[s].append(d)
    colors = [nd.label + (f"/{nd.component}" if nd.component else "") for nd in dag.nodes]
    n_classes = len(set(colors))
    for _ in range(n):
        colors = [
            _h(colors[i] + "|" + ",".join(sorted(colors[j] for j in ins[i]))
               + "|" + ",".join(sorted(colors[j] for j in outs[i])))
            for i in range(n)
        ]
        k = len(set(colors))
        if k == n_classes:
            break
        n_classes = k
    body = ";".join(sorted(colors)) + "#" + ";".join(sorted(f"{colors[s]}>{colors[d]}" for s, d in dag.edges))
    return hashlib.sha256(body.encode()).hexdigest()


def export_dot(dag: PdeDag, aux: bool = True) -> str:
    keep = [i for i, nd in enumerate(dag.nodes) if aux or not nd.is_aux]
    kept = set(keep)
    lines = ["digraph pde {", "  node [shape=box];"]
    for i in keep:
        nd = dag.nodes[i]
        label = nd.label
        if nd.slot is not None and nd.type != "Mod":
            label += f"\\n{nd.slot}" + (f"[{nd.component}]" if nd.component else "")
        lines.append(f'  n{i} [label="{label}"];')
    for s, d in dag.edges:
        if s in kept and d in kept:
            lines.append(f"  n{s} -> n{d};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def to_manifest(dag: PdeDag) -> dict:
    return {
        "nodes": [
            {"type": nd.type, "index": nd.index, "slot": nd.slot, "component": nd.component}
            for nd in dag.nodes
        ],
        "edges": [list(e) for e in dag.edges],
        "n_branch": dag.n_branch,
        "n_mod": dag.n_mod,
        "variables": dag.variables,
        "mod_nodes": dag.mod_nodes,
        "branch_nodes": {str(k): v for k, v in dag.branch_nodes.items()},
        "n_equations": dag.n_equations,
    }


def from_manifest(m: dict) -> PdeDag:
    return PdeDag(
        [Node(d["type"], d["index"], d["slot"], d["component"]) for d in m["nodes"]],
        [tuple(e) for e in m["edges"]],
        m["n_branch"], m["n_mod"], dict(m["variables"]),
        {k: list(v) for k, v in m["mod_nodes"].items()},
        {int(k): list(v) for k, v in m["branch_nodes"].items()},
        m["n_equations"],
    )


def serialize(dag: PdeDag) -> str:
    return json.dumps(to_manifest(dag), sort_keys=True, indent=1)


def save_dag(dag: PdeDag, path, payloads=None) -> None:
    """Write ``manifest.json`` plus raw little-endian float32 payload arrays."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    m = to_manifest(dag)
    arrays = {}
    blob = bytearray()
    for slot, p in (payloads or {}).items():
        parts = []
        if isinstance(p, dsl.SeparableSamples):
            parts = [("t.coords", p.time.coords), ("t.values", p.time.values),
                     ("x.coords", p.space.coords), ("x.values", p.space.values)]
        elif isinstance(p, dsl.FieldSamples):
            parts = [("coords", p.coords), ("values", p.values)]
        else:
            arrays[slot] = {"scalar": float(p)}
            continue
        arrays[slot] = {}
        for name, a in parts:
            raw = np.ascontiguousarray(a, dtype="<f4").tobytes()
            arrays[slot][name] = {"offset": len(blob), "count": a.size}
            blob += raw
    m["payloads"] = arrays
    (path / "payloads.bin").write_bytes(bytes(blob))
    (path / "manifest.json").write_text(json.dumps(m, sort_keys=True, indent=1))


def load_dag(path):
    path = Path(path)
    m = json.loads((path / "manifest.json").read_text())
    blob = (path / "payloads.bin").read_bytes()

    def arr(spec):
        return np.frombuffer(blob, dtype="<f4", count=spec["count"], offset=spec["offset"]).copy()

    payloads = {}
    for slot, spec in m.get("payloads", {}).items():
        if "scalar" in spec:
            payloads[slot] = spec["scalar"]
        elif "coords" in spec:
            payloads[slot] = dsl.FieldSamples(arr(spec["coords"]), arr(spec["values"]))
        else:
            payloads[slot] = dsl.SeparableSamples(
                dsl.FieldSamples(arr(spec["t.coords"]), arr(spec["t.values"])),
                dsl.FieldSamples(arr(spec["x.coords"]), arr(spec["x.values"])),
            )
    return from_manifest(m), payloads


def core_type_counts(dag: PdeDag) -> Counter:
    return Counter(nd.type for nd in dag.nodes if not nd.is_aux)
