"""The three enhanced graphs: money flow (EMFG), account creation (EACG)
and contract invocation (ECIG), plus structural derivations."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from decimal import Decimal

from .errors import GraphError
from .model import OFFICIAL_TOKEN_CONTRACT, ObservationWindow

INVOCATION_KINDS = frozenset({"external", "inline", "deferred"})


class Emfg:
    """Day-stamped weighted money-flow graph.

    Edge state is kept per (src, dst, day): summed EOS weight and the
    number of transfers that day.
    """

    def __init__(self):
        self.out = {}  # src -> dst -> day -> [weight Decimal, count int]
        self.inc = {}  # dst -> src -> day -> same objects (shared)

    def add_transfer(self, day: int, src: str, dst: str, amount: Decimal):
        if amount <= 0:
            raise GraphError(f"non-positive transfer weight: {amount}")
        days = self.out.setdefault(src, {}).setdefault(dst, {})
        cell = days.get(day)
        if cell is None:
            cell = days[day] = [amount, 1]
            self.inc.setdefault(dst, {}).setdefault(src, {})[day] = cell
        else:
            cell[0] += amount
            cell[1] += 1

    @property
    def nodes(self):
        seen = set(self.out)
        seen.update(self.inc)
        return seen

    def edges(self):
        for src, dsts in self.out.items():
            for dst, days in dsts.items():
                yield src, dst, days

    def edge_days(self, src, dst):
        return self.out.get(src, {}).get(dst, {})

    def total_weight(self) -> Decimal:
        total = Decimal(0)
        for _, _, days in self.edges():
            for weight, _ in days.values():
                total += weight
        return total

    def total_count(self) -> int:
        return sum(c for _, _, days in self.edges() for _, c in days.values())

    def edge_weight(self, src, dst) -> Decimal:
        return sum((w for w, _ in self.edge_days(src, dst).values()), Decimal(0))

    def out_daily_counts(self, account):
        """day -> number of outgoing transfers."""
        counts = {}
        for days in self.out.get(account, {}).values():
            for day, (_, c) in days.items():
                counts[day] = counts.get(day, 0) + c
        return counts

    def out_daily_volume(self, account):
        volumes = {}
        for days in self.out.get(account, {}).values():
            for day, (w, _) in days.items():
                volumes[day] = volumes.get(day, Decimal(0)) + w
        return volumes

    def in_daily_volume(self, account):
        volumes = {}
        for days in self.inc.get(account, {}).values():
            for day, (w, _) in days.items():
                volumes[day] = volumes.get(day, Decimal(0)) + w
        return volumes

    def in_daily_counts(self, account):
        counts = {}
        for days in self.inc.get(account, {}).values():
            for day, (_, c) in days.items():
                counts[day] = counts.get(day, 0) + c
        return counts


def build_emfg(transfers) -> Emfg:
    """Aggregate extract_transfers output into the money-flow graph."""
    g = Emfg()
    for t in transfers:
        g.add_transfer(t.day, t.src, t.dst, t.amount)
    return g


class Eacg:
    """Account creation forest: child -> (creator, creation day)."""

    def __init__(self):
        self.parent = {}  # child -> (creator, day)
        self.children = {}  # creator -> list of children
        self.roots = set()
        self._depth = {}

    @property
    def nodes(self):
        return set(self.parent) | self.roots | set(self.children)

    def edge_count(self) -> int:
        return len(self.parent)

    def out_degree(self, account) -> int:
        return len(self.children.get(account, ()))

    def depth(self, account) -> int:
        """Root depth 0, child depth = parent depth + 1. Iterative so
        chains thousands deep (seen in the wild) do not blow the stack."""
        if account in self._depth:
            return self._depth[account]
        if account not in self.parent and account not in self.roots:
            raise GraphError(f"unknown account in creation forest: {account!r}")
        chain = []
        node = account
        while node not in self._depth:
            if node in self.roots:
                self._depth[node] = 0
                break
            chain.append(node)
            node = self.parent[node][0]
        for n in reversed(chain):
            self._depth[n] = self._depth[self.parent[n][0]] + 1
        return self._depth[account]

    def max_depth(self) -> int:
        return max((self.depth(n) for n in self.parent), default=0)


def build_eacg(snapshot, window: ObservationWindow) -> Eacg:
    """Build the creation forest from a parsed snapshot. Accounts whose
    creator is absent from the snapshot become roots."""
    accounts = snapshot.accounts if hasattr(snapshot, "accounts") else snapshot
    g = Eacg()
    for name, record in accounts.items():
        if record.creator is None or record.creator not in accounts:
            g.roots.add(name)
        else:
            g.parent[name] = (record.creator, window.day_index(record.created_at))
            g.children.setdefault(record.creator, []).append(name)
    # forest identity: every non-root has exactly one parent by construction
    return g


class Ecig:
    """Contract invocation graph: (caller, contract) edges annotated with
    per-(day, action) invocation counts."""

    def __init__(self):
        self.out = {}  # caller -> contract -> (day, action) -> count

    def add_invocation(self, caller, contract, day, action, count=1):
        slots = self.out.setdefault(caller, {}).setdefault(contract, {})
        key = (day, action)
        slots[key] = slots.get(key, 0) + count

    @property
    def nodes(self):
        seen = set(self.out)
        for targets in self.out.values():
            seen.update(targets)
        return seen

    def edges(self):
        for caller, targets in self.out.items():
            for contract, slots in targets.items():
                yield caller, contract, slots

    def total_invocations(self) -> int:
        return sum(c for _, _, slots in self.edges() for c in slots.values())

    def out_daily_counts(self, account, exclude=()):
        """day -> number of invocations by `account`, optionally skipping
        some target contracts (e.g. eosio.token, counted as transfers)."""
        counts = {}
        for contract, slots in self.out.get(account, {}).items():
            if contract in exclude:
                continue
            for (day, _), c in slots.items():
                counts[day] = counts.get(day, 0) + c
        return counts

    def target_counts(self, account, exclude=()):
        """contract -> total invocations by `account`."""
        totals = {}
        for contract, slots in self.out.get(account, {}).items():
            if contract in exclude:
                continue
            totals[contract] = sum(slots.values())
        return totals


def build_ecig(actions, window: ObservationWindow, contract_accounts=None) -> Ecig:
    """Count invocations per (caller, contract, day, action).

    Callers are the authorizing actors; notification copies do not count.
    When `contract_accounts` is given, only executing contracts in that
    set count; by default every executing account counts (it did run code,
    including the system account).
    """
    g = Ecig()
    for record in actions:
        if record.kind not in INVOCATION_KINDS:
            continue
        if contract_accounts is not None and record.executing_contract not in contract_accounts:
            continue
        g.add_invocation(
            record.actor,
            record.executing_contract,
            window.day_index(record.timestamp),
            record.action_name,
        )
    return g


def silent_accounts(emfg: Emfg, ecig: Ecig, snapshot) -> set:
    """Accounts that never send money and never invoke a contract.
    Receiving EOS does not disqualify."""
    accounts = snapshot.accounts if hasattr(snapshot, "accounts") else snapshot
    silent = set()
    for name in accounts:
        if emfg.out.get(name):
            continue
        if ecig.out.get(name):
            continue
        silent.add(name)
    return silent


def eacg_depth(eacg: Eacg, account) -> int:
    return eacg.depth(account)


# ---------------------------------------------------------------------------
# Generic directed view + exports


class DiGraph:
    """Minimal weighted digraph used by the metrics layer."""

    def __init__(self):
        self.succ = {}  # u -> v -> weight (float)
        self.pred = {}  # v -> u -> weight

    def add_node(self, u):
        self.succ.setdefault(u, {})
        self.pred.setdefault(u, {})

    def add_edge(self, u, v, weight=1.0):
        self.add_node(u)
        self.add_node(v)
        self.succ[u][v] = self.succ[u].get(v, 0.0) + weight
        self.pred[v][u] = self.pred[v].get(u, 0.0) + weight

    @property
    def nodes(self):
        return self.succ.keys()

    def node_count(self):
        return len(self.succ)

    def edge_count(self):
        return sum(len(d) for d in self.succ.values())

    def edges(self):
        for u, targets in self.succ.items():
            for v, w in targets.items():
                yield u, v, w

    def out_degree(self, u):
        return len(self.succ.get(u, ()))

    def in_degree(self, u):
        return len(self.pred.get(u, ()))


def emfg_to_digraph(emfg: Emfg) -> DiGraph:
    g = DiGraph()
    for src, dst, days in emfg.edges():
        g.add_edge(src, dst, float(sum(w for w, _ in days.values())))
    for node in emfg.nodes:
        g.add_node(node)
    return g


def eacg_to_digraph(eacg: Eacg) -> DiGraph:
    g = DiGraph()
    for child, (creator, _) in eacg.parent.items():
        g.add_edge(creator, child, 1.0)
    for node in eacg.roots:
        g.add_node(node)
    return g


def ecig_to_digraph(ecig: Ecig) -> DiGraph:
    g = DiGraph()
    for caller, contract, slots in ecig.edges():
        g.add_edge(caller, contract, float(sum(slots.values())))
    return g


def degree_histogram(graph: DiGraph, direction="total"):
    """Histogram degree -> node count; counts every node, so the values
    sum to the node count."""
    if direction not in ("in", "out", "total"):
        raise ValueError(f"bad direction: {direction!r}")
    hist = {}
    for node in graph.nodes:
        if direction == "in":
            d = graph.in_degree(node)
        elif direction == "out":
            d = graph.out_degree(node)
        else:
            d = graph.in_degree(node) + graph.out_degree(node)
        hist[d] = hist.get(d, 0) + 1
    return hist


def power_law_alpha(hist) -> float | None:
    """Maximum-likelihood power-law exponent (advisory only), over
    degrees >= 1 via the continuous Hill estimator."""
    degrees = [d for d, c in hist.items() for _ in range(c) if d >= 1]
    if len(degrees) < 2:
        return None
    dmin = min(degrees)
    s = sum(math.log(d / dmin) for d in degrees)
    if s == 0:
        return None
    return 1.0 + len(degrees) / s


def export_histogram_csv(hist, path, direction="total"):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["degree", "count"])
        for degree in sorted(hist):
            writer.writerow([degree, hist[degree]])


def export_edges_csv(graph: DiGraph, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["from", "to", "weight"])
        for u, v, w in sorted(graph.edges()):
            writer.writerow([u, v, repr(w)])


def export_dot(graph: DiGraph, path, max_nodes=200):
    """DOT export of a bounded subgraph (nodes picked by descending total
    degree, name-ascending ties)."""
    ranked = sorted(
        graph.nodes,
        key=lambda n: (-(graph.in_degree(n) + graph.out_degree(n)), n),
    )
    keep = set(ranked[:max_nodes])
    with open(path, "w") as fh:
        fh.write("digraph g {\n")
        for node in sorted(keep):
            fh.write(f'  "{node}";\n')
        for u, v, w in sorted(graph.edges()):
            if u in keep and v in keep:
                fh.write(f'  "{u}" -> "{v}" [weight={w:g}];\n')
        fh.write("}\n")
