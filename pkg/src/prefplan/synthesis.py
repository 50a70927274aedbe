"""Qualitative synthesis: product MDP, winning regions, and improving strategies.

The pipeline: take the product of a labeled MDP with a preference DFA, compute
per-node almost-sure winning regions, derive the improvement relation between
product states, double the product into an improvement MDP whose final states
mark improving transitions, and reduce safe positively/almost-surely improving
strategy synthesis to positive/almost-sure reachability there.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .mdp import LabeledMdp
from .prefdfa import PreferenceDfa
from .scltl import CapacityError

__all__ = [
    "BOTTOM",
    "ProductMdp",
    "WinningRegion",
    "ImprovementMdp",
    "Strategy",
    "SynthesisResult",
    "CompositePolicy",
    "MdpView",
    "view_of_mdp",
    "build_product",
    "pwin",
    "aswin",
    "aswin_by_node",
    "z_set",
    "mp_nodes",
    "is_improvement",
    "build_improvement_mdp",
    "synthesize",
    "strategy_to_json",
    "regions_to_json",
    "improvement_mdp_to_dot",
]

DEFAULT_PRODUCT_CAP = 10**6

# Virtual bottom node: a state from which nothing is almost-surely winnable
# sits below every real node, so gaining any guarantee counts as improvement.
BOTTOM = -1


@dataclass(frozen=True)
class MdpView:
    """Minimal solver-facing view: states, enabled actions, distributions."""

    states: tuple
    enabled: object  # state -> iterable of actions
    dist: object  # (state, action) -> iterable of (successor, prob)


def view_of_mdp(mdp: LabeledMdp) -> MdpView:
    return MdpView(
        states=tuple(range(mdp.n_states())),
        enabled=mdp.enabled,
        dist=lambda s, a: mdp.transitions[(s, a)],
    )


@dataclass(frozen=True)
class ProductMdp:
    """Reachable product of an MDP with a preference DFA.

    States are indices into ``state_pairs`` (mdp state, dfa state) pairs;
    ``node_members`` maps each preference-graph node to its product states
    and ``node_edges`` mirrors the graph edges over nonempty members.
    """

    mdp: LabeledMdp
    pdfa: PreferenceDfa
    state_pairs: tuple  # of (s, q)
    pair_index: dict  # (s, q) -> product index
    transitions: dict  # (v, a) -> ((v', p), ...)
    initial: int
    final: frozenset
    node_members: dict  # node id -> frozenset of product states
    node_edges: frozenset  # (worse node id, better node id)

    def n_states(self) -> int:
        return len(self.state_pairs)

    def enabled(self, v: int):
        s, _ = self.state_pairs[v]
        return [a for a in self.mdp.enabled(s) if (v, a) in self.transitions]

    def dist(self, v: int, a: int):
        return self.transitions[(v, a)]

    def view(self) -> MdpView:
        return MdpView(
            states=tuple(range(self.n_states())),
            enabled=self.enabled,
            dist=self.dist,
        )


def build_product(
    mdp: LabeledMdp,
    pdfa: PreferenceDfa,
    state_cap: int = DEFAULT_PRODUCT_CAP,
) -> ProductMdp:
    """Synchronous product; the automaton consumes the label of each state
    entered, including the initial one."""
    if set(mdp.atoms) - set(pdfa.alphabet):
        raise ValueError(
            f"MDP atoms {sorted(mdp.atoms)} not covered by preference alphabet "
            f"{sorted(pdfa.alphabet)}"
        )
    if len(mdp.initial) != 1:
        raise ValueError("product construction expects a single initial state")
    s0 = mdp.initial[0][0]
    q0 = pdfa.step(pdfa.initial, mdp.labels[s0])

    pair_index = {(s0, q0): 0}
    state_pairs = [(s0, q0)]
    transitions = {}
    frontier = [0]
    while frontier:
        v = frontier.pop()
        s, q = state_pairs[v]
        for a in mdp.enabled(s):
            dist = []
            for s2, p in mdp.transitions[(s, a)]:
                q2 = pdfa.step(q, mdp.labels[s2])
                w = pair_index.get((s2, q2))
                if w is None:
                    w = len(state_pairs)
                    if w >= state_cap:
                        raise CapacityError(f"product exceeded {state_cap} states")
                    pair_index[(s2, q2)] = w
                    state_pairs.append((s2, q2))
                    frontier.append(w)
                dist.append((w, p))
            transitions[(v, a)] = tuple(dist)

    final = frozenset(v for v, (_, q) in enumerate(state_pairs) if q in pdfa.final)
    node_members = {}
    for node in pdfa.graph.nodes:
        members = frozenset(
            v for v, (_, q) in enumerate(state_pairs) if q in node.states
        )
        if members:
            node_members[node.node_id] = members
    node_edges = frozenset(
        (worse, better)
        for worse, better in pdfa.graph.edges
        if worse in node_members and better in node_members
    )
    return ProductMdp(
        mdp=mdp,
        pdfa=pdfa,
        state_pairs=tuple(state_pairs),
        pair_index=pair_index,
        transitions=transitions,
        initial=0,
        final=final,
        node_members=node_members,
        node_edges=node_edges,
    )


# ---------------------------------------------------------------------------
# Qualitative solvers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WinningRegion:
    kind: str  # "almost-sure" | "positive"
    target: frozenset
    region: frozenset
    strategy: dict  # state -> frozenset of actions (outside the target)


def _predecessor_map(view: MdpView, allowed=None):
    preds: dict = {s: [] for s in view.states}
    for s in view.states:
        actions = allowed[s] if allowed is not None else view.enabled(s)
        for a in actions:
            for t, p in view.dist(s, a):
                if p > 0:
                    preds[t].append((s, a))
    return preds


def _distances_to(view: MdpView, target, allowed=None):
    """BFS distance over positive-probability edges into the target set."""
    preds = _predecessor_map(view, allowed)
    dist = {t: 0 for t in target}
    frontier = sorted(target)
    while frontier:
        nxt = []
        for t in frontier:
            for s, _ in preds[t]:
                if s not in dist:
                    dist[s] = dist[t] + 1
                    nxt.append(s)
        frontier = sorted(nxt)
    return dist


def pwin(view: MdpView, target) -> WinningRegion:
    """Positive-probability reachability: backward closure over the graph.

    The strategy keeps every action with a successor strictly closer to the
    target, so any tie-break of it witnesses positive reachability.
    """
    target = frozenset(target)
    dist = _distances_to(view, target)
    region = frozenset(dist)
    strategy = {}
    for s in region - target:
        keep = frozenset(
            a
            for a in view.enabled(s)
            if any(p > 0 and dist.get(t, -1) == dist[s] - 1 for t, p in view.dist(s, a))
        )
        strategy[s] = keep
    return WinningRegion(kind="positive", target=target, region=region, strategy=strategy)


def aswin(view: MdpView, target) -> WinningRegion:
    """Almost-sure reachability by the alternating fixpoint.

    Repeatedly restrict to the sub-MDP whose states can still reach the
    target, dropping actions that may leak outside it; target states are
    treated as absorbing and always stay in the region.
    """
    target = frozenset(target)
    region = set(view.states)
    allowed = {
        s: (list(view.enabled(s)) if s not in target else [])
        for s in view.states
    }
    while True:
        reachable = _distances_to(view, target & region, allowed)
        bad = region - set(reachable)
        if not bad:
            break
        region -= bad
        for s in region:
            if s in target:
                continue
            allowed[s] = [
                a
                for a in allowed[s]
                if all(t in region for t, p in view.dist(s, a) if p > 0)
            ]
    dist = _distances_to(view, target & region, allowed)
    strategy = {}
    for s in sorted(region - target):
        keep = frozenset(
            a
            for a in allowed[s]
            if any(p > 0 and dist.get(t, -1) == dist[s] - 1 for t, p in view.dist(s, a))
        )
        strategy[s] = keep
    return WinningRegion(
        kind="almost-sure", target=target, region=frozenset(region), strategy=strategy
    )


# ---------------------------------------------------------------------------
# Improvement relation
# ---------------------------------------------------------------------------


@dataclass
class ImprovementCache:
    """Per-product caches shared by the improvement machinery."""

    product: ProductMdp
    aswin_by_node: dict = field(default_factory=dict)
    mp_by_state: dict = field(default_factory=dict)

    def __post_init__(self):
        view = self.product.view()
        for node_id, members in sorted(self.product.node_members.items()):
            self.aswin_by_node[node_id] = aswin(view, members)


def aswin_by_node(pm: ProductMdp) -> ImprovementCache:
    return ImprovementCache(product=pm)


def z_set(pm: ProductMdp, v: int, cache: ImprovementCache) -> frozenset:
    """Preference-graph nodes almost-surely reachable from v."""
    return frozenset(
        node_id
        for node_id, region in cache.aswin_by_node.items()
        if v in region.region
    )


def mp_nodes(pm: ProductMdp, nodes: frozenset) -> frozenset:
    """Maximal elements of a node set under the graph edges; empty sets map
    to the virtual bottom node."""
    if not nodes:
        return frozenset({BOTTOM})
    return frozenset(
        n for n in nodes if not any((n, m) in pm.node_edges for m in nodes)
    )


def _mp_of_state(pm: ProductMdp, v: int, cache: ImprovementCache) -> frozenset:
    hit = cache.mp_by_state.get(v)
    if hit is None:
        hit = mp_nodes(pm, z_set(pm, v, cache))
        cache.mp_by_state[v] = hit
    return hit


def _edge_up(pm: ProductMdp, a: int, b: int) -> bool:
    if a == BOTTOM:
        return b != BOTTOM
    if b == BOTTOM:
        return False
    return (a, b) in pm.node_edges


def is_improvement(pm: ProductMdp, v1: int, v2: int, cache: ImprovementCache) -> bool:
    """True iff v2 improves on v1: some most-preferred almost-surely winnable
    node of v2 sits strictly above one of v1's."""
    mp1 = _mp_of_state(pm, v1, cache)
    mp2 = _mp_of_state(pm, v2, cache)
    return any(_edge_up(pm, a, b) for a in mp1 for b in mp2)


def improvement_via_bottom(pm: ProductMdp, v1: int, v2: int, cache: ImprovementCache) -> bool:
    """Whether an improvement from v1 to v2 exists only through the virtual
    bottom node (nothing was guaranteed at v1)."""
    if not is_improvement(pm, v1, v2, cache):
        return False
    mp1 = _mp_of_state(pm, v1, cache)
    return mp1 == frozenset({BOTTOM})


# ---------------------------------------------------------------------------
# Improvement MDP
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ImprovementMdp:
    """Doubled product: the flag marks states just entered by an improvement.

    An action is enabled only if none of its successors would be a
    regression; states left with no action get a marker self-loop so the
    solvers stay total (such states are never positively winning).
    """

    product: ProductMdp
    enabled_actions: dict  # v -> tuple of enabled product actions
    dead: frozenset  # product states with no enabled action
    final: frozenset  # improvement-mdp states (v, True)

    DEAD_ACTION = -1

    def states(self):
        n = self.product.n_states()
        return tuple((v, flag) for v in range(n) for flag in (False, True))

    def enabled(self, state):
        v, _ = state
        if v in self.dead:
            return [self.DEAD_ACTION]
        return list(self.enabled_actions[v])

    def dist(self, state, a):
        v, flag = state
        if a == self.DEAD_ACTION:
            return (((v, flag), 1.0),)
        out = []
        for w, p in self.product.dist(v, a):
            improving = (not flag) and self._improves(v, w)
            out.append(((w, improving), p))
        return tuple(out)

    def _improves(self, v, w):
        return (v, w) in self._improving_pairs

    # populated by build_improvement_mdp
    _improving_pairs: frozenset = frozenset()

    def view(self) -> MdpView:
        return MdpView(states=self.states(), enabled=self.enabled, dist=self.dist)


def build_improvement_mdp(pm: ProductMdp, cache: ImprovementCache) -> ImprovementMdp:
    enabled_actions = {}
    dead = set()
    improving_pairs = set()
    for v in range(pm.n_states()):
        keep = []
        for a in pm.enabled(v):
            successors = [w for w, p in pm.dist(v, a) if p > 0]
            # Regression guard: drop the action if the move could lose ground.
            if any(is_improvement(pm, w, v, cache) for w in successors):
                continue
            keep.append(a)
            for w in successors:
                if is_improvement(pm, v, w, cache):
                    improving_pairs.add((v, w))
        if keep:
            enabled_actions[v] = tuple(keep)
        else:
            enabled_actions[v] = ()
            dead.add(v)
    final = frozenset((v, True) for v in range(pm.n_states()))
    im = ImprovementMdp(
        product=pm,
        enabled_actions=enabled_actions,
        dead=frozenset(dead),
        final=final,
    )
    object.__setattr__(im, "_improving_pairs", frozenset(improving_pairs))
    return im


# ---------------------------------------------------------------------------
# Strategies
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Strategy:
    """Partial set-valued strategy over product states; absent means undefined."""

    mode: str  # "spi" | "sasi"
    actions: dict  # v -> frozenset of actions

    def defined_at(self, v: int) -> bool:
        return v in self.actions

    def get(self, v: int):
        return self.actions.get(v)


@dataclass(frozen=True)
class SynthesisResult:
    product: ProductMdp
    cache: ImprovementCache
    improvement_mdp: ImprovementMdp
    spi: Strategy
    sasi: Strategy
    spi_region: WinningRegion
    sasi_region: WinningRegion


def synthesize(pm: ProductMdp, cache: ImprovementCache = None) -> SynthesisResult:
    """Safe positively improving and safe almost-surely improving strategies.

    Both reduce to reachability of the improvement-marked states from the
    unmarked copy of each product state; only real product actions are kept.
    """
    if cache is None:
        cache = aswin_by_node(pm)
    im = build_improvement_mdp(pm, cache)
    view = im.view()
    positive = pwin(view, im.final)
    almost = aswin(view, im.final)

    def project(region: WinningRegion, mode: str) -> Strategy:
        actions = {}
        for v in range(pm.n_states()):
            state = (v, False)
            if state in region.region and state not in region.target:
                acts = frozenset(a for a in region.strategy.get(state, ()) if a >= 0)
                if acts:
                    actions[v] = acts
        return Strategy(mode=mode, actions=actions)

    return SynthesisResult(
        product=pm,
        cache=cache,
        improvement_mdp=im,
        spi=project(positive, "spi"),
        sasi=project(almost, "sasi"),
        spi_region=positive,
        sasi_region=almost,
    )


class CompositePolicy:
    """Runtime policy: chain improvements while any exist, then carry out the
    almost-sure strategy for a most-preferred winnable node.

    Deterministic for a fixed tie-break; the "uniform" mode draws from the
    permissive action set with the caller-supplied RNG.
    """

    def __init__(self, result: SynthesisResult, mode: str = "sasi", tie_break: str = "lowest"):
        if mode not in ("spi", "sasi"):
            raise ValueError(f"unknown mode {mode!r}")
        if tie_break not in ("lowest", "uniform"):
            raise ValueError(f"unknown tie-break {tie_break!r}")
        self.result = result
        self.mode = mode
        self.tie_break = tie_break
        self.improvement_strategy = result.spi if mode == "spi" else result.sasi
        self._satisficing = {}

    def _pick(self, actions, rng=None):
        ordered = sorted(actions)
        if self.tie_break == "uniform" and rng is not None and len(ordered) > 1:
            return ordered[rng.randrange(len(ordered))]
        return ordered[0]

    def _satisficing_actions(self, v: int):
        pm = self.result.product
        cache = self.result.cache
        mp = _mp_of_state(pm, v, cache)
        if mp == frozenset({BOTTOM}):
            return None
        node = min(mp)
        region = cache.aswin_by_node[node]
        acts = region.strategy.get(v)
        if acts:
            return acts
        # Already inside the node (or at its target): prefer actions that
        # keep every successor in the almost-sure region; a node once
        # achieved stays achieved, so anything enabled is acceptable.
        keep = [
            a
            for a in pm.enabled(v)
            if all(t in region.region for t, p in pm.dist(v, a) if p > 0)
        ]
        return frozenset(keep) if keep else frozenset(pm.enabled(v))

    def step(self, v: int, rng=None):
        """Action for product state v plus the phase that produced it.

        Phases: "improve" while the improvement strategy is defined,
        "satisfice" under the almost-sure strategy of the chosen node, and
        "unsatisfiable" when no guarantee exists at all.
        """
        if self.improvement_strategy.defined_at(v):
            return self._pick(self.improvement_strategy.get(v), rng), "improve"
        acts = self._satisficing_actions(v)
        if acts:
            return self._pick(acts, rng), "satisfice"
        pm = self.result.product
        enabled = pm.enabled(v)
        return self._pick(enabled, rng), "unsatisfiable"


# ---------------------------------------------------------------------------
# Exports
# ---------------------------------------------------------------------------


def _product_state_id(pm: ProductMdp, v: int) -> str:
    s, q = pm.state_pairs[v]
    return f"{pm.mdp.states[s]}#q{q}"


def strategy_to_json(pm: ProductMdp, strategy: Strategy) -> dict:
    entries = []
    for v in sorted(strategy.actions):
        entries.append(
            {
                "state": _product_state_id(pm, v),
                "actions": sorted(pm.mdp.actions[a] for a in strategy.actions[v]),
            }
        )
    undefined = [
        _product_state_id(pm, v)
        for v in range(pm.n_states())
        if v not in strategy.actions
    ]
    return {"mode": strategy.mode, "entries": entries, "undefined_states": undefined}


def strategy_from_json(pm: ProductMdp, doc: dict) -> Strategy:
    ids = {_product_state_id(pm, v): v for v in range(pm.n_states())}
    action_index = {name: a for a, name in enumerate(pm.mdp.actions)}
    actions = {}
    for entry in doc["entries"]:
        sid = entry["state"]
        if sid not in ids:
            raise ValueError(f"strategy references unknown product state {sid!r}")
        chosen = frozenset(action_index[name] for name in entry["actions"])
        if not chosen:
            raise ValueError(f"empty action set at {sid!r}")
        actions[ids[sid]] = chosen
    return Strategy(mode=doc["mode"], actions=actions)


def regions_to_json(pm: ProductMdp, cache: ImprovementCache) -> dict:
    nodes = {}
    for node_id, region in sorted(cache.aswin_by_node.items()):
        nodes[str(node_id)] = {
            "tags": sorted(
                t.render(pm.pdfa.spec)
                for t in pm.pdfa.graph.nodes[node_id].tags
            ),
            "members": sorted(_product_state_id(pm, v) for v in pm.node_members[node_id]),
            "almost_sure_region": sorted(_product_state_id(pm, v) for v in region.region),
        }
    return {"nodes": nodes, "edges": sorted([w, b] for w, b in pm.node_edges)}


def improvement_mdp_to_dot(im: ImprovementMdp) -> str:
    pm = im.product
    lines = ["digraph improvement_mdp {", "  rankdir=LR;"]
    for v in range(pm.n_states()):
        for flag in (False, True):
            name = f"v{v}{'T' if flag else 'B'}"
            label = _product_state_id(pm, v) + (" top" if flag else " bot")
            style = ' style=filled fillcolor="palegreen"' if flag else ""
            lines.append(f'  {name} [shape=box label="{label}"{style}];')
    for v in range(pm.n_states()):
        for flag in (False, True):
            src = f"v{v}{'T' if flag else 'B'}"
            for a in im.enabled((v, flag)):
                label = "dead" if a == im.DEAD_ACTION else pm.mdp.actions[a]
                for (w, wf), p in im.dist((v, flag), a):
                    dst = f"v{w}{'T' if wf else 'B'}"
                    lines.append(f'  {src} -> {dst} [label="{label}:{p:g}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
