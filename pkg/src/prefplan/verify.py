"""Independent verification: value iteration, strategy condition checks, rollouts.

Value iteration is the numeric oracle for the qualitative solvers.  The
strategy checker replays a strategy's induced chain and tests the two
defining conditions directly (no improving path un-reached, no regressing
edge reachable), independent of how the strategy was synthesized.
"""

from __future__ import annotations

import csv
import io
import random
from dataclasses import dataclass, field

import numpy as np

from .synthesis import (
    BOTTOM,
    CompositePolicy,
    ImprovementCache,
    MdpView,
    ProductMdp,
    Strategy,
    aswin,
    is_improvement,
    mp_nodes,
    pwin,
    z_set,
)

__all__ = [
    "ValueIterationError",
    "value_iteration",
    "InducedChain",
    "build_induced_chain",
    "StrategyReport",
    "check_strategy_conditions",
    "EpisodeStats",
    "monte_carlo",
    "stats_to_json",
    "stats_to_csv",
]


class ValueIterationError(RuntimeError):
    """Raised when the Bellman iteration fails to converge."""


def value_iteration(view: MdpView, target, max_iter: int = 100000, tol: float = 1e-12):
    """Max reachability probabilities via Bellman backups.

    Returns a dict state -> probability.  Target states are clamped to one;
    iteration stops when the sup-norm change drops below ``tol``.
    """
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    target = frozenset(target)
    if not target:
        raise ValueError("target must be nonempty")
    states = list(view.states)
    index = {s: i for i, s in enumerate(states)}
    n = len(states)

    # One sparse triplet block per (state, action); backups are vectorized
    # with segment maxima over the per-action expectations.
    src_rows = []
    succ_cols = []
    probs = []
    row_of_entry = []
    entry = 0
    for s in states:
        if s in target:
            continue
        for a in view.enabled(s):
            pairs = [(index[t], p) for t, p in view.dist(s, a) if p > 0]
            if not pairs:
                continue
            for t, p in pairs:
                src_rows.append(entry)
                succ_cols.append(t)
                probs.append(p)
            row_of_entry.append(index[s])
            entry += 1
    src_rows = np.asarray(src_rows, dtype=np.int64)
    succ_cols = np.asarray(succ_cols, dtype=np.int64)
    probs = np.asarray(probs, dtype=np.float64)
    row_of_entry = np.asarray(row_of_entry, dtype=np.int64)

    values = np.zeros(n, dtype=np.float64)
    for s in target:
        values[index[s]] = 1.0
    residual = 0.0
    for _ in range(max_iter):
        expectations = np.zeros(entry, dtype=np.float64)
        np.add.at(expectations, src_rows, probs * values[succ_cols])
        new = values.copy()
        if entry:
            best = np.zeros(n, dtype=np.float64)
            np.maximum.at(best, row_of_entry, expectations)
            new[row_of_entry] = best[row_of_entry]
        residual = float(np.max(np.abs(new - values)))
        values = new
        if residual < tol:
            break
    else:
        raise ValueIterationError(f"no convergence after {max_iter} iterations (residual {residual:g})")
    return {s: float(values[index[s]]) for s in states}


# ---------------------------------------------------------------------------
# Strategy condition checking
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InducedChain:
    """States and edges reachable from a strategy's domain under its actions.

    Edges carry improving/regressing marks derived from the improvement
    relation on the underlying product states.
    """

    states: frozenset
    edges: tuple  # of (v, action, v2, prob)
    improving: frozenset  # of (v, v2)
    regressing: frozenset  # of (v, v2)
    parents: dict  # v2 -> (v, action) witness for counterexample paths


def build_induced_chain(pm: ProductMdp, strategy: Strategy, cache: ImprovementCache) -> InducedChain:
    reached = set(strategy.actions)
    frontier = sorted(reached)
    edges = []
    improving = set()
    regressing = set()
    parents = {}
    seen_edges = set()
    while frontier:
        nxt = []
        for v in frontier:
            actions = strategy.actions.get(v)
            if actions is None:
                continue  # left the domain; execution stops here
            for a in sorted(actions):
                for w, p in pm.dist(v, a):
                    if p <= 0 or (v, a, w) in seen_edges:
                        continue
                    seen_edges.add((v, a, w))
                    edges.append((v, a, w, p))
                    if is_improvement(pm, v, w, cache):
                        improving.add((v, w))
                    if is_improvement(pm, w, v, cache):
                        regressing.add((v, w))
                    if w not in reached:
                        reached.add(w)
                        parents[w] = (v, a)
                        nxt.append(w)
        frontier = nxt
    return InducedChain(
        states=frozenset(reached),
        edges=tuple(edges),
        improving=frozenset(improving),
        regressing=frozenset(regressing),
        parents=parents,
    )


@dataclass(frozen=True)
class StrategyReport:
    mode: str
    ok: bool
    condition_a: bool
    condition_b: bool
    regressing_edges: tuple
    stuck_states: tuple  # domain states violating condition (a)
    bottom_based_improvements: tuple  # improving edges that exist only via the bottom node
    integrity_errors: tuple


def _trace(chain: InducedChain, v):
    path = [v]
    while path[0] in chain.parents:
        parent, _ = chain.parents[path[0]]
        path.insert(0, parent)
    return tuple(path)


def check_strategy_conditions(
    pm: ProductMdp,
    strategy: Strategy,
    mode: str,
    cache: ImprovementCache,
) -> StrategyReport:
    """Test the defining strategy conditions on the induced chain.

    (a) an improving transition is reached: with positive probability for
    positively-improving strategies, with probability one for almost-surely
    improving ones; (b) no reachable transition regresses.  Verified on the
    doubled chain so the check mirrors the definitions, not the synthesizer.
    """
    if mode not in ("spi", "sasi"):
        raise ValueError(f"unknown mode {mode!r}")
    if not strategy.actions:
        raise ValueError("strategy domain is empty")

    integrity = []
    for v, actions in strategy.actions.items():
        enabled = set(pm.enabled(v))
        for a in actions:
            if a not in enabled:
                integrity.append((v, a))
    if integrity:
        return StrategyReport(
            mode=mode,
            ok=False,
            condition_a=False,
            condition_b=False,
            regressing_edges=(),
            stuck_states=(),
            bottom_based_improvements=(),
            integrity_errors=tuple(sorted(integrity)),
        )

    chain = build_induced_chain(pm, strategy, cache)
    condition_b = not chain.regressing

    # Doubled chain: the flag records "just crossed an improving edge".
    # The set-valued strategy induces a Markov chain (every chosen action is
    # taken with positive probability), so per state the actions collapse
    # into one uniform mixture; only the support matters for (a).  Execution
    # stops where the strategy is undefined (absorbing there).
    def doubled_states():
        out = []
        for v in sorted(chain.states):
            out.append((v, False))
            out.append((v, True))
        return tuple(out)

    succ = {}
    for v, a, w, p in chain.edges:
        succ.setdefault(v, {}).setdefault(a, []).append((w, p))

    def enabled(state):
        v, _ = state
        if v in strategy.actions and v in succ:
            return [0]
        return [-1]

    def dist(state, a):
        v, flag = state
        if a == -1:
            return (((v, flag), 1.0),)
        by_action = succ[v]
        share = 1.0 / len(by_action)
        mixed: dict = {}
        for pairs in by_action.values():
            for w, p in pairs:
                key = (w, (v, w) in chain.improving)
                mixed[key] = mixed.get(key, 0.0) + share * p
        return tuple(sorted(mixed.items()))

    dview = MdpView(states=doubled_states(), enabled=enabled, dist=dist)
    targets = frozenset((v, True) for v in chain.states)
    if mode == "spi":
        region = pwin(dview, targets).region
    else:
        region = aswin(dview, targets).region
    stuck = tuple(v for v in sorted(strategy.actions) if (v, False) not in region)
    condition_a = not stuck

    bottom = tuple(
        sorted(
            (v, w)
            for v, w in chain.improving
            if mp_nodes(pm, z_set(pm, v, cache)) == frozenset({BOTTOM})
        )
    )
    return StrategyReport(
        mode=mode,
        ok=condition_a and condition_b,
        condition_a=condition_a,
        condition_b=condition_b,
        regressing_edges=tuple(sorted((_trace(chain, v), v, w) for v, w in chain.regressing)),
        stuck_states=stuck,
        bottom_based_improvements=bottom,
        integrity_errors=(),
    )


# ---------------------------------------------------------------------------
# Monte-Carlo rollout
# ---------------------------------------------------------------------------


@dataclass
class EpisodeRow:
    episode: int
    seed: int
    steps: int
    improvements: int
    regressions: int
    final_node: object  # node id or None
    truncated: bool
    unsatisfiable: bool


@dataclass
class EpisodeStats:
    episodes: int
    seed: int
    horizon: int
    improvements_histogram: dict = field(default_factory=dict)
    final_node_distribution: dict = field(default_factory=dict)
    regressions_observed: int = 0
    truncated_episodes: int = 0
    unsatisfiable_episodes: int = 0
    rows: list = field(default_factory=list)


_MIX = 0x9E3779B97F4A7C15
_MASK = (1 << 63) - 1


def _episode_seed(seed: int, episode: int) -> int:
    # Splittable counter scheme: episode seeds are independent of rollout
    # order, so aggregation is order-insensitive and byte-reproducible.
    return ((seed * 0x100000001B3) ^ (episode * _MIX)) & _MASK


def monte_carlo(
    pm: ProductMdp,
    policy: CompositePolicy,
    episodes: int,
    horizon: int = None,
    seed: int = 0,
) -> EpisodeStats:
    """Seeded rollouts of a composite policy on the product MDP.

    Improvements and regressions are counted per traversed edge; episodes
    stop at the horizon (flagged truncated) or in an absorbing state.
    """
    if episodes < 1:
        raise ValueError("need at least one episode")
    if horizon is None:
        horizon = 10 * pm.n_states()
    if horizon < 1:
        raise ValueError("horizon must be positive")
    cache = policy.result.cache
    stats = EpisodeStats(episodes=episodes, seed=seed, horizon=horizon)

    for ep in range(episodes):
        ep_seed = _episode_seed(seed, ep)
        rng = random.Random(ep_seed)
        v = pm.initial
        improvements = 0
        regressions = 0
        unsatisfiable = False
        truncated = True
        steps = 0
        for _ in range(horizon):
            a, phase = policy.step(v, rng)
            if phase == "unsatisfiable":
                unsatisfiable = True
            dist = pm.dist(v, a)
            if len(dist) == 1 and dist[0][0] == v:
                truncated = False
                break
            r = rng.random()
            acc = 0.0
            nxt = dist[-1][0]
            for t, p in dist:
                acc += p
                if r < acc:
                    nxt = t
                    break
            steps += 1
            if is_improvement(pm, v, nxt, cache):
                improvements += 1
            if is_improvement(pm, nxt, v, cache):
                regressions += 1
            v = nxt
        final_q = pm.state_pairs[v][1]
        pdfa = pm.pdfa
        if final_q in pdfa.final and pdfa.tags[final_q]:
            final_node = pdfa.node_of_state[final_q]
        else:
            final_node = None
        stats.rows.append(
            EpisodeRow(
                episode=ep,
                seed=ep_seed,
                steps=steps,
                improvements=improvements,
                regressions=regressions,
                final_node=final_node,
                truncated=truncated,
                unsatisfiable=unsatisfiable,
            )
        )
        stats.improvements_histogram[improvements] = (
            stats.improvements_histogram.get(improvements, 0) + 1
        )
        key = "none" if final_node is None else str(final_node)
        stats.final_node_distribution[key] = stats.final_node_distribution.get(key, 0) + 1
        stats.regressions_observed += regressions
        if truncated:
            stats.truncated_episodes += 1
        if unsatisfiable:
            stats.unsatisfiable_episodes += 1
    return stats


def stats_to_json(stats: EpisodeStats) -> dict:
    total = stats.episodes
    return {
        "episodes": stats.episodes,
        "seed": stats.seed,
        "horizon": stats.horizon,
        "improvements_histogram": {
            str(k): v for k, v in sorted(stats.improvements_histogram.items())
        },
        "final_node_distribution": {
            k: {"count": v, "frequency": v / total}
            for k, v in sorted(stats.final_node_distribution.items())
        },
        "regressions_observed": stats.regressions_observed,
        "truncated_episodes": stats.truncated_episodes,
        "unsatisfiable_episodes": stats.unsatisfiable_episodes,
    }


def stats_to_csv(stats: EpisodeStats) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        ["episode", "seed", "steps", "improvements", "regressions", "final_node", "truncated", "unsatisfiable"]
    )
    for row in stats.rows:
        writer.writerow(
            [
                row.episode,
                row.seed,
                row.steps,
                row.improvements,
                row.regressions,
                "" if row.final_node is None else row.final_node,
                int(row.truncated),
                int(row.unsatisfiable),
            ]
        )
    return buf.getvalue()
