"""Product construction, qualitative solvers, and improving-strategy synthesis."""

import pytest

from prefplan.synthesis import (
    BOTTOM,
    CompositePolicy,
    MdpView,
    aswin,
    aswin_by_node,
    build_improvement_mdp,
    build_product,
    improvement_mdp_to_dot,
    is_improvement,
    mp_nodes,
    pwin,
    regions_to_json,
    strategy_to_json,
    synthesize,
    view_of_mdp,
    z_set,
)
from prefplan.verify import value_iteration

from conftest import random_mdp, random_product


def chain_view():
    # s0 -> s1 -> s2(target), deterministic; s3 is an absorbing trap.
    states = (0, 1, 2, 3)

    def enabled(s):
        return [0]

    def dist(s, a):
        nxt = {0: ((1, 1.0),), 1: ((2, 1.0),), 2: ((2, 1.0),), 3: ((3, 1.0),)}
        return nxt[s]

    return MdpView(states=states, enabled=enabled, dist=dist)


def coin_view():
    # s0 --a--> {target 0.5, trap 0.5}; s1 --b--> {target 0.5, s1 0.5}
    states = (0, 1, 2, 3)

    def enabled(s):
        return [0]

    def dist(s, a):
        if s == 0:
            return ((2, 0.5), (3, 0.5))
        if s == 1:
            return ((2, 0.5), (1, 0.5))
        return ((s, 1.0),)

    return MdpView(states=states, enabled=enabled, dist=dist)


def test_pwin_chain():
    region = pwin(chain_view(), {2})
    assert region.region == {0, 1, 2}
    assert region.strategy[0] == {0}
    assert region.strategy[1] == {0}


def test_pwin_excludes_trap():
    region = pwin(coin_view(), {2})
    assert 3 not in region.region
    assert 0 in region.region  # positive probability suffices


def test_aswin_separates_positive_from_almost_sure():
    view = coin_view()
    almost = aswin(view, {2})
    positive = pwin(view, {2})
    assert 0 in positive.region and 0 not in almost.region
    assert 1 in almost.region  # the only exit from s1 is the target
    assert 2 in almost.region  # target states always count


def test_aswin_on_random_mdps_matches_value_iteration():
    for seed in range(20):
        mdp = random_mdp(seed, n_states=40, n_actions=3)
        view = view_of_mdp(mdp)
        import random as _r

        rng = _r.Random(seed + 1)
        target = frozenset(rng.sample(range(mdp.n_states()), 4))
        values = value_iteration(view, target)
        almost = aswin(view, target).region
        positive = pwin(view, target).region
        for s in view.states:
            assert (s in almost) == (values[s] >= 1 - 1e-6), (seed, s, values[s])
            assert (s in positive) == (values[s] > 1e-9), (seed, s, values[s])


def test_solver_strategies_are_themselves_winning():
    # Restrict each MDP to the returned permissive action sets and confirm
    # via value iteration that the strategies deliver what the regions claim.
    for seed in range(10):
        mdp = random_mdp(seed, n_states=30, n_actions=3)
        view = view_of_mdp(mdp)
        import random as _r

        target = frozenset(_r.Random(seed).sample(range(mdp.n_states()), 3))
        almost = aswin(view, target)
        positive = pwin(view, target)

        def restricted(region):
            def enabled(s):
                if s in region.strategy and region.strategy[s]:
                    return sorted(region.strategy[s])
                return list(view.enabled(s))

            return MdpView(states=view.states, enabled=enabled, dist=view.dist)

        vals = value_iteration(restricted(almost), target)
        for s in almost.region:
            assert vals[s] >= 1 - 1e-6, (seed, s, vals[s])
        vals = value_iteration(restricted(positive), target)
        for s in positive.region:
            assert vals[s] > 1e-9, (seed, s, vals[s])


def test_aswin_strategy_stays_inside_region():
    for seed in range(8):
        mdp = random_mdp(seed, n_states=30)
        view = view_of_mdp(mdp)
        target = frozenset({0, 1})
        region = aswin(view, target)
        for s, actions in region.strategy.items():
            for a in actions:
                for t, p in view.dist(s, a):
                    if p > 0:
                        assert t in region.region


# ---------------------------------------------------------------------------
# Product
# ---------------------------------------------------------------------------


def test_product_shape_and_probabilities(po1_b4):
    atoms, spec, mdp, pdfa, pm = po1_b4
    assert pm.n_states() <= mdp.n_states() * len(pdfa.states)
    # Probabilities are copied verbatim onto the unique successor pair.
    for (v, a), dist in pm.transitions.items():
        s, q = pm.state_pairs[v]
        source = dict(mdp.transitions[(s, a)])
        for w, p in dist:
            s2, q2 = pm.state_pairs[w]
            assert q2 == pdfa.step(q, mdp.labels[s2])
            assert source[s2] == pytest.approx(p)


def test_product_initial_consumes_start_label(po1_b4):
    atoms, spec, mdp, pdfa, pm = po1_b4
    s0 = mdp.initial[0][0]
    assert pm.state_pairs[pm.initial] == (s0, pdfa.step(pdfa.initial, mdp.labels[s0]))


def test_product_alphabet_mismatch_rejected(po1_spec):
    atoms, spec = po1_spec
    from prefplan.prefdfa import build_preference_dfa

    pdfa = build_preference_dfa(spec, atoms)  # alphabet {A, B, E}
    mdp = random_mdp(3, n_states=5, atoms=("A", "Z"), label_density=0.5)
    with pytest.raises(ValueError, match="not covered"):
        build_product(mdp, pdfa)


def test_product_drops_unreachable_nodes(po2_b4):
    atoms, spec, mdp, pdfa, pm = po2_b4
    # The diagonally-satisfied D+F class exists in the automaton but no
    # gridworld path can satisfy both formulas, so it has no members.
    assert set(pm.node_members) < {n.node_id for n in pdfa.graph.nodes}


def test_w_membership_tracks_classes(po1_b4):
    atoms, spec, mdp, pdfa, pm = po1_b4
    for node_id, members in pm.node_members.items():
        node_states = set(pdfa.graph.nodes[node_id].states)
        for v in members:
            assert pm.state_pairs[v][1] in node_states


# ---------------------------------------------------------------------------
# z-sets and improvement
# ---------------------------------------------------------------------------


def test_z_set_contains_current_node(po1_b4):
    atoms, spec, mdp, pdfa, pm = po1_b4
    cache = aswin_by_node(pm)
    for node_id, members in pm.node_members.items():
        v = min(members)
        assert node_id in z_set(pm, v, cache)


def test_z_set_empty_at_low_battery_start(po1_b2):
    atoms, spec, mdp, pdfa, pm = po1_b2
    cache = aswin_by_node(pm)
    assert z_set(pm, pm.initial, cache) == frozenset()


def test_mp_nodes_bottom_for_empty(po1_b4):
    atoms, spec, mdp, pdfa, pm = po1_b4
    assert mp_nodes(pm, frozenset()) == frozenset({BOTTOM})


def test_improvement_via_direct_edge(po1_b4):
    atoms, spec, mdp, pdfa, pm = po1_b4
    cache = aswin_by_node(pm)
    # Pick members of the A-node and the B-node: the latter improves on the
    # former through the preference-graph edge.
    by_tags = {}
    for node in pdfa.graph.nodes:
        key = frozenset(t.render(spec) for t in node.tags)
        by_tags[key] = node.node_id
    n_a = by_tags[frozenset({"y(visit_B,visit_A)", "y(visit_E,visit_A)"})]
    n_b = by_tags[frozenset({"x(visit_B,visit_A)"})]
    v_a = min(pm.node_members[n_a])
    v_b = min(pm.node_members[n_b])
    assert is_improvement(pm, v_a, v_b, cache)
    assert not is_improvement(pm, v_b, v_a, cache)
    assert not is_improvement(pm, v_a, v_a, cache)


def test_improvement_from_nothing_via_bottom(po1_b2):
    atoms, spec, mdp, pdfa, pm = po1_b2
    cache = aswin_by_node(pm)
    v0 = pm.initial
    assert z_set(pm, v0, cache) == frozenset()
    some_winner = next(
        v for node in pm.node_members.values() for v in node
    )
    assert is_improvement(pm, v0, some_winner, cache)
    assert not is_improvement(pm, some_winner, v0, cache)


# ---------------------------------------------------------------------------
# Improvement MDP
# ---------------------------------------------------------------------------


def test_improvement_mdp_doubles_states(po1_b4):
    atoms, spec, mdp, pdfa, pm = po1_b4
    cache = aswin_by_node(pm)
    im = build_improvement_mdp(pm, cache)
    assert len(im.states()) == 2 * pm.n_states()
    assert len(im.final) == pm.n_states()


def test_improvement_mdp_routing(po1_b4):
    atoms, spec, mdp, pdfa, pm = po1_b4
    cache = aswin_by_node(pm)
    im = build_improvement_mdp(pm, cache)
    for v in range(pm.n_states()):
        for a in im.enabled_actions[v]:
            for (w, flag), p in im.dist((v, False), a):
                assert flag == is_improvement(pm, v, w, cache)
                assert p == dict(pm.dist(v, a))[w]
            for (w, flag), p in im.dist((v, True), a):
                assert flag is False  # all successors of marked states unmark


def test_improvement_mdp_disables_regressing_actions(po1_b4):
    atoms, spec, mdp, pdfa, pm = po1_b4
    cache = aswin_by_node(pm)
    im = build_improvement_mdp(pm, cache)
    for v in range(pm.n_states()):
        for a in pm.enabled(v):
            regresses = any(
                is_improvement(pm, w, v, cache) for w, p in pm.dist(v, a) if p > 0
            )
            assert (a in im.enabled_actions[v]) == (not regresses)


def test_dead_states_never_positively_winning():
    mdp, spec, pdfa, pm = random_product(3)
    cache = aswin_by_node(pm)
    im = build_improvement_mdp(pm, cache)
    result = synthesize(pm, cache)
    for v in im.dead:
        assert not result.spi.defined_at(v)
        assert not result.sasi.defined_at(v)


# ---------------------------------------------------------------------------
# Synthesis on the bundled scenarios
# ---------------------------------------------------------------------------


def action_names(mdp, actions):
    return sorted(mdp.actions[a] for a in actions)


def test_po1_battery4_sasi_selects_west(po1_b4):
    atoms, spec, mdp, pdfa, pm = po1_b4
    result = synthesize(pm)
    v0 = pm.initial
    assert result.sasi.defined_at(v0)
    assert action_names(mdp, result.sasi.get(v0)) == ["West"]
    policy = CompositePolicy(result, mode="sasi")
    action, phase = policy.step(v0)
    assert mdp.actions[action] == "West"
    assert phase == "improve"


def test_po1_battery2_sasi_undefined_spi_west(po1_b2):
    atoms, spec, mdp, pdfa, pm = po1_b2
    result = synthesize(pm)
    v0 = pm.initial
    assert not result.sasi.defined_at(v0)
    assert result.spi.defined_at(v0)
    assert action_names(mdp, result.spi.get(v0)) == ["West"]


def test_po2_battery4_sasi_north(po2_b4):
    atoms, spec, mdp, pdfa, pm = po2_b4
    result = synthesize(pm)
    v0 = pm.initial
    assert result.sasi.defined_at(v0)
    assert "North" in action_names(mdp, result.sasi.get(v0))
    policy = CompositePolicy(result, mode="sasi")
    action, phase = policy.step(v0)
    assert mdp.actions[action] == "North"


def test_no_improvement_possible_everywhere_undefined():
    # Single outcome: the graph has no edges, so nothing ever improves.
    from prefplan.prefdfa import build_preference_dfa
    from prefplan.preferences import PreferenceDeclarations, build_spec
    from prefplan.scltl import parse

    atoms = ("g",)
    decl = PreferenceDeclarations(
        atoms=atoms, outcomes=[("win", parse("F g", atoms))], statements=[]
    )
    spec = build_spec(decl)
    pdfa = build_preference_dfa(spec, atoms)
    mdp = random_mdp(11, n_states=12, atoms=atoms, label_density=0.2)
    pm = build_product(mdp, pdfa)
    result = synthesize(pm)
    assert not result.spi.actions
    assert not result.sasi.actions


def test_theorem_reduction_form(po1_b4):
    # Defined exactly on the unmarked copies inside the respective regions.
    atoms, spec, mdp, pdfa, pm = po1_b4
    result = synthesize(pm)
    for v in range(pm.n_states()):
        assert result.spi.defined_at(v) == (
            (v, False) in result.spi_region.region
            and bool([a for a in result.spi_region.strategy.get((v, False), ()) if a >= 0])
        )
        assert result.sasi.defined_at(v) == (
            (v, False) in result.sasi_region.region
            and bool([a for a in result.sasi_region.strategy.get((v, False), ()) if a >= 0])
        )


def test_monotone_improvement_classes_along_induced_paths(po2_b4):
    # Along any path of the sasi strategy the most-preferred winnable class
    # never steps to a strictly worse one.
    atoms, spec, mdp, pdfa, pm = po2_b4
    result = synthesize(pm)
    cache = result.cache
    seen = set(result.sasi.actions)
    frontier = list(seen)
    while frontier:
        v = frontier.pop()
        actions = result.sasi.actions.get(v)
        if not actions:
            continue
        for a in actions:
            for w, p in pm.dist(v, a):
                if p > 0:
                    assert not is_improvement(pm, w, v, cache)
                    if w not in seen:
                        seen.add(w)
                        frontier.append(w)


@pytest.mark.parametrize("stay", [0.1, 0.9])
def test_strategies_invariant_under_drift_probabilities(stay, po1_b4, po1_spec):
    # Only positivity of the drift split matters: the synthesized domains
    # and the start-state action sets must not depend on the split values.
    from prefplan.mdp import build_gridworld, gridworld_config_from_json
    from prefplan.prefdfa import build_preference_dfa

    from conftest import read_bundle_json

    atoms, spec, mdp_half, pdfa, pm_half = po1_b4
    base = synthesize(pm_half)

    doc = dict(read_bundle_json("po1/gridworld_battery4.json"))
    doc["stay_probability"] = stay
    mdp = build_gridworld(gridworld_config_from_json(doc))
    pm = build_product(mdp, build_preference_dfa(spec, atoms))
    result = synthesize(pm)
    assert set(result.sasi.actions) == set(base.sasi.actions)
    assert set(result.spi.actions) == set(base.spi.actions)
    assert result.sasi.get(pm.initial) == base.sasi.get(pm_half.initial)


def test_composite_policy_satisfices_with_achievable_node(po1_b4):
    # At a state where the improvement strategy is undefined but some node is
    # almost-surely winnable, the policy follows that node's strategy.
    atoms, spec, mdp, pdfa, pm = po1_b4
    result = synthesize(pm)
    policy = CompositePolicy(result, mode="sasi")
    cache = result.cache
    v = next(
        v
        for v in range(pm.n_states())
        if not result.sasi.defined_at(v) and z_set(pm, v, cache)
    )
    action, phase = policy.step(v)
    assert phase == "satisfice"
    from prefplan.synthesis import mp_nodes

    node = min(mp_nodes(pm, z_set(pm, v, cache)))
    region = cache.aswin_by_node[node]
    expected = region.strategy.get(v)
    if expected:
        assert action in expected


def test_composite_policy_uniform_tie_break_uses_rng(po1_b4):
    import random

    atoms, spec, mdp, pdfa, pm = po1_b4
    result = synthesize(pm)
    policy = CompositePolicy(result, mode="spi", tie_break="uniform")
    v = next(v for v in result.spi.actions if len(result.spi.actions[v]) > 1)
    picks = {policy.step(v, random.Random(s))[0] for s in range(40)}
    assert len(picks) > 1
    assert picks <= set(result.spi.actions[v])


def test_strategy_export_roundtrip(po1_b4):
    atoms, spec, mdp, pdfa, pm = po1_b4
    result = synthesize(pm)
    doc = strategy_to_json(pm, result.spi)
    assert doc["mode"] == "spi"
    assert len(doc["entries"]) == len(result.spi.actions)
    assert len(doc["entries"]) + len(doc["undefined_states"]) == pm.n_states()
    regions = regions_to_json(pm, result.cache)
    assert set(regions["nodes"]) == {str(n) for n in pm.node_members}
    dot = improvement_mdp_to_dot(result.improvement_mdp)
    assert "palegreen" in dot
