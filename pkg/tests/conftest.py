"""Shared fixtures: bundle loaders and seeded random-instance generators."""

import json
import random
from pathlib import Path

import pytest

from prefplan.mdp import LabeledMdp, build_gridworld, gridworld_config_from_json
from prefplan.prefdfa import build_preference_dfa
from prefplan.preferences import (
    PreferenceDeclarations,
    build_spec,
    load_preference_document,
)
from prefplan.scltl import parse
from prefplan.synthesis import build_product

BUNDLES = Path(__file__).resolve().parent.parent / "src" / "prefplan" / "bundles"


def read_bundle_json(name):
    return json.loads((BUNDLES / name).read_text())


def load_bundle(bundle, grid_name):
    atoms, spec = load_preference_document(read_bundle_json(f"{bundle}/preferences.json"))
    cfg = gridworld_config_from_json(read_bundle_json(f"{bundle}/{grid_name}"))
    mdp = build_gridworld(cfg)
    pdfa = build_preference_dfa(spec, atoms)
    product = build_product(mdp, pdfa)
    return atoms, spec, mdp, pdfa, product


@pytest.fixture(scope="session")
def po1_b4():
    return load_bundle("po1", "gridworld_battery4.json")


@pytest.fixture(scope="session")
def po1_b2():
    return load_bundle("po1", "gridworld_battery2.json")


@pytest.fixture(scope="session")
def po2_b4():
    return load_bundle("po2", "gridworld_battery4.json")


@pytest.fixture(scope="session")
def po1_spec():
    atoms = ("A", "B", "E")
    decl = PreferenceDeclarations(
        atoms=atoms,
        outcomes=[
            ("visit_A", parse("F A", atoms)),
            ("visit_B", parse("F B", atoms)),
            ("visit_E", parse("F E", atoms)),
        ],
        statements=[
            ("strict", "visit_B", "visit_A"),
            ("strict", "visit_E", "visit_A"),
        ],
    )
    return atoms, build_spec(decl)


@pytest.fixture(scope="session")
def po2_spec():
    atoms = ("A", "B", "C", "D", "F")
    decl = PreferenceDeclarations(
        atoms=atoms,
        outcomes=[
            ("phiA", parse("!(B|C|D|F) U A", atoms)),
            ("phiB", parse("!(A|C|D|F) U B", atoms)),
            ("phiC", parse("!(A|B|D|F) U C", atoms)),
            ("phiD", parse("!(A|B|C|F) U D", atoms)),
            ("phiF", parse("!(A|B|C|D) U F", atoms)),
        ],
        statements=[
            ("strict", "phiB", "phiA"),
            ("strict", "phiD", "phiB"),
            ("strict", "phiF", "phiC"),
            ("indifferent", "phiB", "phiC"),
        ],
    )
    return atoms, build_spec(decl)


# Probabilities are drawn from a coarse grid so reachability values stay far
# from the classification thresholds of the qualitative solvers.
_DIST_SHAPES = [
    (1.0,),
    (0.5, 0.5),
    (0.75, 0.25),
    (0.25, 0.75),
    (0.5, 0.25, 0.25),
    (0.25, 0.25, 0.5),
]


def random_mdp(seed, n_states=30, n_actions=3, atoms=(), label_density=0.0, trap_fraction=0.2):
    """Seeded random labeled MDP with quantized transition probabilities."""
    rng = random.Random(seed)
    states = tuple(f"s{i}" for i in range(n_states))
    actions = tuple(f"a{j}" for j in range(n_actions))
    traps = set(rng.sample(range(n_states), max(1, int(trap_fraction * n_states))))
    transitions = {}
    for s in range(n_states):
        if s in traps:
            transitions[(s, 0)] = ((s, 1.0),)
            continue
        for a in range(n_actions):
            if a > 0 and rng.random() < 0.3:
                continue
            shape = _DIST_SHAPES[rng.randrange(len(_DIST_SHAPES))]
            succs = rng.sample(range(n_states), len(shape))
            transitions[(s, a)] = tuple(zip(succs, shape))
    labels = []
    for s in range(n_states):
        label = frozenset(a for a in atoms if rng.random() < label_density)
        labels.append(label)
    initial = ((rng.randrange(n_states), 1.0),)
    return LabeledMdp(
        atoms=tuple(atoms),
        states=states,
        actions=actions,
        labels=tuple(labels),
        transitions=transitions,
        initial=initial,
    )


_FORMULA_POOL = [
    "F p",
    "F q",
    "p U q",
    "q U p",
    "F (p & q)",
    "F (p | q)",
    "!p U q",
    "!q U p",
]


def random_preference_problem(seed, n_outcomes=3, connected=True):
    """Random strict/incomparable structure over small co-safe goals.

    With ``connected`` every outcome takes part in at least one strict pair;
    outcomes isolated from the strict relation carry no tags in the
    preference DFA and fall outside the graph/semantics correspondence.
    """
    rng = random.Random(seed)
    atoms = ("p", "q")
    texts = rng.sample(_FORMULA_POOL, n_outcomes)
    outcomes = [(f"o{i}", parse(text, atoms)) for i, text in enumerate(texts)]
    while True:
        statements = []
        covered = set()
        # Random DAG of strict statements over the outcome indices.
        for i in range(n_outcomes):
            for j in range(i + 1, n_outcomes):
                if rng.random() < 0.5:
                    statements.append(("strict", f"o{i}", f"o{j}"))
                    covered.update((i, j))
        if not connected or covered == set(range(n_outcomes)):
            break
    decl = PreferenceDeclarations(atoms=atoms, outcomes=outcomes, statements=statements)
    return atoms, build_spec(decl)


def random_product(seed, n_states=20):
    atoms, spec = random_preference_problem(seed, n_outcomes=3)
    mdp = random_mdp(
        seed + 17,
        n_states=n_states,
        n_actions=3,
        atoms=atoms,
        label_density=0.15,
        trap_fraction=0.15,
    )
    pdfa = build_preference_dfa(spec, atoms)
    return mdp, spec, pdfa, build_product(mdp, pdfa)
