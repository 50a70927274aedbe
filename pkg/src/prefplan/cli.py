"""Command-line front end for the planning pipeline.

Subcommands compile formulas, build preference DFAs, generate gridworlds,
synthesize and verify improving strategies, and simulate composite policies.
Artifacts are written as JSON/DOT files with stable key order so identical
inputs and seeds produce identical bytes.  Exit codes: 0 success, 1 usage or
input error, 2 verification failure, 3 resource cap exceeded.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .mdp import (
    MdpError,
    build_gridworld,
    gridworld_config_from_json,
    load_mdp,
    mdp_to_dot,
    mdp_to_json,
)
from .prefdfa import build_preference_dfa, pdfa_to_dot, pdfa_to_json
from .preferences import PreferenceError, load_preference_document, spec_to_json
from .scltl import (
    AlphabetError,
    CapacityError,
    ParseError,
    dfa_to_dot,
    dfa_to_json,
    parse,
    to_dfa,
)
from .synthesis import (
    CompositePolicy,
    build_product,
    improvement_mdp_to_dot,
    regions_to_json,
    strategy_from_json,
    strategy_to_json,
    synthesize,
)
from .verify import check_strategy_conditions, monte_carlo, stats_to_csv, stats_to_json

DEFAULT_SEED = 20240

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_VERIFY = 2
EXIT_CAP = 3

INPUT_ERRORS = (
    ParseError,
    AlphabetError,
    PreferenceError,
    MdpError,
    ValueError,
    KeyError,
    OSError,
    json.JSONDecodeError,
)


def _read_json(path: str):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_text(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_pipeline(mdp_path: str, pref_path: str, state_cap: int):
    mdp = load_mdp(_read_json(mdp_path))
    atoms, spec = load_preference_document(_read_json(pref_path))
    pdfa = build_preference_dfa(spec, atoms, state_cap=state_cap)
    product = build_product(mdp, pdfa, state_cap=state_cap)
    return mdp, spec, pdfa, product


def cmd_compile(args) -> int:
    doc = _read_json(args.formula_file)
    formula = parse(doc["formula"], doc["atoms"])
    dfa = to_dfa(formula, doc["atoms"], state_cap=args.state_cap)
    out = _out_dir(args)
    _write_json(out / "dfa.json", dfa_to_json(dfa))
    _write_text(out / "dfa.dot", dfa_to_dot(dfa))
    print(f"dfa: {len(dfa.states)} states, {len(dfa.accepting)} accepting", file=sys.stderr)
    return EXIT_OK


def cmd_prefdfa(args) -> int:
    atoms, spec = load_preference_document(_read_json(args.pref_file))
    pdfa = build_preference_dfa(spec, atoms, state_cap=args.state_cap)
    out = _out_dir(args)
    _write_json(out / "preference_spec.json", spec_to_json(atoms, spec))
    _write_json(out / "preference_dfa.json", pdfa_to_json(pdfa))
    _write_text(out / "preference_dfa.dot", pdfa_to_dot(pdfa))
    print(
        f"preference dfa: {len(pdfa.states)} states, {len(pdfa.final)} final, "
        f"{len(pdfa.graph.nodes)} graph nodes",
        file=sys.stderr,
    )
    return EXIT_OK


def cmd_gridworld(args) -> int:
    cfg = gridworld_config_from_json(_read_json(args.config))
    if args.stay_probability is not None:
        cfg = type(cfg)(
            width=cfg.width,
            height=cfg.height,
            start=cfg.start,
            battery_capacity=cfg.battery_capacity,
            obstacles=cfg.obstacles,
            drift_cells=cfg.drift_cells,
            regions=cfg.regions,
            stay_probability=args.stay_probability,
        )
    mdp = build_gridworld(cfg)
    out = _out_dir(args)
    _write_json(out / "mdp.json", mdp_to_json(mdp))
    if args.dot:
        _write_text(out / "mdp.dot", mdp_to_dot(mdp))
    print(f"gridworld mdp: {mdp.n_states()} states", file=sys.stderr)
    return EXIT_OK


def cmd_synth(args) -> int:
    mdp, spec, pdfa, product = _load_pipeline(args.mdp, args.pref_file, args.state_cap)
    result = synthesize(product)
    out = _out_dir(args)
    _write_json(out / "strategy_spi.json", strategy_to_json(product, result.spi))
    _write_json(out / "strategy_sasi.json", strategy_to_json(product, result.sasi))
    _write_json(out / "winning_regions.json", regions_to_json(product, result.cache))
    _write_text(out / "improvement_mdp.dot", improvement_mdp_to_dot(result.improvement_mdp))
    print(
        f"product: {product.n_states()} states; spi defined on {len(result.spi.actions)}, "
        f"sasi defined on {len(result.sasi.actions)}",
        file=sys.stderr,
    )
    return EXIT_OK


def cmd_verify(args) -> int:
    mdp, spec, pdfa, product = _load_pipeline(args.mdp, args.pref_file, args.state_cap)
    result = synthesize(product)
    if args.strategy:
        strategy = strategy_from_json(product, _read_json(args.strategy))
        to_check = [(args.mode, strategy)]
    else:
        to_check = [("spi", result.spi), ("sasi", result.sasi)]
    report_doc = {}
    all_ok = True
    for mode, strategy in to_check:
        if not strategy.actions:
            report_doc[mode] = {"defined": False}
            continue
        report = check_strategy_conditions(product, strategy, mode, result.cache)
        all_ok = all_ok and report.ok

        def state_id(v):
            s, q = product.state_pairs[v]
            return f"{product.mdp.states[s]}#q{q}"

        report_doc[mode] = {
            "defined": True,
            "ok": report.ok,
            "condition_a": report.condition_a,
            "condition_b": report.condition_b,
            "domain_size": len(strategy.actions),
            "stuck_states": [state_id(v) for v in report.stuck_states],
            "regressing_edges": [
                {
                    "path": [state_id(v) for v in trace],
                    "from": state_id(v),
                    "to": state_id(w),
                }
                for trace, v, w in report.regressing_edges
            ],
            "bottom_based_improvements": [
                [state_id(v), state_id(w)] for v, w in report.bottom_based_improvements
            ],
        }
    out = _out_dir(args)
    _write_json(out / "verify_report.json", report_doc)
    for mode, entry in report_doc.items():
        if not entry.get("defined"):
            print(f"{mode}: undefined everywhere (nothing to check)", file=sys.stderr)
        else:
            print(
                f"{mode}: condition (a) {'pass' if entry['condition_a'] else 'FAIL'}, "
                f"condition (b) {'pass' if entry['condition_b'] else 'FAIL'}",
                file=sys.stderr,
            )
    return EXIT_OK if all_ok else EXIT_VERIFY


def cmd_simulate(args) -> int:
    mdp, spec, pdfa, product = _load_pipeline(args.mdp, args.pref_file, args.state_cap)
    result = synthesize(product)
    policy = CompositePolicy(result, mode=args.mode, tie_break=args.tie_break)
    stats = monte_carlo(
        product,
        policy,
        episodes=args.episodes,
        horizon=args.horizon,
        seed=args.seed,
    )
    out = _out_dir(args)
    _write_json(out / "stats.json", stats_to_json(stats))
    _write_text(out / "episodes.csv", stats_to_csv(stats))
    print(
        f"{args.episodes} episodes: improvements histogram "
        f"{dict(sorted(stats.improvements_histogram.items()))}, "
        f"regressions {stats.regressions_observed}",
        file=sys.stderr,
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="prefplan",
        description="Opportunistic qualitative planning under incomplete preferences "
        "over co-safe temporal goals.",
    )
    parser.add_argument("--out", default="out", help="output directory for artifacts")
    parser.add_argument(
        "--state-cap",
        type=int,
        default=10**6,
        help="abort constructions that exceed this many states",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compile", help="translate a formula file to a DFA (JSON + DOT)")
    p.add_argument("formula_file", help='JSON file {"atoms": [...], "formula": "..."}')
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("prefdfa", help="build the preference DFA and graph from a preference file")
    p.add_argument("pref_file", help="preference declaration JSON")
    p.set_defaults(func=cmd_prefdfa)

    p = sub.add_parser("gridworld", help="expand a gridworld config into an MDP JSON")
    p.add_argument("config", help="gridworld config JSON")
    p.add_argument("--dot", action="store_true", help="also write a DOT rendering")
    p.add_argument(
        "--stay-probability",
        type=float,
        default=None,
        help="override the config's drift stay probability",
    )
    p.set_defaults(func=cmd_gridworld)

    p = sub.add_parser("synth", help="synthesize SPI/SASI strategies for an MDP and preference file")
    p.add_argument("mdp", help="MDP JSON")
    p.add_argument("pref_file", help="preference declaration JSON")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("verify", help="check the strategy conditions of the synthesized strategies")
    p.add_argument("mdp", help="MDP JSON")
    p.add_argument("pref_file", help="preference declaration JSON")
    p.add_argument(
        "--strategy",
        default=None,
        help="check this exported strategy JSON instead of the synthesized ones",
    )
    p.add_argument("--mode", choices=("spi", "sasi"), default="sasi",
                   help="conditions to hold for --strategy")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("simulate", help="roll out the composite policy and collect statistics")
    p.add_argument("mdp", help="MDP JSON")
    p.add_argument("pref_file", help="preference declaration JSON")
    p.add_argument("--episodes", type=int, default=1000)
    p.add_argument("--horizon", type=int, default=None, help="step cap per episode (default 10x product size)")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--mode", choices=("spi", "sasi"), default="sasi")
    p.add_argument("--tie-break", choices=("lowest", "uniform"), default="lowest")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits with 2 on usage errors; map to the input-error code.
        return EXIT_INPUT if e.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except CapacityError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CAP
    except INPUT_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
