"""Command-line entry point: ``uailab <group> <command> [options]``.

Exit codes: 0 on success, 1 on a domain error (bad class file, exhausted
budget, ...), 2 on a usage error.  Results go to stdout; commands that take
``--out`` also write them below that directory and nowhere else.
"""

from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction
from pathlib import Path

from uailab import __version__
from uailab.bayesexp import AgentState, run_episode, trace_summary, trace_to_csv
from uailab.config import DEFAULTS, RunConfig, parse_config
from uailab.environments import (
    class_to_dict,
    example1_class,
    load_class,
    parse_history,
    resolve_class,
)
from uailab.errors import SchemaError, UailabError
from uailab.machine import ToyMachine, get_machine
from uailab.prior import (
    adversarial_sequence,
    approx_MM,
    bracket_conditional_M,
    bracket_M,
    bracket_Mnorm,
)
from uailab.values import DiscountSchedule, ValueKind, eps_optimal_action, optimal_value


def _frac(q: Fraction) -> str:
    return f"{q.numerator}/{q.denominator}"


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def _write(out: str | None, name: str, text: str) -> None:
    if out is None:
        return
    path = Path(out) / name
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _emit(args, name: str, text: str) -> None:
    sys.stdout.write(text)
    _write(getattr(args, "out", None), name, text)


def _budget(args):
    if args.len is not None or args.steps is not None:
        if args.len is None or args.steps is None:
            raise ValueError("--len and --steps must be given together")
        return (args.len, args.steps)
    return args.budget


# -- prior / machine ---------------------------------------------------------


def cmd_machine_run(args) -> int:
    res = get_machine(args.machine).run(args.program, args.budget)
    _emit(args, "run.json", _dumps(res.to_json()))
    return 0


def cmd_prior(args) -> int:
    machine = get_machine(args.machine)
    budget = _budget(args)
    op = args.op
    if op == "m":
        result = bracket_M(machine, args.x, budget).to_json()
    elif op == "cond":
        result = bracket_conditional_M(machine, args.x, args.y, budget).to_json()
    elif op == "mnorm":
        result = bracket_Mnorm(machine, args.x, budget).to_json()
    elif op == "mm":
        result = {"approx_lower": _frac(approx_MM(machine, args.x, args.depth, budget))}
    else:
        seq = adversarial_sequence(machine, args.t, budget)
        result = {
            "bits": seq.bits,
            "decided": list(seq.decided),
            "conditionals": [c.to_json() for c in seq.conditionals],
        }
    result = {"machine": machine.identifier, "op": op, **result}
    _emit(args, f"prior-{op}.json", _dumps(result))
    return 0


# -- environments ------------------------------------------------------------


def cmd_env_validate(args) -> int:
    mix = load_class(args.file)
    kind = "measures" if mix.is_measure else "semimeasures"
    text = (
        f"ok: {len(mix.members)} environments ({', '.join(mix.names)}), "
        f"{len(mix.actions)} actions, {len(mix.percepts)} percepts, {kind}\n"
    )
    _emit(args, "validate.txt", text)
    return 0


def cmd_env_show(args) -> int:
    _emit(args, "class.json", _dumps(class_to_dict(resolve_class(args.cls))))
    return 0


# -- values ------------------------------------------------------------------


def cmd_value_eval(args) -> int:
    mix = resolve_class(args.cls)
    h = parse_history(args.history)
    if args.kind == "entropy":
        kind = ValueKind.entropy(mix, args.normalized)
    elif args.kind == "info":
        kind = ValueKind.info(mix)
    else:
        kind = ValueKind.reward(mix, DiscountSchedule.parse(args.discount))
    result = optimal_value(kind, h, args.horizon).to_json()
    if args.eps is not None:
        result["eps"] = args.eps
        result["eps_action"] = eps_optimal_action(kind, h, Fraction(args.eps), args.horizon)
    _emit(args, "value.json", _dumps(result))
    return 0


# -- agent -------------------------------------------------------------------


def _agent_config(args) -> RunConfig:
    data = {}
    if args.config:
        try:
            raw = Path(args.config).read_bytes()
        except OSError as exc:
            raise SchemaError("", f"cannot read config: {exc}") from None
        parse_config(raw)  # strict validation of the file as written
        data = json.loads(raw)
    for key, value in (
        ("class", args.cls),
        ("true_env", args.true_env),
        ("steps", args.steps),
        ("seed", args.seed),
        ("out", args.out),
    ):
        if value is not None:
            data[key] = value
    return parse_config(data)


def cmd_agent_run(args) -> int:
    cfg = _agent_config(args)
    mix = resolve_class(cfg.env_class)
    true_name = cfg.true_env or mix.names[cfg.seed % len(mix.names)]
    mu = mix.member(true_name)
    trace = run_episode(AgentState.initial(mix, cfg.agent_config()), mu, cfg.steps, cfg.seed)
    summary = trace_summary(trace)
    summary["config_hash"] = cfg.hash
    summary["version"] = __version__
    _write(cfg.out, "trace.csv", trace_to_csv(trace))
    _write(cfg.out, "summary.json", _dumps(summary))
    sys.stdout.write(_dumps(summary))
    return 0


# -- reproductions -----------------------------------------------------------

GREEK = {"alpha": "α", "beta": "β"}


def example1_report() -> tuple[str, dict]:
    """Entropy and information values of the two-environment example."""
    mix = example1_class()
    h = parse_history("")
    data = {}
    lines = ["example1: knowledge-seeking values at t = 1, lifetime m = 1", ""]
    lines.append(f"{'value':<20}{'action':<8}{'V*':>16}")
    for label, kind in (
        ("entropy (raw)", ValueKind.entropy(mix)),
        ("entropy (norm)", ValueKind.entropy(mix, normalized=True)),
        ("information", ValueKind.info(mix)),
    ):
        res = optimal_value(kind, h, 1)
        for a in ("alpha", "beta"):
            v = res.per_action_values[a]
            lines.append(f"{label:<20}{GREEK[a]:<8}{v:>16.10f}")
        data[label] = {"values": res.per_action_values, "preferred": res.best_action}
    raw = data["entropy (raw)"]["preferred"]
    norm = data["entropy (norm)"]["preferred"]
    lines += ["", f"preferred: {GREEK[raw]}", f"preferred (normalized): {GREEK[norm]}", ""]
    return "\n".join(lines), data


def cmd_repro_example1(args) -> int:
    text, data = example1_report()
    _write(args.out, "example1.txt", text)
    _write(args.out, "example1.json", _dumps(data))
    sys.stdout.write(text)
    return 0


def adversarial_report(t: int = 4, budget: int = 10) -> tuple[str, dict]:
    machine = ToyMachine()
    seq = adversarial_sequence(machine, t, budget)
    joint = bracket_M(machine, seq.bits, budget)
    lines = [f"adversarial sequence on the toy machine, t = {t}, budget index {budget}", ""]
    lines.append(f"{'i':<4}{'bit':<5}{'decided':<9}{'M(1|z_<i) lo':>16}{'hi':>16}")
    for i, (bit, ok, c) in enumerate(zip(seq.bits, seq.decided, seq.conditionals), 1):
        lines.append(f"{i:<4}{bit:<5}{str(ok):<9}{_frac(c.lo):>16}{_frac(c.hi):>16}")
    bound = Fraction(1, 2**t)
    lines += [
        "",
        f"z = {seq.bits}",
        f"M(z) in [{_frac(joint.lo)}, {_frac(joint.hi)}]",
        f"hi <= 2^-{t}: {joint.hi <= bound}",
        "",
    ]
    data = {
        "bits": seq.bits,
        "decided": list(seq.decided),
        "bracket": joint.to_json(),
        "bound": _frac(bound),
    }
    return "\n".join(lines), data


def cmd_repro_adversarial(args) -> int:
    text, data = adversarial_report(args.t, args.budget)
    _write(args.out, "adversarial.txt", text)
    _write(args.out, "adversarial.json", _dumps(data))
    sys.stdout.write(text)
    return 0


# -- parser ------------------------------------------------------------------


def _budget_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--machine", default="reference", help="reference | toy | dispatch")
    p.add_argument("--budget", type=int, default=8, help="budget index j -> (j, j*2^j)")
    p.add_argument("--len", type=int, help="explicit maximum program length L")
    p.add_argument("--steps", type=int, help="explicit step budget k")
    p.add_argument("--out", help="also write the result below this directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uailab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"uailab {__version__}")
    groups = parser.add_subparsers(dest="group", required=True)

    machine = groups.add_parser("machine", help="run programs").add_subparsers(
        dest="command", required=True
    )
    p = machine.add_parser("run", help="run one program with a step budget")
    p.add_argument("--machine", default="reference")
    p.add_argument("--program", required=True, help="0/1 string")
    p.add_argument("--budget", type=int, required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_machine_run)

    prior = groups.add_parser("prior", help="brackets on the universal prior").add_subparsers(
        dest="op", required=True
    )
    for name, help_text in (
        ("m", "bracket M(x)"),
        ("mnorm", "bracket the normalized prior M_norm(x)"),
    ):
        p = prior.add_parser(name, help=help_text)
        p.add_argument("--x", default="", help="target string")
        _budget_args(p)
        p.set_defaults(func=cmd_prior)
    p = prior.add_parser("cond", help="bracket M(xy | x)")
    p.add_argument("--x", default="")
    p.add_argument("--y", required=True)
    _budget_args(p)
    p.set_defaults(func=cmd_prior)
    p = prior.add_parser("mm", help="finite-budget lower approximant of MM(x)")
    p.add_argument("--x", default="")
    p.add_argument("--depth", type=int, required=True)
    _budget_args(p)
    p.set_defaults(func=cmd_prior)
    p = prior.add_parser("adversarial", help="first t bits of the adversarial sequence")
    p.add_argument("--t", type=int, required=True)
    _budget_args(p)
    p.set_defaults(func=cmd_prior)

    env = groups.add_parser("env", help="environment classes").add_subparsers(
        dest="command", required=True
    )
    p = env.add_parser("validate", help="check a class file against the schema")
    p.add_argument("file")
    p.add_argument("--out")
    p.set_defaults(func=cmd_env_validate)
    p = env.add_parser("show", help="print a class (builtin name or file) as JSON")
    p.add_argument("cls", metavar="CLASS")
    p.add_argument("--out")
    p.set_defaults(func=cmd_env_show)

    value = groups.add_parser("value", help="optimal values").add_subparsers(
        dest="command", required=True
    )
    p = value.add_parser("eval", help="expectimax value and best action")
    p.add_argument("--kind", choices=("entropy", "info", "reward"), required=True)
    p.add_argument("--class", dest="cls", required=True, help="builtin name or JSON file")
    p.add_argument("--history", default="", help="a:obs:reward,... (empty = start)")
    p.add_argument("--horizon", type=int, required=True, help="number of future steps")
    p.add_argument("--normalized", action="store_true", help="entropy under xi_norm")
    p.add_argument("--discount", default=DEFAULTS["discount"])
    p.add_argument("--eps", help="also report an eps-optimal action")
    p.add_argument("--out")
    p.set_defaults(func=cmd_value_eval)

    agent = groups.add_parser("agent", help="exploration-phase agent").add_subparsers(
        dest="command", required=True
    )
    p = agent.add_parser("run", help="simulate one episode, write trace.csv and summary.json")
    p.add_argument("--class", dest="cls")
    p.add_argument("--true-env")
    p.add_argument("--steps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--out")
    p.set_defaults(func=cmd_agent_run)

    repro = groups.add_parser("repro", help="reproduce worked examples").add_subparsers(
        dest="command", required=True
    )
    p = repro.add_parser("example1", help="entropy vs information values table")
    p.add_argument("--out", default="uailab-out")
    p.set_defaults(func=cmd_repro_example1)
    p = repro.add_parser("adversarial", help="adversarial sequence on the toy machine")
    p.add_argument("--t", type=int, default=4)
    p.add_argument("--budget", type=int, default=10)
    p.add_argument("--out", default="uailab-out")
    p.set_defaults(func=cmd_repro_adversarial)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (UailabError, ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
