"""Command line harness: scenario files, sweeps, graph verification and replay.

Scenario files are line-oriented ``key = value`` text. ``#`` starts a comment and
``include = other.conf`` splices another file (relative to the including file); later
keys override earlier ones. Keys prefixed ``sweep.`` list comma-separated axis values.

Example::

    protocol = few-crashes-consensus
    n = 100
    t = n // 5 - 1
    adversary = crash:UniformRandom(0.01)
    inputs = random
    repetitions = 50
    seed = 42

Per-repetition seeds are ``mix64(root_seed, repetition)`` (splitmix64 finalizer over
the root seed plus the repetition times the 64-bit golden ratio).
"""

from __future__ import annotations

import argparse
import ast
import csv
import io
import json
import os
import random
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from itertools import product
from pathlib import Path
from typing import Any, Sequence

from .overlay import OverlayGraph, verify_certificate
from .protocols_auth import AuthConfig
from .protocols_crash import ConfigError, Faithful, ProtocolConfig, Scaled
from .runs import (
    RunOutcome,
    crash_adversary,
    mixed_byzantine,
    run_ab_consensus,
    run_checkpointing,
    run_dolev_strong,
    run_few_crashes,
    run_gossip,
    run_many_crashes,
)
from .simnet import (
    CRASH_STRATEGIES,
    PortIsolator,
    SimError,
    UniformRandom,
    UnknownStrategy,
    parse_byzantine,
)

PROTOCOLS = ("few-crashes-consensus", "many-crashes-consensus", "gossip", "checkpointing",
             "dolev-strong", "ab-consensus")
SINGLE_PORT_PROTOCOLS = ("few-crashes-consensus", "gossip")
AGGREGATE_FIELDS = ["protocol", "n", "t", "mode", "adversary", "runs", "mean_rounds", "max_rounds",
                    "mean_messages", "max_messages", "mean_bits", "max_bits", "passed", "failed"]
MASK64 = (1 << 64) - 1


class ConfigParseError(ValueError):
    pass


class PreconditionError(ValueError):
    pass


def mix64(root: int, index: int) -> int:
    """splitmix64 finalizer of root + index * 0x9E3779B97F4A7C15."""
    z = (root + (index + 1) * 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


# ---------------------------------------------------------------- parsing

_ALLOWED = (ast.Expression, ast.BinOp, ast.UnaryOp, ast.Constant, ast.Name, ast.Load,
            ast.Add, ast.Sub, ast.Mult, ast.FloorDiv, ast.Div, ast.Mod, ast.Pow, ast.USub,
            ast.Call)


def eval_int(expr: str, n: int | None = None) -> int:
    """Integer arithmetic over the name ``n``; ``floor``, ``ceil``, ``lg`` allowed."""
    import math
    try:
        tree = ast.parse(expr.strip(), mode="eval")
    except SyntaxError as exc:
        raise ConfigParseError(f"bad expression {expr!r}") from exc
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED):
            raise ConfigParseError(f"unsupported syntax in {expr!r}")
        if isinstance(node, ast.Call) and not (isinstance(node.func, ast.Name)
                                               and node.func.id in ("floor", "ceil", "lg")):
            raise ConfigParseError(f"unsupported call in {expr!r}")
        if isinstance(node, ast.Name) and node.id not in ("n", "floor", "ceil", "lg"):
            raise ConfigParseError(f"unknown name {node.id!r} in {expr!r}")
    env = {"n": n, "floor": math.floor, "ceil": math.ceil,
           "lg": lambda x: 0 if x <= 1 else math.ceil(math.log2(x))}
    if n is None and any(isinstance(x, ast.Name) and x.id == "n" for x in ast.walk(tree)):
        raise ConfigParseError(f"{expr!r} refers to n before n is known")
    value = eval(compile(tree, "<cfg>", "eval"), {"__builtins__": {}}, env)
    if isinstance(value, float):
        if not value.is_integer():
            raise ConfigParseError(f"{expr!r} is not an integer ({value})")
        value = int(value)
    return int(value)


def read_config(path: str | Path, _seen: tuple[Path, ...] = ()) -> dict[str, str]:
    path = Path(path).resolve()
    if path in _seen:
        raise ConfigParseError(f"include cycle through {path}")
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigParseError(f"cannot read {path}: {exc.strerror}") from exc
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigParseError(f"{path.name}:{lineno}: expected key = value")
        key, value = (x.strip() for x in line.split("=", 1))
        if not re.fullmatch(r"[a-z_][a-z0-9_.]*", key):
            raise ConfigParseError(f"{path.name}:{lineno}: bad key {key!r}")
        if key == "include":
            out.update(read_config(path.parent / value, _seen + (path,)))
        else:
            out[key] = value
    return out


@dataclass(frozen=True)
class Scenario:
    protocol: str
    n: int
    t: int
    mode: str = "multi"
    graph: str = "scaled"
    degree: int = 8
    h_degree: int = 8
    delta: float | None = None
    gamma: int | None = None
    ell: float | None = None
    graph_seed: int = 0
    adversary: str = "none"
    inputs: str = "random"
    source: int = 0
    value: int = 1
    seed: int = 0
    repetitions: int = 1
    name: str = "scenario"

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Template:
    base: dict[str, str]
    axes: dict[str, list[str]] = field(default_factory=dict)


_KNOWN = {f for f in Scenario.__dataclass_fields__}


def load_template(path: str | Path) -> Template:
    raw = read_config(path)
    base, axes = {}, {}
    for k, v in raw.items():
        if k.startswith("sweep."):
            axis = k[len("sweep."):]
            if axis not in _KNOWN:
                raise ConfigParseError(f"unknown sweep axis {axis!r}")
            axes[axis] = [x.strip() for x in v.split(",") if x.strip()]
            if not axes[axis]:
                raise ConfigParseError(f"sweep axis {axis!r} is empty")
        elif k not in _KNOWN:
            raise ConfigParseError(f"unknown key {k!r}")
        else:
            base[k] = v
    base.setdefault("name", Path(path).stem)
    return Template(base, axes)


def build_scenario(values: dict[str, str]) -> Scenario:
    if "protocol" not in values:
        raise ConfigParseError("missing key 'protocol'")
    if values["protocol"] not in PROTOCOLS:
        raise ConfigParseError(f"unknown protocol {values['protocol']!r}; expected one of {', '.join(PROTOCOLS)}")
    for key in ("n", "t"):
        if key not in values:
            raise ConfigParseError(f"missing key {key!r}")
    n = eval_int(values["n"])
    kw: dict[str, Any] = {"protocol": values["protocol"], "n": n, "t": eval_int(values["t"], n)}
    for key in ("degree", "h_degree", "gamma", "graph_seed", "source", "value", "seed", "repetitions"):
        if key in values:
            kw[key] = eval_int(values[key], n)
    for key in ("delta", "ell"):
        if key in values:
            try:
                kw[key] = float(values[key])
            except ValueError as exc:
                raise ConfigParseError(f"{key} must be a number") from exc
    for key in ("mode", "graph", "adversary", "inputs", "name"):
        if key in values:
            kw[key] = values[key]
    sc = Scenario(**kw)
    if sc.mode not in ("multi", "single"):
        raise ConfigParseError("mode must be multi or single")
    if sc.graph not in ("scaled", "faithful"):
        raise ConfigParseError("graph must be scaled or faithful")
    if sc.repetitions < 1:
        raise ConfigParseError("repetitions must be positive")
    return sc


# ---------------------------------------------------------------- execution

def check_preconditions(sc: Scenario) -> None:
    n, t = sc.n, sc.t
    if n < 1:
        raise PreconditionError("n >= 1 required")
    if t < 0:
        raise PreconditionError("t >= 0 required")
    if t >= n:
        raise PreconditionError(f"t < n required (n={n}, t={t})")
    if sc.protocol in ("few-crashes-consensus", "gossip", "checkpointing"):
        if t < 1 or 5 * t >= n:
            raise PreconditionError(f"t < n/5 required with t >= 1 (n={n}, t={t})")
    elif sc.protocol == "many-crashes-consensus":
        if t < 1:
            raise PreconditionError(f"0 < t < n required (n={n}, t={t})")
    elif sc.protocol == "ab-consensus":
        if 2 * t >= n:
            raise PreconditionError(f"t < n/2 required (n={n}, t={t})")
    elif sc.protocol == "dolev-strong":
        if not 0 <= sc.source < n:
            raise PreconditionError("0 <= source < n required")
    if sc.mode == "single" and sc.protocol not in SINGLE_PORT_PROTOCOLS:
        raise PreconditionError(f"single-port mode supports only {', '.join(SINGLE_PORT_PROTOCOLS)}")
    kind = sc.adversary.split(":", 1)[0]
    if kind not in ("none", "crash", "byzantine", "isolate"):
        raise PreconditionError(f"unknown adversary kind {kind!r}")
    if kind == "byzantine" and sc.protocol not in ("dolev-strong", "ab-consensus"):
        raise PreconditionError("Byzantine adversaries apply only to dolev-strong and ab-consensus")
    if kind in ("crash", "isolate") and sc.protocol in ("dolev-strong", "ab-consensus"):
        raise PreconditionError("crash adversaries apply only to the crash-model protocols")


def make_inputs(spec: str, n: int, seed: int) -> list[int]:
    kind, _, arg = spec.partition(":")
    if kind == "unanimous":
        return [int(arg or 0)] * n
    if kind == "split":
        ones = int(float(arg) * n)
        return [1] * ones + [0] * (n - ones)
    if kind == "list":
        vals = [int(x) for x in arg.split(",") if x.strip()]
        if len(vals) != n:
            raise PreconditionError(f"input list has {len(vals)} entries, expected n={n}")
        return vals
    if kind == "random":
        rng = random.Random(seed)
        return [rng.randint(0, 1) for _ in range(n)]
    raise ConfigParseError(f"bad inputs spec {spec!r}")


def _crash_policy(spec: str):
    m = re.fullmatch(r"(\w+)(?:\(([^)]*)\))?", spec)
    if not m or m.group(1) not in CRASH_STRATEGIES or m.group(1) == "PortIsolator":
        raise PreconditionError(f"unknown crash strategy {spec!r}")
    name, arg = m.groups()
    if name == "UniformRandom":
        return UniformRandom(float(arg)) if arg else UniformRandom()
    if arg:
        raise ConfigParseError(f"{name} takes no argument")
    return CRASH_STRATEGIES[name]()


def _graph_mode(sc: Scenario):
    if sc.graph == "faithful":
        return Faithful()
    return Scaled(sc.degree, sc.h_degree, sc.delta, sc.gamma, sc.ell)


def execute(sc: Scenario, seed: int, max_rounds: int | None = None) -> RunOutcome:
    """Run one repetition of a validated scenario."""
    n, t = sc.n, sc.t
    kind, _, arg = sc.adversary.partition(":")
    inputs = make_inputs(sc.inputs, n, seed)
    try:
        if sc.protocol in ("dolev-strong", "ab-consensus"):
            strategies = {}
            if kind == "byzantine":
                names = [x.strip() for x in arg.split(",") if x.strip()]
                if not names:
                    raise ConfigParseError("byzantine adversary needs at least one strategy")
                for name in names:
                    try:
                        parse_byzantine(name)
                    except UnknownStrategy as exc:
                        raise PreconditionError(f"unknown Byzantine strategy {name!r}") from exc
                strategies = {v: parse_byzantine(s) for v, s in mixed_byzantine(n, t, names, seed).items()}
            if sc.protocol == "dolev-strong":
                return run_dolev_strong(n, t, sc.source, sc.value, strategies, seed)
            cfg = AuthConfig(n, t, h_degree=sc.h_degree, graph_seed=sc.graph_seed)
            return run_ab_consensus(cfg, inputs, strategies, seed, max_rounds)

        cfg = ProtocolConfig(n, t, _graph_mode(sc), graph_seed=sc.graph_seed)
        adversary = None
        if kind == "crash":
            adversary = crash_adversary(_crash_policy(arg), t, seed & 0xFFFF)
        elif kind == "isolate":
            adversary = crash_adversary(PortIsolator(int(arg or 0)), t, seed & 0xFFFF)
        if sc.protocol == "few-crashes-consensus":
            return run_few_crashes(cfg, inputs, adversary, seed, sc.mode, max_rounds)
        if sc.protocol == "many-crashes-consensus":
            return run_many_crashes(cfg, inputs, adversary, seed, max_rounds)
        if sc.protocol == "gossip":
            return run_gossip(cfg, inputs, adversary, seed, max_rounds, sc.mode)
        return run_checkpointing(cfg, adversary, seed, max_rounds)
    except ConfigError as exc:
        raise PreconditionError(str(exc)) from exc
    except SimError as exc:
        # Surfaced as a failed run rather than a crash of the harness.
        from .simnet import RunMetrics
        metrics = getattr(exc, "metrics", None) or RunMetrics()
        metrics.violations.append(f"{type(exc).__name__}: {exc}")
        return RunOutcome(metrics, {"engine": False})


def run_record(sc: Scenario, rep: int, seed: int, out: RunOutcome) -> dict:
    return {
        "scenario": sc.to_dict(),
        "repetition": rep,
        "seed": seed,
        "metrics": out.metrics.to_dict(),
        "checks": out.checks,
        "measures": out.measures,
        "violations": out.metrics.violations,
    }


def _work(args: tuple[Scenario, int, int | None]) -> tuple[int, int, dict]:
    sc, rep, max_rounds = args
    seed = mix64(sc.seed, rep)
    out = execute(sc, seed, max_rounds)
    return rep, seed, run_record(sc, rep, seed, out)


def _write_atomic(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def run_repetitions(sc: Scenario, jobs: int = 1, max_rounds: int | None = None) -> list[dict]:
    check_preconditions(sc)
    tasks = [(sc, rep, max_rounds) for rep in range(sc.repetitions)]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_work, tasks))
    else:
        results = [_work(x) for x in tasks]
    return [rec for _, _, rec in sorted(results, key=lambda x: x[0])]


def aggregate_row(sc: Scenario, records: Sequence[dict]) -> list:
    rounds = [r["metrics"]["rounds"] for r in records]
    msgs = [r["metrics"]["messages"] for r in records]
    bits = [r["metrics"]["bits"] for r in records]
    passed = sum(1 for r in records if all(r["checks"].values()))

    def mean(xs):
        return f"{sum(xs) / len(xs):.3f}"
    return [sc.protocol, sc.n, sc.t, sc.mode, sc.adversary, len(records), mean(rounds), max(rounds),
            mean(msgs), max(msgs), mean(bits), max(bits), passed, len(records) - passed]


def aggregate_csv(rows: Sequence[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(AGGREGATE_FIELDS)
    w.writerows(rows)
    return buf.getvalue()


def emit(sc: Scenario, records: Sequence[dict], out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    for rec in records:
        _write_atomic(out_dir / f"{sc.name}-rep{rec['repetition']:04d}.json",
                      json.dumps(rec, indent=1, sort_keys=True) + "\n")


def sweep_cells(tpl: Template) -> list[Scenario]:
    """Cartesian product over sweep axes; n is bound before t so t may depend on it."""
    names = sorted(tpl.axes, key=lambda a: (a != "n", a))
    cells = []
    for combo in product(*(tpl.axes[a] for a in names)) if names else [()]:
        values = dict(tpl.base)
        values.update(zip(names, combo))
        sc = build_scenario(values)
        tag = "-".join(f"{a}{re.sub(r'[^A-Za-z0-9.]+', '_', v).strip('_')}" for a, v in zip(names, combo))
        cells.append(replace(sc, name=f"{sc.name}-{tag}" if tag else sc.name))
    return cells


# ---------------------------------------------------------------- verbs

def _out_dir(flag: str | None) -> Path:
    if flag:
        return Path(flag)
    return Path(os.environ.get("EXPANDERQUORUM_OUT", "expanderquorum-out"))


def _apply_flags(sc: Scenario, args) -> Scenario:
    if args.seed is not None:
        sc = replace(sc, seed=args.seed)
    if args.mode is not None:
        sc = replace(sc, mode=args.mode)
    return sc


def cmd_run(args) -> int:
    tpl = load_template(args.config)
    if tpl.axes:
        raise ConfigParseError("sweep axes found; use the sweep verb")
    sc = _apply_flags(build_scenario(tpl.base), args)
    records = run_repetitions(sc, args.jobs, args.max_rounds)
    out = _out_dir(args.out_dir)
    emit(sc, records, out)
    _write_atomic(out / f"{sc.name}-aggregate.csv", aggregate_csv([aggregate_row(sc, records)]))
    failed = [r for r in records if not all(r["checks"].values())]
    print(f"{sc.name}: {len(records) - len(failed)}/{len(records)} runs passed; artifacts in {out}")
    for r in failed[:10]:
        bad = [k for k, v in r["checks"].items() if not v]
        print(f"  repetition {r['repetition']} (seed {r['seed']}): failed {', '.join(bad)}")
    return 1 if failed else 0


def cmd_sweep(args) -> int:
    tpl = load_template(args.config)
    cells = [_apply_flags(sc, args) for sc in sweep_cells(tpl)]
    out = _out_dir(args.out_dir)
    rows, failures = [], 0
    for sc in cells:
        records = run_repetitions(sc, args.jobs, args.max_rounds)
        emit(sc, records, out)
        row = aggregate_row(sc, records)
        failures += row[-1]
        rows.append(row)
        print(f"{sc.name}: rounds max {row[7]}, messages max {row[9]}, passed {row[-2]}/{row[5]}")
    name = tpl.base.get("name", "sweep")
    _write_atomic(out / f"{name}-sweep.csv", aggregate_csv(rows))
    return 1 if failures else 0


def cmd_verify_graph(args) -> int:
    try:
        g = OverlayGraph.from_text(Path(args.graph).read_text())
    except (OSError, ValueError) as exc:
        raise ConfigParseError(f"cannot load graph: {exc}") from exc
    problems = verify_certificate(g)
    print(f"n={g.node_count} d={g.degree} lambda={g.lambda_:.6f} certificate={g.certificate.token()}")
    for p in problems:
        print(f"  FAIL {p}")
    print("OK" if not problems else f"{len(problems)} problem(s)")
    return 1 if problems else 0


def cmd_replay(args) -> int:
    try:
        rec = json.loads(Path(args.metrics).read_text())
        sc = Scenario(**rec["scenario"])
        seed = int(rec["seed"])
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ConfigParseError(f"cannot load metrics file: {exc}") from exc
    check_preconditions(sc)
    out = execute(sc, seed, args.max_rounds)
    again = run_record(sc, rec["repetition"], seed, out)
    same = json.dumps(again, sort_keys=True) == json.dumps(rec, sort_keys=True)
    print("identical" if same else "DIVERGED")
    if not same:
        for key in ("checks", "measures"):
            if again[key] != rec[key]:
                print(f"  {key}: recorded {rec[key]} replayed {again[key]}")
        if again["metrics"] != rec["metrics"]:
            a, b = again["metrics"], rec["metrics"]
            for key in ("rounds", "messages", "bits"):
                if a[key] != b[key]:
                    print(f"  {key}: recorded {b[key]} replayed {a[key]}")
    return 0 if same and all(again["checks"].values()) else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="expanderquorum", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="verb", required=True)

    def common(sp):
        sp.add_argument("--seed", type=int, help="root seed (overrides the file)")
        sp.add_argument("--jobs", type=int, default=1, help="worker processes")
        sp.add_argument("--out-dir", help="artifact directory (default $EXPANDERQUORUM_OUT or ./expanderquorum-out)")
        sp.add_argument("--max-rounds", type=int, help="engine round limit per run")
        sp.add_argument("--mode", choices=["multi", "single"], help="port model (overrides the file)")

    sp = sub.add_parser("run", help="run a scenario file")
    sp.add_argument("config")
    common(sp)
    sp.set_defaults(func=cmd_run)
    sp = sub.add_parser("sweep", help="run the cartesian product of sweep.* axes")
    sp.add_argument("config")
    common(sp)
    sp.set_defaults(func=cmd_sweep)
    sp = sub.add_parser("verify-graph", help="check a serialized overlay graph")
    sp.add_argument("graph")
    sp.set_defaults(func=cmd_verify_graph)
    sp = sub.add_parser("replay", help="re-run one metrics JSON and compare")
    sp.add_argument("metrics")
    sp.add_argument("--max-rounds", type=int)
    sp.set_defaults(func=cmd_replay)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigParseError as exc:
        print(f"ConfigParseError: {exc}", file=sys.stderr)
        return 2
    except PreconditionError as exc:
        print(f"PreconditionError: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
