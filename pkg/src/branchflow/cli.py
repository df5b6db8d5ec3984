"""Batch front door: parse experiment configs, orchestrate runs, emit
CSV/JSON artifacts.

Exit codes: 0 all verdicts pass, 1 verdicts failed, 2 config error,
3 construction validity error, 4 runtime error (population cap, blow-up,
degenerate regime).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import convergence_lab as lab
from .discrete_flow import DegenerateRegimeError
from .genfun import ValidityError
from .kernels import PopulationCapError, backend_name
from .limit_semigroup import BlowUpError, CumulantSolverOptions
from .mechanisms import (
    BranchingMechanism,
    JumpAtoms,
    MechanismField,
    stable_panel,
    validate_admissible,
    AdmissibleFamily,
)

__all__ = ["main", "run_config", "load_config", "ConfigError"]

SCHEMA_VERSION = 1
STOCHASTIC_KINDS = {"mc_laplace", "degeneration", "fdd", "metric_audit"}
FIELD_GRID_NODES = 4001


class ConfigError(ValueError):
    pass


def _require(cfg: dict, key: str, kind=None):
    if key not in cfg:
        raise ConfigError(f"missing required field {key!r}")
    value = cfg[key]
    if kind is not None and not isinstance(value, kind):
        raise ConfigError(f"field {key!r} has wrong type {type(value).__name__}")
    return value


def parse_mechanism(doc: dict) -> BranchingMechanism:
    if not isinstance(doc, dict):
        raise ConfigError("mechanism must be an object")
    b = float(doc.get("b", 0.0))
    sigma2 = float(doc.get("sigma2", 0.0))
    jumps_doc = doc.get("jumps", {"type": "none"})
    jtype = jumps_doc.get("type", "none")
    if jtype == "none":
        jumps = JumpAtoms(np.empty(0), np.empty(0))
    elif jtype == "atoms":
        jumps = JumpAtoms.from_pairs(jumps_doc.get("atoms", []))
    elif jtype == "stable":
        jumps = stable_panel(
            alpha=float(_require(jumps_doc, "alpha")),
            c=float(jumps_doc.get("c", 1.0)),
            eps=float(jumps_doc.get("eps", 1e-4)),
            cap=float(jumps_doc.get("cap", 1e3)),
            nodes=int(jumps_doc.get("nodes", 200)),
        )
    else:
        raise ConfigError(f"unknown jump type {jtype!r}")
    try:
        return BranchingMechanism(b=b, sigma2=sigma2, jumps=jumps)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def parse_field(doc: dict) -> MechanismField:
    if not isinstance(doc, dict):
        raise ConfigError("field must be an object")
    a = float(_require(doc, "a"))
    grid = np.linspace(0.0, a, FIELD_GRID_NODES)
    ftype = doc.get("type", "constant")
    if ftype == "constant":
        return MechanismField.constant(parse_mechanism(_require(doc, "mechanism")), grid)
    if ftype == "regions":
        regions = [(float(r["start"]), parse_mechanism(r["mechanism"]))
                   for r in _require(doc, "regions", list)]
        return MechanismField.from_regions(regions, grid)
    raise ConfigError(f"unknown field type {ftype!r}")


def parse_kernel(doc: dict):
    """Kernel pieces (h, atoms) from the psi config document; h and atoms are
    constants or theta-tables."""
    if doc is None:
        return 0.0, None
    h_doc = doc.get("h", 0.0)
    if isinstance(h_doc, dict):
        if h_doc.get("type") == "table":
            grid = np.asarray(_require(h_doc, "grid", list), dtype=float)
            values = np.asarray(_require(h_doc, "values", list), dtype=float)
            if grid.size != values.size:
                raise ConfigError("h table grid/values lengths differ")
            h = lambda t, g=grid, v=values: float(np.interp(t, g, v))
        else:
            h = float(h_doc.get("value", 0.0))
    else:
        h = float(h_doc)
    atoms_doc = doc.get("atoms")
    if atoms_doc is None:
        atoms = None
    elif isinstance(atoms_doc, dict):
        if atoms_doc.get("type") != "table":
            raise ConfigError("atoms must be a pair list or a theta-table")
        grid = np.asarray(_require(atoms_doc, "grid", list), dtype=float)
        per_node = [JumpAtoms.from_pairs(p) for p in _require(atoms_doc, "atoms", list)]
        if grid.size != len(per_node):
            raise ConfigError("atoms table grid/entries lengths differ")

        def atoms(t, g=grid, tables=per_node):
            i = int(np.clip(np.searchsorted(g, t), 1, g.size - 1))
            return tables[i - 1 if t - g[i - 1] <= g[i] - t else i]

    else:
        atoms = JumpAtoms.from_pairs(atoms_doc)
    return h, atoms


def parse_test_function(doc):
    if doc is None:
        return 1.0
    if isinstance(doc, (int, float)):
        return float(doc)
    ftype = doc.get("type", "constant")
    if ftype == "constant":
        return float(doc.get("value", 1.0))
    if ftype == "step":
        return ("step", [float(p) for p in _require(doc, "points", list)],
                [float(w) for w in _require(doc, "weights", list)])
    raise ConfigError(f"unknown test function type {ftype!r}")


def parse_initial_measure(doc):
    if doc is None:
        return "unit_lattice"
    if isinstance(doc, str):
        if doc != "unit_lattice":
            raise ConfigError(f"unknown initial measure {doc!r}")
        return doc
    mtype = doc.get("type", "unit_lattice")
    if mtype == "unit_lattice":
        return "unit_lattice"
    if mtype == "atoms":
        return [(float(l), float(m)) for l, m in _require(doc, "atoms", list)]
    raise ConfigError(f"unknown initial measure type {mtype!r}")


def _k_ladder(cfg) -> list[int]:
    ladder = _require(cfg, "k_ladder", list)
    ladder = [int(k) for k in ladder]
    if not ladder or any(k < 1 for k in ladder) or sorted(ladder) != ladder or len(set(ladder)) != len(ladder):
        raise ConfigError("k_ladder must be a strictly increasing list of positive integers")
    return ladder


def _opts(cfg) -> CumulantSolverOptions:
    return CumulantSolverOptions(h_ode=float(cfg.get("h_ode", 1e-3)))


def load_config(path_or_doc) -> dict:
    if isinstance(path_or_doc, dict):
        cfg = dict(path_or_doc)
    else:
        try:
            with open(path_or_doc) as fh:
                cfg = json.load(fh)
        except FileNotFoundError as exc:
            bundled = _bundled_configs()
            if str(path_or_doc) in bundled:
                cfg = dict(bundled[str(path_or_doc)])
            else:
                raise ConfigError(f"config not found: {path_or_doc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from exc
    if cfg.get("schema") != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema version {cfg.get('schema')!r}")
    _require(cfg, "name", str)
    kind = _require(cfg, "kind", str)
    if kind in STOCHASTIC_KINDS and "seed" not in cfg:
        raise ConfigError(f"kind {kind!r} requires an explicit seed (no implicit entropy)")
    return cfg


def run_config(cfg: dict, workers: int = 1) -> lab.ExperimentResult:
    kind = cfg["kind"]
    name = cfg["name"]
    gamma_c = cfg.get("gamma_c")
    if kind == "closed_forms":
        return lab.closed_form_cumulants(opts=_opts(cfg),
                                         tol=float(cfg.get("tolerance", 1e-6)), name=name)
    if kind == "cumulant_ladder":
        mech = parse_mechanism(_require(cfg, "mechanism"))
        return lab.cumulant_convergence(
            mech, _k_ladder(cfg), float(_require(cfg, "t")), float(_require(cfg, "lambda")),
            gamma_c=gamma_c, final_bound=float(cfg.get("final_gap", 5e-3)),
            opts=_opts(cfg), name=name)
    if kind == "condition_3a":
        field = parse_field(_require(cfg, "field"))
        return lab.condition_3a_audit(field, _k_ladder(cfg),
                                      [float(z) for z in _require(cfg, "z_grid", list)],
                                      gamma_rule=gamma_c, name=name)
    if kind == "mc_laplace":
        model = cfg.get("model", "independent")
        common = dict(
            init_spec=parse_initial_measure(cfg.get("initial_measure")),
            f_spec=parse_test_function(cfg.get("test_function")),
            times=[float(t) for t in _require(cfg, "times", list)],
            k_ladder=_k_ladder(cfg),
            replicates=int(_require(cfg, "replicates")),
            seed=int(_require(cfg, "seed")),
            gamma_c=gamma_c,
            workers=workers,
            opts=_opts(cfg),
            name=name,
        )
        if model == "independent":
            field = parse_field(_require(cfg, "field"))
            return lab.mc_laplace_independent(field, check_mass=bool(cfg.get("check_mass", False)),
                                              **common)
        if model == "interactive":
            phi0 = parse_mechanism(_require(cfg, "phi0"))
            h, atoms = parse_kernel(cfg.get("psi", cfg.get("kernel")))
            a = float(_require(cfg, "a"))
            _validate_family(phi0, h, atoms, a)
            return lab.mc_laplace_interactive(phi0, h, atoms, a, **common)
        raise ConfigError(f"unknown model {model!r}")
    if kind == "generator_gap":
        phi0 = parse_mechanism(_require(cfg, "phi0"))
        h, atoms = parse_kernel(cfg.get("psi", cfg.get("kernel")))
        a = float(_require(cfg, "a"))
        _validate_family(phi0, h, atoms, a)
        nu = [(float(l), float(m)) for l, m in _require(cfg, "nu", list)]
        return lab.generator_gap(phi0, h, atoms, a, nu,
                                 parse_test_function(cfg.get("test_function")),
                                 _k_ladder(cfg), gamma_c=gamma_c,
                                 oracle_nodes=int(cfg.get("oracle_nodes", 201)),
                                 final_rel_bound=float(cfg.get("final_relative_gap", 0.05)),
                                 name=name)
    if kind == "nonlocal_endpoint":
        return lab.nonlocal_endpoint(float(cfg.get("h", 1.0)), float(_require(cfg, "a")),
                                     parse_test_function(cfg.get("test_function")),
                                     [float(t) for t in _require(cfg, "times", list)],
                                     grid_nodes=int(cfg.get("grid_nodes", 101)),
                                     opts=_opts(cfg), tol=float(cfg.get("tolerance", 1e-4)),
                                     name=name)
    if kind == "degeneration":
        mech = parse_mechanism(_require(cfg, "mechanism"))
        return lab.degeneration_twin(mech, float(_require(cfg, "a")), int(_require(cfg, "k")),
                                     int(_require(cfg, "generations")),
                                     int(_require(cfg, "replicates")), int(_require(cfg, "seed")),
                                     gamma_c=gamma_c,
                                     init_spec=parse_initial_measure(cfg.get("initial_measure")),
                                     workers=workers, name=name)
    if kind == "metric_audit":
        return lab.metric_audit(a=float(cfg.get("a", 1.0)),
                                grid_nodes=int(cfg.get("grid_nodes", 101)),
                                n_members=int(cfg.get("members", 32)),
                                n_triples=int(cfg.get("triples", 1000)),
                                corpus_size=int(cfg.get("corpus", 100)),
                                delta=float(cfg.get("delta", 0.05)),
                                seed=int(_require(cfg, "seed")), name=name)
    if kind == "fdd":
        field = parse_field(_require(cfg, "field"))
        return lab.fdd_flow([float(p) for p in _require(cfg, "points", list)],
                            [float(w) for w in _require(cfg, "weights", list)],
                            field, [float(t) for t in _require(cfg, "times", list)],
                            _k_ladder(cfg), int(_require(cfg, "replicates")),
                            int(_require(cfg, "seed")), gamma_c=gamma_c,
                            workers=workers, opts=_opts(cfg), name=name)
    raise ConfigError(f"unknown experiment kind {kind!r}")


def _validate_family(phi0, h, atoms, a):
    """Admissibility gate before any interacting-model construction."""
    grid = np.linspace(0.0, a, 51)
    family = AdmissibleFamily.tabulate(phi0, grid, h, atoms)
    report = validate_admissible(family)
    if not report.passed:
        raise ValueError(report.summary())


def _apply_override(cfg: dict, expr: str) -> None:
    if "=" not in expr:
        raise ConfigError(f"override {expr!r} must look like key=value")
    key, raw = expr.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    node = cfg
    parts = key.split(".")
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override path {key!r} crosses a non-object")
    node[parts[-1]] = value


def _bundled_configs() -> dict[str, dict]:
    out = {}
    for entry in resources.files("branchflow.configs").iterdir():
        if entry.name.endswith(".json"):
            doc = json.loads(entry.read_text())
            out[doc["name"]] = doc
    return dict(sorted(out.items()))


def _cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
        for expr in args.override or []:
            _apply_override(cfg, expr)
        out_dir = Path(args.out or cfg.get("out") or os.environ.get("BRANCHFLOW_OUT", "."))
        out_dir.mkdir(parents=True, exist_ok=True)
        result = run_config(cfg, workers=args.workers)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ValidityError, ValueError) as exc:
        print(f"construction error: {exc}", file=sys.stderr)
        return 3
    except (PopulationCapError, BlowUpError, DegenerateRegimeError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 4
    csv_path = out_dir / f"{result.name}.csv"
    json_path = out_dir / f"{result.name}.json"
    result.to_csv(csv_path)
    result.to_json(json_path)
    print(f"backend: {backend_name()}")
    for key, ok in sorted(result.verdicts.items()):
        print(f"{result.name}: {key}: {'pass' if ok else 'FAIL'}")
    print(f"wrote {csv_path} and {json_path} ({result.wall_clock:.2f} s)")
    return 0 if result.passed else 1


def _cmd_list(_args) -> int:
    for name, doc in _bundled_configs().items():
        desc = doc.get("description", "").split("\n")[0]
        print(f"{name:28s} {doc.get('kind', '?'):20s} {desc}")
    return 0


def _cmd_describe(args) -> int:
    configs = _bundled_configs()
    if args.name not in configs:
        print(f"unknown config {args.name!r}; see `branchflow list`", file=sys.stderr)
        return 2
    doc = configs[args.name]
    print(f"name: {doc['name']}")
    print(f"kind: {doc['kind']}")
    print(f"description: {doc.get('description', '')}")
    print("config:")
    print(json.dumps(doc, indent=2, sort_keys=True))
    return 0


def _cmd_show(args) -> int:
    configs = _bundled_configs()
    if args.name not in configs:
        print(f"unknown config {args.name!r}", file=sys.stderr)
        return 2
    print(json.dumps(configs[args.name], indent=2, sort_keys=True))
    return 0


def bundled_config(name: str) -> dict:
    """Programmatic access to a bundled example config."""
    configs = _bundled_configs()
    if name not in configs:
        raise ConfigError(f"unknown bundled config {name!r}")
    return configs[name]


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="branchflow",
                                     description="branching-flow experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("config", help="path to a JSON config")
    p_run.add_argument("--workers", type=int, default=1,
                       help="replicate worker threads (never changes results)")
    p_run.add_argument("--out", default=None, help="output directory")
    p_run.add_argument("--override", action="append", metavar="KEY=VALUE",
                       help="override a config field (dotted path, JSON value)")
    p_run.set_defaults(fn=_cmd_run)

    p_list = sub.add_parser("list", help="list bundled example configs")
    p_list.set_defaults(fn=_cmd_list)

    p_desc = sub.add_parser("describe", help="describe a bundled config")
    p_desc.add_argument("name")
    p_desc.set_defaults(fn=_cmd_describe)

    p_show = sub.add_parser("show", help="print a bundled config as JSON")
    p_show.add_argument("name")
    p_show.set_defaults(fn=_cmd_show)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
