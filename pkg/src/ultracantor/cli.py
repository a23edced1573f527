"""Command-line entry point.

Every command builds a JSON report holding its full run configuration; the
same configuration fed back through :func:`regenerate` reproduces the report
byte for byte. Exit codes: 0 success, 1 domain error (error object on
stdout), 2 usage error.
"""

from __future__ import annotations

import argparse
import io
import json
import math
import os
import sys
import time
import warnings
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .contfrac import parse_source
from .embedding import (
    FiniteMetric,
    check_embeddable,
    choose_L,
    distortion_report,
    schoenberg_test,
)
from .errors import DegenerateError, DomainError, InvalidTreeError, PipelineError
from .gw import (
    GWConfig,
    martingale_trace,
    mc_dimension,
    parse_offspring,
    parse_weights,
    sample_tree,
    solve_s_m,
    solve_t_m,
    step_variance,
    variance_w,
    variance_y,
)
from .hausdorff import estimate_dimension, kraft_weight
from .reports import RunConfig, digest, dumps, make_report, validate_report
from .sadic import (
    SAdicSystem,
    build_bratteli,
    check_primitive,
    check_proper,
    diagram_to_tree,
    durand_ratio,
    sandwich_check,
    weight_decay,
)
from .sturmian import nonembed_witness, sturmian_verdict, tree_of_words
from .tree import WeightedTree, d_kappa, is_reduced, reduce, telescope, telescoped_distance, validate

SEED_ENV = "ULTRACANTOR_SEED"

# parsed arguments that describe where output goes rather than what is computed
_PLUMBING = {"out", "format", "meta", "handler", "command", "action"}


class UsageError(Exception):
    """Bad invocation: missing file, malformed option value."""


def default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


# -- input helpers -----------------------------------------------------------


def _existing(path: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"no such file: {path}")
    return p


def load_tree(path: str) -> WeightedTree:
    """A tree file, or any report whose result carries a ``tree``."""
    data = json.loads(_existing(path).read_text()) if path else None
    if isinstance(data, dict) and "result" in data and "kind" in data:
        if "tree" not in data["result"]:
            raise InvalidTreeError(f"report {path} ({data['kind']}) carries no tree")
        data = data["result"]["tree"]
    if not isinstance(data, dict):
        raise InvalidTreeError(f"{path} is not a tree document")
    return WeightedTree.from_dict(data)


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def _tree_summary(tree: WeightedTree) -> dict:
    return {"n_vertices": len(tree), "max_depth": tree.max_depth, "n_leaves": len(tree.leaves())}


# -- handlers ----------------------------------------------------------------
# each returns (kind, result) and optionally a CSV rendering


def h_tree_validate(a) -> tuple[str, dict]:
    tree = load_tree(a.tree)
    problems = validate(tree)
    if problems:
        raise InvalidTreeError(f"{len(problems)} problem(s) found", {"problems": problems})
    return "tree_validate", {"valid": True, "reduced": is_reduced(tree), **_tree_summary(tree)}


def h_tree_reduce(a) -> tuple[str, dict]:
    tree = load_tree(a.tree)
    red = reduce(tree)
    return "tree_reduce", {"before": _tree_summary(tree), "after": _tree_summary(red), "tree": red.to_dict()}


def h_tree_telescope(a) -> tuple[str, dict]:
    tree = load_tree(a.tree)
    coarse = telescope(tree, a.delta)
    rng = np.random.default_rng(a.seed)
    lo, hi, n = math.inf, -math.inf, 0
    for _ in range(a.samples):
        x, y = tree.sample_point(rng), tree.sample_point(rng)
        d = d_kappa(tree, x, y)
        if d == 0:
            continue
        r = d / telescoped_distance(tree, coarse, x, y)
        lo, hi, n = min(lo, r), max(hi, r), n + 1
    sandwich = {
        "pairs": n,
        "min_ratio": lo if n else None,
        "max_ratio": hi if n else None,
        "holds": bool(n == 0 or (a.delta <= lo and hi <= 1.0)),
    }
    return "tree_telescope", {"delta": a.delta, "sandwich": sandwich, **_tree_summary(coarse), "tree": coarse.to_dict()}


def _reduced_input(a) -> WeightedTree:
    tree = load_tree(a.tree)
    if getattr(a, "reduce", False):
        tree = reduce(tree)
    return tree


def h_embed_check(a) -> tuple[str, dict]:
    return "embed_check", check_embeddable(_reduced_input(a)).to_dict()


def h_embed_map(a) -> tuple[str, dict]:
    tree = _reduced_input(a)
    verdict = check_embeddable(tree)
    fit = verdict.fit
    if a.L == "auto":
        if not 0 < fit.theta < 1:
            raise DegenerateError("weights do not decay; no automatic L exists, pass --L k")
        L = choose_L(fit.M, fit.c, fit.theta)
    else:
        try:
            L = int(a.L)
        except ValueError:
            raise UsageError(f"--L takes 'auto' or a positive integer, got {a.L!r}") from None
        if L < 1:
            raise UsageError("--L must be positive")
    params = verdict.params(tree, L)
    rep = distortion_report(tree, params, a.samples, a.seed)
    out = rep.to_dict()
    out["satisfied"] = verdict.satisfied
    out["witness_pairs"] = list(verdict.witness_pairs)
    return "embed_map", out


def h_embed_schoenberg(a) -> tuple[str, dict]:
    metric = FiniteMetric.from_csv(_existing(a.metric).read_text())
    base: int | str = a.base
    if isinstance(base, str) and base.isdigit() and base not in metric.labels:
        base = int(base)
    res = schoenberg_test(metric, base)
    return "embed_schoenberg", {"labels": list(metric.labels), **res.to_dict()}


def h_dim_estimate(a) -> tuple[str, dict, str]:
    tree = load_tree(a.tree)
    deltas = _floats(a.deltas) if a.deltas else None
    bracket = tuple(_floats(a.bracket)) if a.bracket else None
    if bracket is not None and len(bracket) != 2:
        raise UsageError("--bracket takes two numbers: lo,hi")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rep = estimate_dimension(tree, deltas, bracket, tol=a.tol, band=a.band)
    return "dim_estimate", rep.to_dict(), rep.to_csv()


def h_dim_kraft(a) -> tuple[str, dict, str]:
    tree = kraft_weight(load_tree(a.tree))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rep = estimate_dimension(tree, tol=a.tol)
    return "dim_kraft", {"s_estimate": rep.s_estimate, "estimate": rep.to_dict(), "tree": tree.to_dict()}, rep.to_csv()


def _system(a) -> SAdicSystem:
    try:
        return SAdicSystem.from_dict(json.loads(_existing(a.system).read_text()))
    except (KeyError, TypeError) as exc:
        raise UsageError(f"malformed system file: {exc}") from None


def h_sadic_check(a) -> tuple[str, dict]:
    system = _system(a)
    ok, l, r = check_proper(system)
    s0 = a.s0 or system.s0
    out: dict[str, Any] = {"proper": ok, "l": l, "r": r, "s0": s0}
    if s0:
        out["primitive"] = check_primitive(system, s0, a.depth)
        out["durand"] = durand_ratio(system, s0, a.depth)
        out["weight_decay"] = weight_decay(system, s0, max(1, a.depth // s0))
    else:
        out["primitive"] = None
    if a.pairs:
        out["sandwich"] = sandwich_check(system, a.depth, a.pairs, a.seed).to_dict()
    return "sadic_check", out


def h_sadic_tree(a) -> tuple[str, dict]:
    system = _system(a)
    tree = diagram_to_tree(build_bratteli(system, a.depth), reduced=not a.unreduced)
    return "sadic_tree", {**_tree_summary(tree), "tree": tree.to_dict()}


def h_sturmian_verdict(a) -> tuple[str, dict]:
    depths = range(max(1, a.depth - 4), a.depth + 1)
    v = sturmian_verdict(parse_source(a.alpha), depths, witness_radius=a.witness_radius)
    return "sturmian_verdict", v.to_dict()


def h_sturmian_tree(a) -> tuple[str, dict]:
    tree = tree_of_words(parse_source(a.alpha), a.depth, reduced=not a.unreduced)
    return "sturmian_tree", {"alpha": a.alpha, **_tree_summary(tree), "tree": tree.to_dict()}


def h_sturmian_witness(a) -> tuple[str, dict]:
    w = nonembed_witness(parse_source(a.alpha), a.n, a.depth)
    return "sturmian_witness", w.to_dict()


def _gw_config(a, trials: int | None = None) -> GWConfig:
    try:
        p, rho = parse_offspring(a.offspring), parse_weights(a.weights)
    except ValueError as exc:
        if isinstance(exc, DomainError):
            raise
        raise UsageError(str(exc)) from None
    return GWConfig(p, rho, a.depth, a.seed, trials or 1)


def _closed_forms(p, rho) -> dict:
    m, sig2 = p.mean, p.variance
    t = solve_t_m(p, rho)
    try:
        s_m = solve_s_m(p, rho)
    except DomainError:
        s_m = None
    out = {
        "offspring": p.label(),
        "weights": rho.label(),
        "m": m,
        "sigma2": sig2,
        "s_m": s_m,
        "t_m": t.value,
        "t_m_reason": t.reason,
        "var_w_limit": variance_w(p),
    }
    if t.value is not None:
        out["step_variance_t_m"] = step_variance(p, rho, t.value)
    return out


def h_gw_solve(a) -> tuple[str, dict]:
    return "gw_solve", _closed_forms(parse_offspring(a.offspring), parse_weights(a.weights))


def h_gw_simulate(a) -> tuple[str, dict, str]:
    cfg = _gw_config(a, a.trials)
    ref = _closed_forms(cfg.offspring, cfg.weights)
    s_values = _floats(a.s) if a.s else [x for x in (ref["s_m"], ref["t_m"]) if x is not None]
    trace = martingale_trace(cfg, s_values)
    summ = trace.summary()
    gens = list(range(cfg.depth + 1))
    refs: dict[str, Any] = {"W": {"mean": 1.0, "var": [variance_w(cfg.offspring, n) for n in gens]}}
    for s in s_values:
        refs[f"Y({s!r})"] = {"mean": 1.0, "var": [variance_y(cfg.offspring, cfg.weights, s, n) for n in gens]}
    result = {"closed_forms": ref, "s_values": s_values, "trace": summ, "reference": refs, "sizes_mean": trace.Z.mean(axis=0).tolist()}
    if a.mc_dimension:
        result["mc_dimension"] = mc_dimension(cfg).to_dict()
    buf = io.StringIO()
    names = list(summ)
    buf.write("generation," + ",".join(f"{n}_mean,{n}_var,{n}_se_var" for n in names) + "\n")
    for g in gens:
        cells = []
        for n in names:
            cells += [repr(summ[n]["mean"][g]), repr(summ[n]["var"][g]), repr(summ[n]["se_var"][g])]
        buf.write(f"{g}," + ",".join(cells) + "\n")
    return "gw_simulate", result, buf.getvalue()


# -- pipeline ------------------------------------------------------------------


def _stage_generate(op: str, st: dict, seed: int):
    if op == "tree.load":
        return "tree", load_tree(st["path"])
    if op == "metric.load":
        return "metric", FiniteMetric.from_csv(_existing(st["path"]).read_text())
    if op == "sturmian.tree":
        return "tree", tree_of_words(parse_source(str(st["alpha"])), int(st["depth"]))
    if op == "sadic.tree":
        sys_cfg = st["system"] if isinstance(st["system"], dict) else json.loads(_existing(st["system"]).read_text())
        return "tree", diagram_to_tree(build_bratteli(SAdicSystem.from_dict(sys_cfg), int(st["depth"])))
    if op == "gw.sample":
        cfg = GWConfig(parse_offspring(st["offspring"]), parse_weights(st["weights"]), int(st["depth"]), int(st.get("seed", seed)))
        return "tree", sample_tree(cfg, int(st.get("trial", 0)))
    return None


def _stage_analyze(op: str, st: dict, kind: str | None, art, seed: int):
    needs = {
        "tree.reduce": "tree",
        "tree.telescope": "tree",
        "dim.kraft": "tree",
        "embed.check": "tree",
        "embed.map": "tree",
        "dim.estimate": "tree",
        "embed.schoenberg": "metric",
    }
    if op == "gw.mc_dimension":
        cfg = GWConfig(
            parse_offspring(st["offspring"]),
            parse_weights(st["weights"]),
            int(st["depth"]),
            int(st.get("seed", seed)),
            int(st.get("trials", 10)),
        )
        res = mc_dimension(cfg).to_dict()
        res["difference"] = res["mean"] - res["s_m"]
        return kind, art, res
    if op not in needs:
        raise PipelineError(f"unknown stage {op!r}")
    if kind != needs[op]:
        raise PipelineError(f"stage {op} expects a {needs[op]} but the previous stages produced {kind or 'nothing'}")
    if op == "tree.reduce":
        art = reduce(art)
        return kind, art, _tree_summary(art)
    if op == "tree.telescope":
        art = telescope(art, float(st["delta"]))
        return kind, art, _tree_summary(art)
    if op == "dim.kraft":
        art = kraft_weight(art)
        return kind, art, _tree_summary(art)
    if op == "embed.check":
        return kind, art, check_embeddable(art).to_dict()
    if op == "embed.map":
        v = check_embeddable(art)
        L = st.get("L", "auto")
        L = choose_L(v.fit.M, v.fit.c, v.fit.theta) if L == "auto" else int(L)
        return kind, art, distortion_report(art, v.params(art, L), int(st.get("samples", 1000)), int(st.get("seed", seed))).to_dict()
    if op == "dim.estimate":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            rep = estimate_dimension(art, st.get("deltas"), tol=float(st.get("tol", 0.01)))
        return kind, art, rep.to_dict()
    return kind, art, schoenberg_test(art, st.get("base", 0)).to_dict()


def run_pipeline(stages: list[dict], seed: int) -> dict:
    """Run stages in order, threading the current tree or metric between them."""
    kind, art = None, None
    out = []
    for i, st in enumerate(stages):
        if not isinstance(st, dict) or "op" not in st:
            raise PipelineError(f"stage {i} has no 'op'")
        op = st["op"]
        try:
            gen = _stage_generate(op, st, seed)
            if gen is not None:
                kind, art = gen
                res = {"produced": kind, **(_tree_summary(art) if kind == "tree" else {"n_points": len(art.labels)})}
            else:
                kind, art, res = _stage_analyze(op, st, kind, art, seed)
        except PipelineError as exc:
            if exc.details.get("stage") is None:
                exc.details.update({"stage": i, "op": op})
            raise
        except DomainError as exc:
            raise PipelineError(f"stage {i} ({op}) failed: {exc}", {"stage": i, "op": op, "cause": exc.to_dict()["error"]}) from exc
        except (KeyError, TypeError, ValueError) as exc:
            raise PipelineError(f"stage {i} ({op}) is malformed: {exc}", {"stage": i, "op": op}) from exc
        out.append({"op": op, "params": {k: v for k, v in st.items() if k != "op"}, "result": res})
    return {"stages": out}


def h_pipeline(a) -> tuple[str, dict]:
    text = _existing(a.spec).read_text()
    try:
        doc = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as exc:
        raise UsageError(f"pipeline file is not JSON: {exc}") from None
    stages = doc.get("stages", []) if isinstance(doc, dict) else doc
    return "pipeline", run_pipeline(stages, a.seed)


# -- parser --------------------------------------------------------------------


def _common(p: argparse.ArgumentParser, csv: bool = False) -> None:
    p.add_argument("--out", default="-", help="report path, '-' for stdout (default)")
    p.add_argument("--seed", type=int, default=None, help=f"random seed (default: ${SEED_ENV} or 0)")
    p.add_argument("--meta", default=None, help="write timing metadata here (kept out of the report)")
    p.add_argument("--format", choices=["json", "csv"] if csv else ["json"], default="json")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ultracantor", description="Ultrametric Cantor sets as weighted trees.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    top = parser.add_subparsers(dest="command", required=True)

    def group(name: str, help: str):
        g = top.add_parser(name, help=help)
        return g.add_subparsers(dest="action", required=True)

    t = group("tree", "validate, reduce or telescope a tree file")
    p = t.add_parser("validate")
    p.add_argument("tree")
    _common(p)
    p.set_defaults(handler=h_tree_validate)
    p = t.add_parser("reduce")
    p.add_argument("tree")
    _common(p)
    p.set_defaults(handler=h_tree_reduce)
    p = t.add_parser("telescope")
    p.add_argument("tree")
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--samples", type=int, default=1000)
    _common(p)
    p.set_defaults(handler=h_tree_telescope)

    e = group("embed", "embeddability test, explicit map, finite metric test")
    p = e.add_parser("check")
    p.add_argument("tree")
    p.add_argument("--reduce", action="store_true", help="reduce the tree first")
    _common(p)
    p.set_defaults(handler=h_embed_check)
    p = e.add_parser("map")
    p.add_argument("tree")
    p.add_argument("--L", default="auto")
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--reduce", action="store_true")
    _common(p)
    p.set_defaults(handler=h_embed_map)
    p = e.add_parser("schoenberg")
    p.add_argument("metric", help="CSV: header row of labels, then the distance matrix")
    p.add_argument("--base", default="0", help="base point label or index")
    _common(p)
    p.set_defaults(handler=h_embed_schoenberg)

    d = group("dim", "Hausdorff dimension")
    p = d.add_parser("estimate")
    p.add_argument("tree")
    p.add_argument("--deltas", default=None, help="comma-separated ladder (default: automatic)")
    p.add_argument("--tol", type=float, default=0.01)
    p.add_argument("--band", type=float, default=0.02)
    p.add_argument("--bracket", default=None, help="lo,hi")
    _common(p, csv=True)
    p.set_defaults(handler=h_dim_estimate)
    p = d.add_parser("kraft")
    p.add_argument("tree")
    p.add_argument("--tol", type=float, default=0.01)
    _common(p, csv=True)
    p.set_defaults(handler=h_dim_kraft)

    s = group("sadic", "S-adic systems")
    p = s.add_parser("check")
    p.add_argument("system")
    p.add_argument("--depth", type=int, default=8)
    p.add_argument("--s0", type=int, default=None)
    p.add_argument("--pairs", type=int, default=0, help="sample this many pairs for the metric comparison")
    _common(p)
    p.set_defaults(handler=h_sadic_check)
    p = s.add_parser("tree")
    p.add_argument("system")
    p.add_argument("--depth", type=int, required=True)
    p.add_argument("--unreduced", action="store_true")
    _common(p)
    p.set_defaults(handler=h_sadic_tree)

    w = group("sturmian", "Sturmian subshifts")
    p = w.add_parser("verdict")
    p.add_argument("--alpha", required=True)
    p.add_argument("--depth", type=int, default=12)
    p.add_argument("--witness-radius", type=int, default=250)
    _common(p)
    p.set_defaults(handler=h_sturmian_verdict)
    p = w.add_parser("tree")
    p.add_argument("--alpha", required=True)
    p.add_argument("--depth", type=int, required=True)
    p.add_argument("--unreduced", action="store_true")
    _common(p)
    p.set_defaults(handler=h_sturmian_tree)
    p = w.add_parser("witness")
    p.add_argument("--alpha", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--depth", type=int, default=250, help="tree radius to search")
    _common(p)
    p.set_defaults(handler=h_sturmian_witness)

    g = group("gw", "Galton-Watson random trees")
    p = g.add_parser("simulate")
    p.add_argument("--offspring", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--depth", type=int, required=True)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--s", default=None, help="comma-separated s values for Y_n(s)")
    p.add_argument("--mc-dimension", action="store_true")
    _common(p, csv=True)
    p.set_defaults(handler=h_gw_simulate)
    p = g.add_parser("solve")
    p.add_argument("--offspring", required=True)
    p.add_argument("--weights", required=True)
    _common(p)
    p.set_defaults(handler=h_gw_solve)

    p = top.add_parser("pipeline", help="run a generator followed by analyses")
    p.add_argument("spec")
    _common(p)
    p.set_defaults(handler=h_pipeline)
    return parser


# -- running -------------------------------------------------------------------


def _config(args: argparse.Namespace) -> RunConfig:
    params = {k: v for k, v in sorted(vars(args).items()) if k not in _PLUMBING and k != "seed"}
    inputs = [params[k] for k in ("tree", "metric", "system", "spec") if k in params]
    return RunConfig(
        subcommand=" ".join(x for x in (args.command, getattr(args, "action", None)) if x),
        inputs=inputs,
        params=params,
        seed=args.seed,
        output=args.out,
        format=args.format,
        input_digests={p: digest(p) for p in inputs if Path(p).is_file()},
    )


def execute(args: argparse.Namespace) -> tuple[dict, str | None]:
    """Run the handler; return the validated report and the CSV rendering if any."""
    config = _config(args)
    out = args.handler(args)
    kind, result = out[0], out[1]
    csv_text = out[2] if len(out) > 2 else None
    report = make_report(kind, config, result)
    validate_report(report)
    return report, csv_text


def render(report: dict, csv_text: str | None, fmt: str) -> str:
    if fmt == "csv":
        head = {k: report[k] for k in ("kind", "version", "config")}
        return "# " + json.dumps(head, sort_keys=True, allow_nan=False) + "\n" + (csv_text or "")
    return dumps(report)


def regenerate(report: dict) -> str:
    """Rerun the command recorded in a report and return the serialized result."""
    cfg = RunConfig.from_dict(report["config"])
    for path, h in cfg.input_digests.items():
        if not Path(path).is_file() or digest(path) != h:
            raise UsageError(f"input {path} is missing or changed since the report was made")
    command, _, action = cfg.subcommand.partition(" ")
    parser = build_parser()
    argv = [command] + ([action] if action else [])
    probe = parser.parse_args(argv + _probe_args(command, action, cfg.params))
    ns = argparse.Namespace(**{**vars(probe), **cfg.params, "seed": cfg.seed, "out": cfg.output, "format": cfg.format})
    new, csv_text = execute(ns)
    return render(new, csv_text, cfg.format)


def _probe_args(command: str, action: str, params: dict) -> list[str]:
    # minimal argv that satisfies required options, only to recover the handler
    extra = []
    for k in ("tree", "metric", "system", "spec"):
        if k in params:
            extra.append(str(params[k]))
    for k in ("delta", "alpha", "depth", "n", "offspring", "weights"):
        if k in params and params[k] is not None:
            extra += [f"--{k}", str(params[k])]
    return extra


def _write(text: str, dest: str) -> None:
    if dest == "-":
        sys.stdout.write(text)
    else:
        Path(dest).write_text(text)


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    started = time.time()
    try:
        if args.seed is None:
            args.seed = default_seed()
        report, csv_text = execute(args)
        _write(render(report, csv_text, args.format), args.out)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"ultracantor: error: {exc}", file=sys.stderr)
        return 2
    except DomainError as exc:
        err = make_report("error", _config(args) if hasattr(args, "handler") else RunConfig("?"), exc.to_dict()["error"])
        sys.stdout.write(dumps(err))
        return 1
    if args.meta:
        meta = {"started": started, "elapsed_s": time.time() - started, "version": __version__}
        Path(args.meta).write_text(json.dumps(meta, indent=2) + "\n")
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
