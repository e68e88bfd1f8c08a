"""Command-line interface: ``metatree {fit,predict,verify,bench}``.

Exit codes: 0 success, 1 verification failure, 2 usage or validation error.
"""

import argparse
import csv
import itertools
import json
import math
import sys
from dataclasses import dataclass, field, fields

import numpy as np

from . import bench as bench_mod
from .errors import MetaTreeError, ResourceLimitError
from .inference import DEFAULT_DEPTH_CAP, ENGINES, fit, predict
from .leaf_models import spec_from_dict
from .oracle import DEFAULT_CAP, exact_posterior, exact_predictive
from .tree import FeatureAssignment, MetaTreeModel, TreeShape
from .validation import DataBatch, check_features

EXIT_OK, EXIT_VERIFY_FAILED, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    arity: int = 2
    n_features: int | None = None
    max_depth: int | None = 5
    feature_assignment: object = None
    split_prob: object = 0.5
    node_split_probs: list = field(default_factory=list)
    leaf: dict = field(default_factory=lambda: {"family": "bernoulli_beta", "alpha": 1.0, "beta": 1.0})
    node_leaf_priors: list = field(default_factory=list)
    engine: str = "batch"
    seed: int = 0
    depth_cap: int = DEFAULT_DEPTH_CAP
    zero_based: bool = False

    @classmethod
    def load(cls, path):
        try:
            with open(path) as f:
                d = json.load(f)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {path}: {exc}") from None
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def build_model(self):
        if self.n_features is None:
            raise UsageError("n_features is unknown; set it in the config or provide a CSV header")
        shape = TreeShape(self.arity, self.n_features, self.max_depth)
        fa = self.feature_assignment
        if isinstance(fa, str):
            try:
                with open(fa) as f:
                    fa = json.load(f)
            except (OSError, json.JSONDecodeError) as exc:
                raise UsageError(f"cannot read feature assignment {fa}: {exc}") from None
        assignment = None if fa is None else FeatureAssignment.from_dict(fa)
        leaf = spec_from_dict(self.leaf)
        node_leaf = {tuple(r["address"]): spec_from_dict({"family": leaf.family, **r}) for r in self.node_leaf_priors}
        node_g = {tuple(r["address"]): r["g"] for r in self.node_split_probs}
        return MetaTreeModel(shape, assignment, self.split_prob, leaf, node_g, node_leaf)

    def check_engine(self, model):
        if self.engine not in ENGINES:
            raise UsageError(f"unknown engine {self.engine!r}; expected one of {', '.join(ENGINES)}")
        if self.engine == "lazy" and not model.shared_leaf_prior:
            raise UsageError("engine 'lazy' requires one leaf prior shared by all nodes (no node_leaf_priors)")
        if self.engine != "lazy" and not model.bounded:
            raise UsageError(f"engine {self.engine!r} requires a bounded max_depth")


def _config_from_args(args):
    cfg = RunConfig.load(args.config) if getattr(args, "config", None) else RunConfig()
    overrides = {
        "arity": getattr(args, "arity", None),
        "n_features": getattr(args, "features", None),
        "engine": getattr(args, "engine", None),
        "seed": getattr(args, "seed", None),
        "depth_cap": getattr(args, "depth_cap", None),
    }
    for k, v in overrides.items():
        if v is not None:
            setattr(cfg, k, v)
    if getattr(args, "unbounded", False):
        cfg.max_depth = None
    elif getattr(args, "max_depth", None) is not None:
        cfg.max_depth = args.max_depth
    if getattr(args, "assignment", None):
        cfg.feature_assignment = _int_list(args.assignment)
    if getattr(args, "split_prob", None):
        gs = [float(v) for v in args.split_prob.split(",")]
        cfg.split_prob = gs[0] if len(gs) == 1 else gs
    if getattr(args, "alpha", None) is not None:
        cfg.leaf = {**cfg.leaf, "alpha": args.alpha}
    if getattr(args, "beta", None) is not None:
        cfg.leaf = {**cfg.leaf, "beta": args.beta}
    if getattr(args, "zero_based", False):
        cfg.zero_based = True
    return cfg


def _int_list(s):
    try:
        return [int(v) for v in s.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"expected a comma-separated list of integers, got {s!r}") from None


# -- CSV --------------------------------------------------------------------------


def read_csv(path, require_y=True):
    """Read ``x1..xK[,y]`` integer columns. Returns ``(n_features, X, y)``."""
    try:
        f = open(path, newline="")
    except OSError as exc:
        raise UsageError(f"cannot open {path}: {exc.strerror}") from None
    with f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None:
            raise UsageError(f"{path}: missing header row")
        header = [h.strip() for h in header]
        has_y = bool(header) and header[-1] == "y"
        if require_y and not has_y:
            raise UsageError(f"{path}: last header column must be 'y', got {header[-1]!r}")
        xcols = header[:-1] if has_y else header
        expected = [f"x{j}" for j in range(1, len(xcols) + 1)]
        if not xcols or xcols != expected:
            raise UsageError(f"{path}: header must be {','.join(expected or ['x1'])}{',y' if has_y else ''}")
        X, y = [], []
        for line_no, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(header):
                raise UsageError(f"{path}: line {line_no} has {len(rec)} fields, expected {len(header)}")
            vals = []
            for name, cell in zip(header, rec):
                try:
                    vals.append(int(cell))
                except ValueError:
                    raise UsageError(f"{path}: line {line_no}, column {name}: {cell!r} is not an integer") from None
            X.append(vals[: len(xcols)])
            if has_y:
                y.append(vals[-1])
    X = np.array(X, dtype=np.int64).reshape(len(X), len(xcols))
    return len(xcols), X, (np.array(y, dtype=np.int64) if has_y else None)


def _batch(model, path, X, y, zero_based):
    try:
        return DataBatch.from_arrays(model, X, y, zero_based=zero_based)
    except MetaTreeError as exc:
        where = ""
        if getattr(exc, "row", None) is not None:
            where = f" (CSV line {exc.row + 2}"
            if exc.column is not None:
                where += f", column {'x%d' % (exc.column + 1)}"
            where += ")"
        raise UsageError(f"{path}: {exc}{where}") from None


def _load_data(cfg, path):
    k, X, y = read_csv(path)
    if cfg.n_features is None:
        cfg.n_features = k
    elif cfg.n_features != k:
        raise UsageError(f"{path}: has {k} feature columns but the configuration says {cfg.n_features}")
    model = cfg.build_model()
    return model, _batch(model, path, X, y, cfg.zero_based)


# -- commands ---------------------------------------------------------------------


def cmd_fit(args):
    cfg = _config_from_args(args)
    model, batch = _load_data(cfg, args.csv)
    cfg.check_engine(model)
    kwargs = {"depth_cap": cfg.depth_cap} if cfg.engine == "lazy" else {}
    report = fit(model, batch, engine=cfg.engine, **kwargs)
    if args.out:
        model.save(args.out)
    out = {
        "engine": report.engine,
        "n": report.n_samples,
        "nodes_visited": report.nodes_visited,
        "log_marginal_likelihood": report.log_marginal_likelihood,
        "wall_time_ms": report.wall_time_ms,
    }
    text = json.dumps(out)
    if args.report:
        with open(args.report, "w") as f:
            f.write(text + "\n")
    print(text)
    return EXIT_OK


def _load_model(path):
    try:
        return MetaTreeModel.load(path)
    except OSError as exc:
        raise UsageError(f"cannot read model {path}: {exc.strerror}") from None
    except (json.JSONDecodeError, ValueError) as exc:
        raise UsageError(f"{path}: not a valid model document: {exc}") from None


def cmd_predict(args):
    model = _load_model(args.model)
    k, X, _ = read_csv(args.csv, require_y=False)
    if k != model.shape.n_features:
        raise UsageError(f"{args.csv}: has {k} feature columns but the model expects {model.shape.n_features}")
    try:
        X = check_features(X, model.shape.arity, k, zero_based=args.zero_based)
    except MetaTreeError as exc:
        raise UsageError(f"{args.csv}: {exc}; model arity is {model.shape.arity}") from None
    out = open(args.out, "w") if args.out else sys.stdout
    try:
        for i, x in enumerate(X.tolist()):
            out.write(json.dumps({"row": i, "p_y1": predict(model, x)}) + "\n")
    finally:
        if args.out:
            out.close()
    return EXIT_OK


def _query_points(model, batch, limit=256):
    M, K = model.shape.arity, model.shape.n_features
    if M**K <= limit:
        return [list(x) for x in itertools.product(range(1, M + 1), repeat=K)]
    return batch.X.tolist()


def _inner_addresses(model):
    return [a for a in model.iter_addresses() if not model.is_max_depth(a)]


def verify(model, batch, candidates, tol=1e-9, cap=DEFAULT_CAP):
    """Compare fitted ``candidates`` (name -> model) with the oracle.

    ``model`` supplies the priors. Returns a JSON-ready report.
    """
    exact = exact_posterior(model, batch, cap=cap)
    # Posterior split probability implied by the enumeration:
    # P(s is inner) / P(s is in the tree).
    present, inner = {}, {}
    for t, p in zip(exact.subtrees, exact.probs):
        for a in t.nodes:
            present[a] = present.get(a, 0.0) + p
        for a in t.inner():
            inner[a] = inner.get(a, 0.0) + p
    oracle_g = {a: inner.get(a, 0.0) / present[a] for a in _inner_addresses(model) if present.get(a, 0.0) > 1e-200}
    queries = _query_points(model, batch)
    oracle_pred = [exact_predictive(model, batch, None, x, cap=cap) for x in queries]

    results = {}
    for name, m in candidates.items():
        d_g = max((abs(m.g_posterior_at(a) - g) for a, g in oracle_g.items()), default=0.0)
        d_post = max(abs(m.posterior_prob(t) - p) for t, p in zip(exact.subtrees, exact.probs))
        d_lml = abs(m.log_evidence - exact.log_evidence)
        d_pred = max((abs(predict(m, x) - p) for x, p in zip(queries, oracle_pred)), default=0.0)
        worst = max(d_g, d_post, d_lml, d_pred)
        results[name] = {
            "max_abs_g": d_g,
            "max_abs_subtree_posterior": d_post,
            "abs_log_marginal_likelihood": d_lml,
            "max_abs_predictive": d_pred,
            "pass": bool(worst <= tol) and math.isfinite(worst),
        }
    return {
        "n": len(batch),
        "n_subtrees": len(exact.subtrees),
        "oracle_log_marginal_likelihood": exact.log_evidence,
        "tolerance": tol,
        "engines": results,
        "pass": all(r["pass"] for r in results.values()),
    }


def cmd_verify(args):
    if args.model:
        model = _load_model(args.model)
        k, X, y = read_csv(args.csv)
        if k != model.shape.n_features:
            raise UsageError(f"{args.csv}: has {k} feature columns but the model expects {model.shape.n_features}")
        batch = _batch(model, args.csv, X, y, args.zero_based)
    else:
        cfg = _config_from_args(args)
        model, batch = _load_data(cfg, args.csv)
    if not model.bounded:
        raise UsageError("verify needs a bounded max_depth")
    prior = model.copy()
    prior.reset()
    candidates = {}
    for engine in ENGINES:
        if engine == "lazy" and not prior.shared_leaf_prior:
            continue
        m = prior.copy()
        fit(m, batch, engine=engine)
        candidates[engine] = m
    if args.model:
        candidates["model"] = model
    try:
        report = verify(prior, batch, candidates, tol=args.tol)
    except ResourceLimitError as exc:
        raise UsageError(str(exc)) from None
    print(json.dumps(report, indent=1))
    return EXIT_OK if report["pass"] else EXIT_VERIFY_FAILED


def cmd_bench(args):
    cfg = _config_from_args(args)
    if args.config is None and args.features is None and cfg.n_features is None:
        cfg.n_features = 5
    data = None
    if args.data:
        k, X, y = read_csv(args.data)
        if cfg.n_features is None:
            cfg.n_features = k
        model = cfg.build_model()
        data = _batch(model, args.data, X, y, cfg.zero_based)
    model = cfg.build_model()
    engines = args.engines.split(",") if args.engines else [e for e in ENGINES if model.shared_leaf_prior or e != "lazy"]
    for e in engines:
        cfg.engine = e
        cfg.check_engine(model)
    sizes = _int_list(args.sizes) if args.sizes else list(bench_mod.DEFAULT_SIZES)
    reps = args.reps if args.reps is not None else bench_mod.DEFAULT_REPS
    if reps < 1 or any(n < 0 for n in sizes):
        raise UsageError("--reps must be >= 1 and sizes non-negative")
    try:
        rows = bench_mod.run(cfg.build_model, engines, sizes, reps, seed=cfg.seed, data=data)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    bench_mod.write_csv(rows, args.out)
    print(bench_mod.format_table(bench_mod.summarize(rows)))
    print(f"wrote {len(rows)} rows to {args.out}")
    return EXIT_OK


# -- argument parsing --------------------------------------------------------------


def _add_model_flags(p):
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--arity", type=int, help="categories per feature / children per node (M)")
    p.add_argument("--features", type=int, help="number of features (K); defaults to the CSV header")
    p.add_argument("--max-depth", type=int, help="depth of the representative tree (D_max)")
    p.add_argument("--unbounded", action="store_true", help="no maximum depth (lazy engine only)")
    p.add_argument("--assignment", help="comma-separated 1-based feature index per depth")
    p.add_argument("--split-prob", help="prior split probability, or comma-separated per depth")
    p.add_argument("--alpha", type=float, help="Beta prior alpha")
    p.add_argument("--beta", type=float, help="Beta prior beta")
    p.add_argument("--depth-cap", type=int, help="lazy engine recursion limit")
    p.add_argument("--seed", type=int)
    p.add_argument("--zero-based", action="store_true", help="feature values are 0..M-1")


def build_parser():
    parser = argparse.ArgumentParser(prog="metatree", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a model to a CSV file")
    p.add_argument("csv")
    _add_model_flags(p)
    p.add_argument("--engine", choices=ENGINES)
    p.add_argument("--out", help="write the fitted model JSON here")
    p.add_argument("--report", help="also write the fit report JSON here")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="predict P(y=1) for each CSV row")
    p.add_argument("csv")
    p.add_argument("--model", required=True)
    p.add_argument("--zero-based", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("verify", help="check every engine against brute-force enumeration")
    p.add_argument("csv")
    _add_model_flags(p)
    p.add_argument("--model", help="also check this fitted model file (its priors are used)")
    p.add_argument("--tol", type=float, default=1e-9)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("bench", help="time the engines across sample sizes")
    _add_model_flags(p)
    p.add_argument("--engines", help="comma-separated subset of " + ",".join(ENGINES))
    p.add_argument("--sizes", help="comma-separated sample sizes (default 50,100,200)")
    p.add_argument("--reps", type=int, help="repetitions per size (default 100)")
    p.add_argument("--data", help="CSV to benchmark on instead of synthetic data")
    p.add_argument("--out", default="bench_results.csv", help="per-run CSV output")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, MetaTreeError, ValueError) as exc:
        print(f"metatree {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
