"""Timing harness comparing the update engines on synthetic data.

Synthetic data follows the model itself: a tree is drawn from the split
prior, each of its leaves draws P(y=1) from the leaf prior, every ``x`` is
uniform over ``{1..M}^K`` and ``y`` is Bernoulli with the probability of the
leaf ``x`` falls in.
"""

import csv
import gc
import statistics
import time

import numpy as np

from .inference import fit
from .validation import DataBatch

DEFAULT_SIZES = (50, 100, 200)
DEFAULT_REPS = 100
FIELDS = ("engine", "n", "rep", "wall_time_ms", "nodes_visited")


def sample_tree(model, rng):
    """Draw a pruned subtree from the prior; returns ``{leaf address: theta}``."""
    leaves = {}
    stack = [()]
    while stack:
        a = stack.pop()
        if rng.random() < model.g_prior_at(a):
            stack.extend(a + (m,) for m in range(model.shape.arity, 0, -1))
        else:
            spec = model.leaf_prior_at(a)
            leaves[a] = rng.beta(spec.alpha, spec.beta)
    return leaves


def sample_data(model, n, rng, leaves=None):
    if leaves is None:
        leaves = sample_tree(model, rng)
    X = rng.integers(1, model.shape.arity + 1, size=(n, model.shape.n_features))
    y = np.empty(n, dtype=np.int64)
    for i, x in enumerate(X.tolist()):
        a = ()
        while a not in leaves:
            a = a + (x[model.feature_at(a) - 1],)
        y[i] = rng.random() < leaves[a]
    return DataBatch(X.astype(np.int64), y)


def _timed_fit(make_model, batch, engine):
    model = make_model()
    gc_was_enabled = gc.isenabled()
    gc.disable()
    try:
        t0 = time.perf_counter()
        report = fit(model, batch, engine=engine)
        elapsed = (time.perf_counter() - t0) * 1e3
    finally:
        if gc_was_enabled:
            gc.enable()
    return elapsed, report


def run(make_model, engines, sizes=DEFAULT_SIZES, reps=DEFAULT_REPS, seed=0, data=None):
    """Time every engine on every size, ``reps`` times each.

    ``make_model`` returns a fresh prior model. With ``data`` (a DataBatch)
    the first ``n`` rows are used instead of synthetic samples. Only the
    engine call is timed. Sizes are interleaved within each repetition so
    that drift in machine load affects all sizes alike. Returns a list of row
    dicts with keys ``FIELDS``.
    """
    rng = np.random.default_rng(seed)
    for n in sizes:
        if data is not None and len(data) < n:
            raise ValueError(f"benchmark data has {len(data)} rows, fewer than n={n}")
    if sizes:
        warm = sample_data(make_model(), max(sizes), np.random.default_rng(seed)) if data is None else data
        for engine in engines:
            _timed_fit(make_model, warm, engine)
    rows = []
    for rep in range(reps):
        for n in sizes:
            if data is None:
                batch = sample_data(make_model(), n, rng)
            else:
                batch = DataBatch(data.X[:n], data.y[:n])
            for engine in engines:
                elapsed, report = _timed_fit(make_model, batch, engine)
                rows.append(
                    {"engine": engine, "n": n, "rep": rep, "wall_time_ms": elapsed, "nodes_visited": report.nodes_visited}
                )
    return rows


def summarize(rows):
    groups = {}
    for r in rows:
        groups.setdefault((r["engine"], r["n"]), []).append(r)
    out = []
    for (engine, n), rs in groups.items():
        t = [r["wall_time_ms"] for r in rs]
        visited = sorted({r["nodes_visited"] for r in rs})
        out.append(
            {
                "engine": engine,
                "n": n,
                "mean_ms": statistics.fmean(t),
                "std_ms": statistics.stdev(t) if len(t) > 1 else 0.0,
                "nodes_visited_min": visited[0],
                "nodes_visited_max": visited[-1],
            }
        )
    return out


def time_ratio(summary, engine, n_hi, n_lo):
    mean = {(s["engine"], s["n"]): s["mean_ms"] for s in summary}
    return mean[engine, n_hi] / mean[engine, n_lo]


def format_table(summary):
    sizes = sorted({s["n"] for s in summary})
    engines = list(dict.fromkeys(s["engine"] for s in summary))
    cell = {(s["engine"], s["n"]): s for s in summary}
    lines = ["CPU time (msec), mean +- std", "engine     " + "".join(f"{'n=' + str(n):>20}" for n in sizes)]
    for e in engines:
        parts = [f"{cell[e, n]['mean_ms']:9.3f} +- {cell[e, n]['std_ms']:6.3f}" for n in sizes]
        lines.append(f"{e:<11}" + "".join(f"{p:>20}" for p in parts))
    lines.append("nodes visited (min..max)")
    for e in engines:
        parts = [f"{cell[e, n]['nodes_visited_min']}..{cell[e, n]['nodes_visited_max']}" for n in sizes]
        lines.append(f"{e:<11}" + "".join(f"{p:>20}" for p in parts))
    return "\n".join(lines)


def write_csv(rows, path):
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=FIELDS)
        w.writeheader()
        w.writerows(rows)
