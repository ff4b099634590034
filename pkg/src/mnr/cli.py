"""Command-line interface.

Exit codes:
  0  success
  2  bad arguments, config, or input files
  3  runtime failure
  4  localization graph disconnected (use --largest-component to continue)
  5  regression impossible (fewer than 3 responses, degenerate or perfect fit)
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import os
import sys

import numpy as np

from . import __version__
from .errors import DegenerateRegressors, DisconnectedError, PerfectFit
from .geodesic import build_localization_graph, largest_component, shortest_path_matrix
from .harness import EXPERIMENTS, ConfigError, ExperimentConfig, default_config, run_experiment, write_atomic
from .rdpg import curve_hardy_weinberg, sample_rdpg_directed
from .regression import f_test, ols_fit, predict
from .spectral import ase_directed, ase_undirected
from .stats import RngStream
from .stress import minimize_raw_stress

log = logging.getLogger("mnr")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME, EXIT_DISCONNECTED, EXIT_REGRESSION = 0, 2, 3, 4, 5
SEED_ENV = "MNR_SEED"


class UsageError(Exception):
    pass


class Dataset:
    """Graph plus (possibly partial) responses, node ids 0..n-1."""

    def __init__(self, adjacency, responses, directed):
        self.adjacency = adjacency
        self.responses = responses
        self.directed = directed

    @property
    def n(self):
        return self.adjacency.shape[0]


# --- ingestion --------------------------------------------------------------


def _rows(path):
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc
    # a header is any first row whose first cell is not numeric
    if rows:
        try:
            float(rows[0][0])
        except ValueError:
            rows = rows[1:]
    return rows


def read_edges(path, n=None):
    pairs = []
    for k, row in enumerate(_rows(path)):
        if len(row) < 2:
            raise UsageError(f"{path}: line {k + 1} needs 'src,dst'")
        try:
            i, j = int(row[0]), int(row[1])
        except ValueError as exc:
            raise UsageError(f"{path}: non-integer node id on line {k + 1}") from exc
        if i < 0 or j < 0:
            raise UsageError(f"{path}: negative node id on line {k + 1}")
        pairs.append((i, j))
    size = max([max(p) for p in pairs], default=-1) + 1
    if n is not None:
        if n < size:
            raise UsageError(f"--n {n} is smaller than the largest node id + 1 ({size})")
        size = n
    A = np.zeros((size, size))
    for i, j in pairs:
        if i != j:
            A[i, j] = 1.0
    return A


def read_matrix(path):
    try:
        A = np.array([[float(c) for c in row] for row in _rows(path)])
    except ValueError as exc:
        raise UsageError(f"{path}: non-numeric matrix entry") from exc
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise UsageError(f"{path}: matrix must be square")
    if not np.all((A == 0) | (A == 1)):
        raise UsageError(f"{path}: matrix entries must be 0 or 1")
    np.fill_diagonal(A, 0.0)
    return A


def read_responses(path):
    out = {}
    for k, row in enumerate(_rows(path)):
        try:
            node = int(row[0])
        except ValueError as exc:
            raise UsageError(f"{path}: bad node id on line {k + 1}") from exc
        value = row[1].strip() if len(row) > 1 else ""
        if value == "" or value.lower() in ("na", "nan"):
            continue
        try:
            out[node] = float(value)
        except ValueError as exc:
            raise UsageError(f"{path}: bad response on line {k + 1}") from exc
    return out


def read_embedding(path):
    z = {}
    for k, row in enumerate(_rows(path)):
        try:
            z[int(row[0])] = float(row[1])
        except (ValueError, IndexError) as exc:
            raise UsageError(f"{path}: bad embedding row {k + 1}") from exc
    return z


def load_dataset(args):
    if args.edges:
        A = read_edges(args.edges, args.n)
    elif args.matrix:
        A = read_matrix(args.matrix)
    else:
        raise UsageError("one of --edges or --matrix is required")
    if not args.directed and not np.array_equal(A, A.T):
        if args.edges:
            A = np.maximum(A, A.T)
        else:
            raise UsageError("matrix is not symmetric; pass --directed")
    responses = read_responses(args.responses) if getattr(args, "responses", None) else {}
    bad = [k for k in responses if not 0 <= k < A.shape[0]]
    if bad:
        raise UsageError(f"response ids not in the graph: {sorted(bad)[:5]}")
    return Dataset(A, responses, args.directed)


# --- pipeline ---------------------------------------------------------------


def _parse_ids(text):
    if not text:
        return None
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise UsageError(f"bad id list {text!r}") from exc


def _node_order(ds, targets):
    labeled = sorted(ds.responses)
    if targets is None:
        targets = [i for i in range(ds.n) if i not in ds.responses]
    else:
        bad = [t for t in targets if not 0 <= t < ds.n]
        if bad:
            raise UsageError(f"target ids not in the graph: {bad[:5]}")
        targets = sorted(set(targets) - set(labeled))
    nodes = labeled + targets
    return nodes if nodes else list(range(ds.n))


def _spectral(ds, args):
    if ds.directed:
        return ase_directed(ds.adjacency, args.d_half)
    return ase_undirected(ds.adjacency, args.d)


def embed_nodes(ds, X_hat, nodes, lam, largest):
    """Raw-stress coordinates for ``nodes``; returns (kept nodes, z)."""
    g = build_localization_graph(X_hat, lam)
    try:
        D = shortest_path_matrix(g, nodes)
    except DisconnectedError:
        if not largest:
            raise
        keep = set(largest_component(g).tolist())
        dropped = [v for v in nodes if v not in keep]
        nodes = [v for v in nodes if v in keep]
        log.warning("restricting to the largest component; dropped %d node(s): %s", len(dropped), dropped[:10])
        D = shortest_path_matrix(g, nodes)
    return nodes, minimize_raw_stress(D).z


def _embedding_csv(nodes, z):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["node_id", "z"])
    for v, zv in zip(nodes, z):
        w.writerow([v, repr(float(zv))])
    return buf.getvalue()


def _blank(v):
    return "" if v is None else repr(float(v))


def regress(nodes, z, responses, level):
    """Fit responses on z over labeled nodes; returns (fit, test, per-node rows)."""
    labeled = [k for k, v in enumerate(nodes) if v in responses]
    if len(labeled) < 3:
        raise DegenerateRegressors(f"need at least 3 labeled nodes, got {len(labeled)}")
    z = np.asarray(z, dtype=float)
    zl = z[labeled]
    y = np.array([responses[nodes[k]] for k in labeled])
    fit = ols_fit(zl, y)
    test = f_test(y, fit.fitted, len(y), level)
    rows = []
    for k, v in enumerate(nodes):
        pred = float(predict(fit, z[k]))
        if v in responses:
            rows.append((v, z[k], responses[v], pred, None))
        else:
            rows.append((v, z[k], None, None, pred))
    return fit, test, rows


# --- commands ---------------------------------------------------------------


def cmd_simulate(args):
    try:
        if args.config:
            try:
                with open(args.config, encoding="utf-8") as fh:
                    cfg = ExperimentConfig.from_json(fh.read())
            except OSError as exc:
                raise ConfigError(f"cannot read config: {exc}") from exc
            if cfg.experiment_id != args.experiment:
                raise ConfigError(f"config is for {cfg.experiment_id}, not {args.experiment}")
        else:
            cfg = default_config(args.experiment, args.grid)
        changes = {}
        seed = args.seed if args.seed is not None else os.environ.get(SEED_ENV)
        if seed is not None:
            changes["master_seed"] = int(seed)
        if args.replicates is not None:
            changes["replicates"] = args.replicates
        if args.n_grid:
            changes["n_grid"] = [int(x) for x in args.n_grid.split(",")]
        if changes:
            cfg = cfg.replace(**changes)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    try:
        table = run_experiment(cfg, workers=args.workers)
    except Exception as exc:  # noqa: BLE001 - surfaced as exit code
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    for row in table.rows if cfg.experiment_id != "fig8" else []:
        print(" ".join(f"{c}={_fmt_cell(v)}" for c, v in zip(table.columns, row)))
    if cfg.experiment_id == "fig8":
        from .harness import fig8_medians

        print(" ".join(f"{k}={_fmt_cell(v)}" for k, v in fig8_medians(table).items()))
    if args.out:
        write_atomic(args.out, table.to_csv())
        if args.meta:
            import json

            write_atomic(args.out + ".meta.json", json.dumps(table.provenance, indent=2, sort_keys=True) + "\n")
    else:
        sys.stdout.write(table.to_csv())
    return EXIT_OK


def _fmt_cell(v):
    if isinstance(v, (int, np.integer)):
        return str(v)
    return f"{v:.6g}"


def cmd_apply(args):
    if args.embedding:
        # coordinates already computed; the graph is not needed
        responses = read_responses(args.responses)
        zmap = read_embedding(args.embedding)
        nodes = sorted(zmap, key=lambda v: (v not in responses, v))
        z = [zmap[v] for v in nodes]
    else:
        ds = load_dataset(args)
        responses = ds.responses
        nodes = _node_order(ds, _parse_ids(args.targets))
        nodes, z = embed_nodes(ds, _spectral(ds, args), nodes, args.lam, args.largest_component)
    fit, test, rows = regress(nodes, z, responses, args.level)
    print(f"fitted line: y = {fit.alpha_hat:.6g} + {fit.beta_hat:.6g} z")
    print(f"F = {test.f_stat:.6g}, df = ({test.df1}, {test.df2}), p-value = {test.p_value:.6g}")
    decision = "reject" if test.reject_at[args.level] else "do not reject"
    print(f"H0: slope = 0 at level {args.level}: {decision}")
    if args.out:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["node_id", "z", "response", "fitted", "predicted"])
        for v, zv, y, fitted, pred in rows:
            w.writerow([v, repr(float(zv)), _blank(y), _blank(fitted), _blank(pred)])
        write_atomic(args.out, buf.getvalue())
    if args.out_embedding:
        write_atomic(args.out_embedding, _embedding_csv(nodes, z))
    return EXIT_OK


def _sweep_path(path, lam):
    stem, ext = os.path.splitext(path)
    return f"{stem}_lambda{lam:g}{ext or '.csv'}"


def cmd_embed(args):
    ds = load_dataset(args)
    nodes = _node_order(ds, _parse_ids(args.targets))
    X_hat = _spectral(ds, args)
    if args.lambda_sweep:
        try:
            lams = [float(x) for x in args.lambda_sweep.split(",") if x.strip()]
        except ValueError as exc:
            raise UsageError(f"bad --lambda-sweep {args.lambda_sweep!r}") from exc
        outputs = []
        for lam in lams:
            kept, z = embed_nodes(ds, X_hat, nodes, lam, args.largest_component)
            outputs.append((_sweep_path(args.out, lam), _embedding_csv(kept, z)))
    else:
        kept, z = embed_nodes(ds, X_hat, nodes, args.lam, args.largest_component)
        outputs = [(args.out, _embedding_csv(kept, z))]
    for path, text in outputs:
        write_atomic(path, text)
    return EXIT_OK


def cmd_generate(args):
    """Synthetic directed graph with responses, shaped like the connectome example."""
    stream = RngStream(args.seed, (99,))
    curve = curve_hardy_weinberg()
    gen = stream.generator
    t = gen.random(args.n)
    X = curve.eval(t)
    A = sample_rdpg_directed(X, X, stream)
    if not args.directed:
        A = np.triu(A, 1)
        A = A + A.T
    y = args.alpha + args.beta * t + args.sigma * gen.standard_normal(args.n)
    n_lab = int(round(args.labeled_fraction * args.n))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["src", "dst"])
    for i, j in zip(*np.nonzero(A)):
        if args.directed or i < j:
            w.writerow([i, j])
    write_atomic(args.out_edges, buf.getvalue())
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["node_id", "response"])
    for i in range(args.n):
        w.writerow([i, repr(float(y[i])) if i < n_lab else ""])
    write_atomic(args.out_responses, buf.getvalue())
    if args.out_truth:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["node_id", "t"])
        for i in range(args.n):
            w.writerow([i, repr(float(t[i]))])
        write_atomic(args.out_truth, buf.getvalue())
    return EXIT_OK


# --- argument parsing -------------------------------------------------------


def _default_seed():
    value = os.environ.get(SEED_ENV)
    return int(value) if value else 0


def _dataset_args(p, need_responses):
    src = p.add_mutually_exclusive_group()
    src.add_argument("--edges", help="edge list CSV, one 0-based 'src,dst' per line")
    src.add_argument("--matrix", help="dense 0/1 adjacency matrix CSV")
    p.add_argument("--n", type=int, help="number of nodes (default: largest id + 1)")
    p.add_argument("--responses", required=need_responses, help="CSV of node_id,response")
    p.add_argument("--directed", action="store_true", help="treat the graph as directed")
    p.add_argument("--d-half", type=int, default=3, help="singular triplets per side (directed)")
    p.add_argument("--d", type=int, default=3, help="embedding dimension (undirected)")
    p.add_argument("--lambda", dest="lam", type=float, default=0.50, help="neighbourhood parameter")
    p.add_argument("--targets", help="comma-separated unlabeled node ids to embed (default: all)")
    p.add_argument("--largest-component", action="store_true",
                   help="on disconnection, keep only nodes in the largest component")


def build_parser():
    parser = argparse.ArgumentParser(prog="mnr", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a Monte Carlo protocol and write a CSV table")
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--config", help="JSON file with ExperimentConfig fields")
    p.add_argument("--grid", choices=("acceptance", "full"), default="acceptance",
                   help="n grid when no --config is given (full = complete published-scale grids)")
    p.add_argument("--seed", type=int, help=f"master seed (fallback: ${SEED_ENV})")
    p.add_argument("--replicates", type=int)
    p.add_argument("--n-grid", help="comma-separated node counts")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", help="output CSV (default: stdout)")
    p.add_argument("--meta", action="store_true", help="also write <out>.meta.json provenance")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("apply", help="embed, regress, and test a dataset")
    _dataset_args(p, need_responses=True)
    p.add_argument("--embedding", help="reuse a CSV written by 'embed' instead of a graph")
    p.add_argument("--level", type=float, default=0.01)
    p.add_argument("--out", help="per-node CSV (node_id,z,response,fitted,predicted)")
    p.add_argument("--out-embedding", help="also write the node_id,z CSV")
    p.set_defaults(func=cmd_apply)

    p = sub.add_parser("embed", help="write raw-stress coordinates only")
    _dataset_args(p, need_responses=False)
    p.add_argument("--lambda-sweep", help="comma-separated lambdas; one output file each")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("generate", help="write a synthetic dataset")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--directed", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--alpha", type=float, default=2.0)
    p.add_argument("--beta", type=float, default=5.0)
    p.add_argument("--sigma", type=float, default=0.1)
    p.add_argument("--labeled-fraction", type=float, default=1.0)
    p.add_argument("--out-edges", required=True)
    p.add_argument("--out-responses", required=True)
    p.add_argument("--out-truth")
    p.set_defaults(func=cmd_generate)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "generate" and args.seed is None:
        args.seed = _default_seed()
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DisconnectedError as exc:
        print(f"error: localization graph is disconnected ({exc}); "
              "try a larger --lambda or --largest-component", file=sys.stderr)
        return EXIT_DISCONNECTED
    except (DegenerateRegressors, PerfectFit) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_REGRESSION
    except Exception as exc:  # noqa: BLE001
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
