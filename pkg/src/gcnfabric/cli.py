"""Command-line harness around the partition, routing, simulation and training pieces.

Every command is deterministic in ``--seed`` and stamps its CSV/JSON output
with the seed and a hash of the effective configuration.  Failures print a
JSON error object on stderr and exit with 1 (usage), 2 (bad data) or 3
(an internal invariant broke).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .gcn_dataflow import (
    ExecOrder,
    LayerSpec,
    Trace,
    TwoLayerGCN,
    estimate_costs,
    forward,
    normalize_adjacency,
    order_gaps,
    select_order,
)
from .graphprep import (
    BLOCK,
    MAX_NODES,
    CooMatrix,
    GroupConflict,
    OutOfRange,
    compress_stage,
    diagonal_schedule,
    generate_start_vectors,
    partition_subgraph,
)
from .hypercube import NUM_CORES
from .netsim import (
    CLOCK_HZ,
    LANES,
    MAC_COUNT,
    PerfInputs,
    aggregate_tiled,
    bandwidth_report,
    episode_seed,
    mac_cycles,
    perf_multi_core,
    perf_single_core,
)
from .router import (
    ReplayMismatch,
    RoutingDivergence,
    audit_table,
    generate_instructions,
    instructions_to_hex,
    route,
    route_vectors,
)
from .workload import (
    DEFAULT_FAN_OUTS,
    HIDDEN_DIM,
    gen_synthetic,
    load_edge_list,
    sample_neighbors,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INVARIANT = 0, 1, 2, 3
ORDER_CHOICES = ["auto"] + [o.value for o in ExecOrder]
# flags that name where output goes, not what is computed
_OUTPUT_KEYS = {"config", "out", "util_csv", "tables_dir", "instructions_dir", "jobs", "func", "command"}


class UsageError(Exception):
    pass


class InvariantViolation(RuntimeError):
    pass


@dataclass
class ExperimentConfig:
    command: str
    seed: int = 0
    clock_hz: float = CLOCK_HZ
    mac_count: int = MAC_COUNT
    lanes: int = LANES
    fan_outs: tuple[int, ...] = DEFAULT_FAN_OUTS
    hidden: int = HIDDEN_DIM
    params: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise UsageError(f"seed {self.seed} is not a 64-bit unsigned integer")
        if self.clock_hz <= 0 or self.mac_count <= 0 or self.lanes <= 0:
            raise UsageError("clock_hz, mac_count and lanes must be positive")

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "ExperimentConfig":
        d = vars(args)
        core = {k: d[k] for k in ("seed", "clock_hz", "mac_count", "lanes", "hidden") if k in d}
        if d.get("fan_outs") is not None:
            core["fan_outs"] = tuple(d["fan_outs"])
        params = {k: v for k, v in d.items() if k not in core and k not in _OUTPUT_KEYS and k != "fan_outs"}
        outputs = {k: d[k] for k in _OUTPUT_KEYS - {"func", "command", "jobs"} if d.get(k) is not None}
        return cls(d["command"], params=params, outputs=outputs, **core)

    def digest(self) -> str:
        d = asdict(self)
        d.pop("outputs")
        blob = json.dumps(d, sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def stamp(self) -> dict:
        return {"seed": self.seed, "config_hash": self.digest()}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected integers, got {text!r}") from None


def _add_graph_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("graph input (edge list, or a synthetic graph when --graph is omitted)")
    g.add_argument("--graph", help="edge list: one 'src dst [weight]' per line")
    g.add_argument("--undirected", action="store_true", help="mirror every edge")
    g.add_argument("--triangular", action="store_true", help="file stores one triangle of a symmetric matrix")
    g.add_argument("--model", choices=["uniform", "power-law"], default="uniform")
    g.add_argument("--nodes", type=int, default=1024)
    g.add_argument("--edges", type=int, default=8192)
    g.add_argument("--exponent", type=float, default=2.1)


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--config", help="JSON file of flag defaults (keys are flag names with underscores)")
    common.add_argument("--out", help="output file (default stdout)")
    common.add_argument("--clock-hz", type=float, default=CLOCK_HZ)

    parser = _Parser(prog="gcnfabric", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    subs = {}

    def add(name, func, help_):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.set_defaults(func=func)
        subs[name] = p
        return p

    p = add("partition", cmd_partition, "split a graph into 64x64 core blocks per 1024-node tile")
    _add_graph_args(p)

    p = add("compress", cmd_compress, "list Block Message headers per stage and group")
    _add_graph_args(p)

    p = add("route", cmd_route, "route explicit start vectors or every round of a graph")
    _add_graph_args(p)
    p.add_argument("--sources", type=_int_list, help="slot sources, -1 for idle")
    p.add_argument("--dests", type=_int_list, help="slot destinations, -1 for idle")
    p.add_argument("--tables-dir", help="write one routing table text file per episode")
    p.add_argument("--instructions-dir", help="write per-core instruction hex streams per episode")

    p = add("simulate", cmd_simulate, "aggregate random features over the simulated fabric")
    _add_graph_args(p)
    p.add_argument("--dim", type=int, default=16, help="feature width")
    p.add_argument("--integer", action="store_true", help="integer features (exact comparison)")
    p.add_argument("--lanes", type=int, default=LANES)
    p.add_argument("--util-csv", help="per-cycle link utilization CSV")

    p = add("bench-routing", cmd_bench_routing, "completion cycles of random fused start vectors")
    p.add_argument("--fuse", type=int, nargs="+", default=[1, 2, 3, 4], choices=[1, 2, 3, 4])
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--jobs", type=int, default=1)

    p = add("train-step", cmd_train_step, "one SGD step of a two-layer GCN on a sampled batch")
    _add_graph_args(p)
    p.set_defaults(model="power-law", nodes=4096, edges=40960)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--fan-outs", type=int, nargs="+", default=list(DEFAULT_FAN_OUTS))
    p.add_argument("--features", type=int, default=64, help="input feature width")
    p.add_argument("--hidden", type=int, default=HIDDEN_DIM)
    p.add_argument("--classes", type=int, default=8)
    p.add_argument("--order", choices=ORDER_CHOICES, default="auto")
    p.add_argument("--eta", type=float, default=0.05)
    p.add_argument("--mac-count", type=int, default=MAC_COUNT)
    p.add_argument("--lanes", type=int, default=LANES)
    p.add_argument("--no-fabric", action="store_true", help="skip routing the aggregations")
    p.add_argument("--util-csv", help="per-cycle link utilization CSV")

    p = add("estimate-order", cmd_estimate_order, "cost reports of all four execution orders")
    for name in ("b", "n", "n-bar", "d", "h", "e", "c"):
        p.add_argument(f"--{name}", type=int, required=True)
    return parser, subs


# --- helpers ---------------------------------------------------------------------------------

def _emit(args, cfg: ExperimentConfig, payload: dict) -> None:
    text = json.dumps({**cfg.stamp(), "command": cfg.command, **payload}, indent=2, default=_jsonable)
    _write(args.out, text + "\n")


def _write(path: str | None, text: str) -> None:
    if path:
        Path(path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _jsonable(x):
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, ExecOrder):
        return x.value
    raise TypeError(f"cannot serialize {type(x).__name__}")


def _graph(args) -> CooMatrix:
    if args.graph:
        return load_edge_list(args.graph, undirected=args.undirected, triangular=args.triangular)
    return gen_synthetic(args.model, args.nodes, args.edges, args.seed, args.exponent)


def _tiles(coo: CooMatrix) -> Iterator[tuple[int, int, CooMatrix]]:
    """Nonempty 1024x1024 tiles, row-tile major."""
    for ti, r0 in enumerate(range(0, max(coo.n_rows, 1), MAX_NODES)):
        for tj, c0 in enumerate(range(0, max(coo.n_cols, 1), MAX_NODES)):
            sel = (coo.row >= r0) & (coo.row < r0 + MAX_NODES) & (coo.col >= c0) & (coo.col < c0 + MAX_NODES)
            if sel.any():
                yield ti, tj, CooMatrix(coo.row[sel] - r0, coo.col[sel] - c0, coo.val[sel],
                                        min(MAX_NODES, coo.n_rows - r0), min(MAX_NODES, coo.n_cols - c0))


def _check_table(table, where: str) -> None:
    problems = audit_table(table)
    if problems:
        raise InvariantViolation(f"{where}: {len(problems)} routing problems, first {problems[0]}")


# --- commands --------------------------------------------------------------------------------

def cmd_partition(args, cfg):
    g = _graph(args)
    tiles = []
    for ti, tj, tile in _tiles(g):
        grid = partition_subgraph(tile)
        counts = [[grid.block(a, c).nnz for c in range(NUM_CORES)] for a in range(NUM_CORES)]
        tiles.append({"tile": [ti, tj], "nnz": tile.nnz, "block_nnz": counts})
    _emit(args, cfg, {"n_rows": g.n_rows, "n_cols": g.n_cols, "nnz": g.nnz,
                      "schedule": diagonal_schedule(), "tiles": tiles})


def cmd_compress(args, cfg):
    g = _graph(args)
    tiles = []
    total_n = 0
    for ti, tj, tile in _tiles(g):
        grid = partition_subgraph(tile)
        stages = []
        for stage in diagonal_schedule(grid):
            groups = compress_stage(grid, stage)
            stages.append([[list(m.header) for m in grp] for grp in groups])
            total_n += sum(m.count for grp in groups for m in grp)
        pairs = len({(r // BLOCK, c // BLOCK, r) for r, c in zip(tile.row.tolist(), tile.col.tolist())})
        tiles.append({"tile": [ti, tj], "stages": stages, "distinct_block_rows": pairs})
    expected = sum(t["distinct_block_rows"] for t in tiles)
    if total_n != expected:
        raise InvariantViolation(f"sum of N is {total_n}, expected {expected}")
    _emit(args, cfg, {"n_rows": g.n_rows, "n_cols": g.n_cols, "nnz": g.nnz, "sum_n": total_n, "tiles": tiles})


def _dump_episode(args, name: str, table) -> None:
    if args.tables_dir:
        d = Path(args.tables_dir)
        d.mkdir(parents=True, exist_ok=True)
        (d / f"{name}.txt").write_text(table.to_text(), encoding="utf-8")
    if args.instructions_dir:
        d = Path(args.instructions_dir) / name
        d.mkdir(parents=True, exist_ok=True)
        for core, stream in generate_instructions(table).items():
            (d / f"core_{core:02d}.hex").write_text(instructions_to_hex(stream), encoding="utf-8")


def cmd_route(args, cfg):
    if (args.sources is None) != (args.dests is None):
        raise UsageError("--sources and --dests go together")
    if args.sources is not None:
        table = route_vectors(args.sources, args.dests, episode_seed(args.seed, 0))
        _check_table(table, "explicit vector")
        _dump_episode(args, "explicit", table)
        _emit(args, cfg, {"cycles": table.cycles, "table": table.to_text().splitlines(),
                          "delivery_cycles": table.delivery_cycles()})
        return
    episodes = []
    for ti, tj, tile in _tiles(_graph(args)):
        grid = partition_subgraph(tile)
        for s, stage in enumerate(diagonal_schedule(grid)):
            for r, sv in enumerate(generate_start_vectors(compress_stage(grid, stage))):
                table = route(sv, episode_seed(episode_seed(args.seed, ti, tj), s, r))
                name = f"t{ti}_{tj}_s{s}_r{r}"
                _check_table(table, name)
                _dump_episode(args, name, table)
                episodes.append({"tile": [ti, tj], "stage": s, "round": r,
                                 "messages": len(table.active), "cycles": table.cycles})
    cycles = [e["cycles"] for e in episodes]
    _emit(args, cfg, {"episodes": episodes, "total_cycles": sum(cycles),
                      "mean_cycles": float(np.mean(cycles)) if cycles else 0.0})


def _random_features(rng: np.random.Generator, rows: int, dim: int, integer: bool) -> np.ndarray:
    if integer:
        return rng.integers(-8, 9, size=(rows, dim), dtype=np.int64)
    return rng.standard_normal((rows, dim))


def _verify_against_spmm(adj: CooMatrix, feats: np.ndarray, got: np.ndarray, what: str) -> float:
    want = adj.to_scipy() @ feats
    if np.issubdtype(got.dtype, np.integer) and np.issubdtype(want.dtype, np.integer):
        if not np.array_equal(got, want):
            raise InvariantViolation(f"{what}: fabric aggregation differs from direct SpMM")
        return 0.0
    scale = max(float(np.abs(want).max(initial=0.0)), 1e-300)
    err = float(np.abs(got - want).max(initial=0.0)) / scale
    if err > 1e-9:
        raise InvariantViolation(f"{what}: fabric aggregation off by {err:.3g} relative")
    return err


def cmd_simulate(args, cfg):
    g = _graph(args)
    if args.integer:
        g = CooMatrix(g.row, g.col, np.rint(g.val).astype(np.int64), g.n_rows, g.n_cols)
    rng = np.random.default_rng(episode_seed(args.seed, 1))
    feats = _random_features(rng, g.n_cols, args.dim, args.integer)
    run = aggregate_tiled(g, feats, episode_seed(args.seed, 2))
    err = _verify_against_spmm(g, feats, run.output, "simulate")
    total = run.total
    period = 1.0 / args.clock_hz
    if args.util_csv:
        _write_util_csv(args.util_csv, cfg, [("aggregate", total.link_utilization)])
    stats = json.loads(total.to_json())
    stats.pop("link_utilization")
    _emit(args, cfg, {"n_rows": g.n_rows, "n_cols": g.n_cols, "nnz": g.nnz, "dim": args.dim,
                      "episodes": run.tables, "matches_spmm": True, "max_relative_error": err,
                      "packets_per_row": math.ceil(args.dim / args.lanes),
                      "stats": stats, "bandwidth": asdict(bandwidth_report(total, period))})


def _write_util_csv(path: str, cfg: ExperimentConfig, series: Sequence[tuple[str, Sequence[float]]]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["seed", "config_hash", "series", "cycle", "link_utilization"])
    h = cfg.digest()
    for name, values in series:
        for t, u in enumerate(values):
            w.writerow([cfg.seed, h, name, t, f"{u:.6f}"])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def fuse_stimulus(fuse: int, rng: np.random.Generator) -> tuple[list[int], list[int]]:
    """``fuse`` groups of 16: sources a random permutation, destinations a
    random permutation with no slot sent to its own source."""
    srcs, dsts = [], []
    for _ in range(fuse):
        s = rng.permutation(NUM_CORES)
        while True:
            d = rng.permutation(NUM_CORES)
            if not np.any(d == s):
                break
        srcs.extend(s.tolist())
        dsts.extend(d.tolist())
    return srcs, dsts


def bench_trial(seed: int, fuse: int, trial: int) -> int:
    s, d = fuse_stimulus(fuse, np.random.default_rng([seed, fuse, trial]))
    table = route_vectors(s, d, episode_seed(seed, fuse, trial))
    _check_table(table, f"fuse {fuse} trial {trial}")
    return table.cycles


def _bench_chunk(job: tuple[int, int, range]) -> list[int]:
    seed, fuse, trials = job
    return [bench_trial(seed, fuse, t) for t in trials]


def cmd_bench_routing(args, cfg):
    if args.trials < 1:
        raise UsageError("--trials must be positive")
    results: dict[int, list[int]] = {}
    jobs = max(1, args.jobs)
    for fuse in args.fuse:
        if jobs == 1:
            results[fuse] = _bench_chunk((args.seed, fuse, range(args.trials)))
        else:
            step = -(-args.trials // jobs)
            chunks = [(args.seed, fuse, range(i, min(i + step, args.trials))) for i in range(0, args.trials, step)]
            with ProcessPoolExecutor(jobs) as pool:
                results[fuse] = [c for part in pool.map(_bench_chunk, chunks) for c in part]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["record", "seed", "config_hash", "fuse", "trial", "cycles"])
    h = cfg.digest()
    for fuse, cyc in results.items():
        for t, c in enumerate(cyc):
            w.writerow(["trial", args.seed, h, fuse, t, c])
    for fuse, cyc in results.items():
        w.writerow(["mean", args.seed, h, fuse, "", f"{np.mean(cyc):.6f}"])
    _write(args.out, buf.getvalue())


def _core_of(idx: np.ndarray) -> np.ndarray:
    return (idx % MAX_NODES) // BLOCK


def layer_perf(adj: CooMatrix, order: ExecOrder, d: int, h: int, msg_cycles: np.ndarray,
               mac_count: int, clock_hz: float) -> dict:
    """Per-core message/compute cycles and the resulting single/multi-core times."""
    rows = np.bincount(_core_of(np.arange(adj.n_rows)), minlength=NUM_CORES)
    inputs = np.bincount(_core_of(np.arange(adj.n_cols)), minlength=NUM_CORES)
    edges = np.bincount(_core_of(adj.row), minlength=NUM_CORES)
    per_core = []
    for c in range(NUM_CORES):
        if order.combine_first:
            comb, agg = inputs[c] * d * h, edges[c] * h
        else:
            comb, agg = rows[c] * d * h, edges[c] * d
        p = PerfInputs(int(msg_cycles[c]), mac_cycles(comb, mac_count), mac_cycles(agg, mac_count), mac_count, clock_hz)
        per_core.append(p)
    singles = [perf_single_core(p) for p in per_core]
    t_multi = perf_multi_core(singles)
    compute = [p.t_comb + p.t_agg for p in per_core]
    ctc = [cp / p.t_msg for cp, p in zip(compute, per_core) if p.t_msg > 0]
    return {
        "t_msg": [p.t_msg for p in per_core],
        "t_comb": [p.t_comb for p in per_core],
        "t_agg": [p.t_agg for p in per_core],
        "t_single": singles,
        "t_multi": t_multi,
        "t_multi_seconds": t_multi / clock_hz,
        "ctc_ratio_mean": float(np.mean(ctc)) if ctc else None,
        "mac_utilization": [cp / t_multi if t_multi else 0.0 for cp in compute],
    }


def cmd_train_step(args, cfg):
    if len(args.fan_outs) != 2:
        raise UsageError("train-step runs a two-layer model: give exactly two --fan-outs")
    if min(args.batch_size, args.features, args.hidden, args.classes) < 1:
        raise UsageError("batch size and dimensions must be positive")
    g = normalize_adjacency(_graph(args))
    rng = np.random.default_rng(episode_seed(args.seed, 3))
    if args.batch_size > g.n_rows:
        raise ValueError(f"batch of {args.batch_size} from a {g.n_rows}-node graph")
    batch = rng.choice(g.n_rows, args.batch_size, replace=False)
    X = rng.standard_normal((g.n_rows, args.features))
    y = rng.integers(0, args.classes, g.n_rows)
    wb = sample_neighbors(g, batch, args.fan_outs, episode_seed(args.seed, 4), X, y)
    specs = wb.layer_specs(args.hidden, args.classes)
    if args.order == "auto":
        orders = tuple(select_order(s) for s in specs)
    else:
        orders = (ExecOrder(args.order),) * 2
    A1, A2 = (a.to_scipy() for a in wb.adjs)
    model = TwoLayerGCN.init(args.features, args.hidden, args.classes, episode_seed(args.seed, 5))

    layers = []
    series = []
    inp = wb.features
    for k, (adj, order, spec) in enumerate(zip(wb.adjs, orders, specs)):
        W = (model.W1, model.W2)[k]
        entry = {"spec": asdict(spec), "order": order, "selected_by": args.order,
                 "costs": {o.value: estimate_costs(spec, o).as_dict() for o in ExecOrder}}
        if not args.no_fabric:
            feats = inp @ W if order.combine_first else inp
            run = aggregate_tiled(adj, feats, episode_seed(args.seed, 6, k))
            _verify_against_spmm(adj, feats, run.output, f"layer {k + 1}")
            packets = math.ceil(feats.shape[1] / args.lanes)
            entry["perf"] = layer_perf(adj, order, spec.d, spec.h, run.core_message_cycles * packets,
                                       args.mac_count, args.clock_hz)
            entry["routing_episodes"] = run.tables
            series.append((f"layer{k + 1}", run.total.link_utilization))
        act = "relu" if k == 0 else "identity"
        inp, _ = forward(order, adj.to_scipy(), inp, W, act)
        layers.append(entry)

    trace = Trace()
    loss_before = model.step(A1, A2, wb.features, wb.labels, args.eta, orders, trace)
    loss_after = model.loss(A1, A2, wb.features, wb.labels, orders)
    if not np.isfinite(loss_after):
        raise InvariantViolation("loss is not finite after the update")
    if series and args.util_csv:
        _write_util_csv(args.util_csv, cfg, series)
    _emit(args, cfg, {
        "batch_size": args.batch_size, "sampled_nodes": [len(v) for v in wb.nodes],
        "orders": [o.value for o in orders], "layers": layers,
        "loss_before": loss_before, "loss_after": loss_after,
        "trace_time_by_stage": trace.by_stage(), "transposed": trace.transposed_names,
    })


def cmd_estimate_order(args, cfg):
    spec = LayerSpec(args.b, args.n, args.n_bar, args.d, args.h, args.e, args.c)
    reports = {o.value: estimate_costs(spec, o).as_dict() for o in ExecOrder}
    _emit(args, cfg, {"spec": asdict(spec), "reports": reports,
                      "selected": select_order(spec).value, "gaps": order_gaps(spec)})


# --- entry point -----------------------------------------------------------------------------

_DATA_ERRORS = (ValueError, OSError, OutOfRange, GroupConflict, KeyError)
_INVARIANT_ERRORS = (InvariantViolation, RoutingDivergence, ReplayMismatch, AssertionError)


def _fail(code: int, exc: BaseException) -> int:
    sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc), "exit_code": code}) + "\n")
    return code


def _parse(argv: list[str]) -> argparse.Namespace:
    parser, subs = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            overrides = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ValueError(f"config {args.config}: {e}") from None
        if not isinstance(overrides, dict):
            raise UsageError("config file must hold a JSON object")
        sub = subs[args.command]
        known = {a.dest for a in sub._actions} - {"help", "config"}
        unknown = sorted(set(overrides) - known)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(unknown)}")
        sub.set_defaults(**overrides)
        args = parser.parse_args(argv)
    return args


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = _parse(argv)
        cfg = ExperimentConfig.from_args(args)
        args.func(args, cfg)
    except UsageError as e:
        return _fail(EXIT_USAGE, e)
    except _INVARIANT_ERRORS as e:
        return _fail(EXIT_INVARIANT, e)
    except _DATA_ERRORS as e:
        return _fail(EXIT_DATA, e)
    except Exception as e:  # anything else is a bug, not bad input
        return _fail(EXIT_INVARIANT, e)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
