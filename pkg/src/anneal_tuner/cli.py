"""Command-line front end: ``anneal-tuner <command> [flags]``.

Every command is a thin wrapper over one library call. Artifacts go under
the output directory (``--out``, else ``$ANNEAL_TUNER_OUT``, else
``./anneal_out``) and are listed in its manifest. Exit codes: 0 success,
1 invalid input (error JSON on stderr), 2 internal failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import traceback
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import embedding as emb_mod
from . import pipeline
from .errors import RegionNotFoundError, ValidationError
from .estimator import (
    SCORE_COLUMNS,
    SpecSummary,
    elite_mean,
    elite_score_batched,
    greedy_rank,
    scores_to_csv,
)
from .ising import (
    Qubo,
    apply_gauge,
    dumps_instance,
    identity_gauge,
    normalize_dynamic_range,
    qubo_to_ising,
    random_gauge,
    read_instance,
    spins_to_binary,
    ungauge,
)
from .sampler import NoiseModel, SamplerConfig, sample
from .store import ResultStore, resolve_out_dir
from .topology import ChimeraSpec, build_chimera, dumps_graph, parse_chimera_shape, random_spin_glass, read_graph

READOUT_COLUMNS = ("batch", "read", "energy_device", "spins")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(f"{self.prog}: {message}")


def _path(text):
    return str(Path(text).resolve())


def _floats(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from e


def _ints(text):
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from e


def _fmt(x):
    return format(float(x), ".17g")


# -- shared flag groups --------------------------------------------------------


def _add_common(p):
    p.add_argument("--seed", type=int, default=0, help="master seed for all randomness")
    p.add_argument("--out", default=None, help="output directory (default $ANNEAL_TUNER_OUT or ./anneal_out)")
    p.add_argument("--threads", type=int, default=None, help="cap on worker threads; never changes results")


def _add_sampler(p, n_reads=1000, reads_type=int):
    d = SamplerConfig()
    p.add_argument("--n-reads", type=reads_type, default=n_reads)
    p.add_argument("--t-a", type=float, default=d.t_a, help="anneal time per read, microseconds")
    p.add_argument("--duty", type=float, default=d.max_duty, help="duty-time cap per programming, microseconds")
    p.add_argument("--sweeps", type=int, default=d.sweeps)
    p.add_argument("--beta-start", type=float, default=d.beta_start)
    p.add_argument("--beta-end", type=float, default=d.beta_end)
    p.add_argument("--schedule", choices=("geometric", "linear"), default=d.schedule)
    p.add_argument("--sigma-h", type=float, default=0.0)
    p.add_argument("--sigma-j", type=float, default=0.0)
    p.add_argument("--quant", type=float, default=0.0)
    p.add_argument("--noise-refresh", choices=("programming", "static"), default="programming")
    p.add_argument("--device-seed", type=int, default=0)


def _add_problem(p, graph_required=False, need_je=True):
    p.add_argument("--instance", type=_path, required=True)
    p.add_argument("--embedding", type=_path, default=None)
    p.add_argument("--graph", type=_path, default=None, required=graph_required)
    if need_je:
        p.add_argument("--J-E", dest="J_E", type=float, default=None, help="chain coupling (with --embedding)")


def _config(args, n_reads=None, seed=None):
    return SamplerConfig(
        n_reads=args.n_reads if n_reads is None else n_reads,
        t_a=args.t_a,
        max_duty=args.duty,
        sweeps=args.sweeps,
        beta_start=args.beta_start,
        beta_end=args.beta_end,
        schedule=args.schedule,
        seed=args.seed if seed is None else seed,
    )


def _noise(args):
    return NoiseModel(args.sigma_h, args.sigma_j, args.quant, args.noise_refresh, args.device_seed)


def _load_logical(args):
    inst = read_instance(args.instance)
    emb = emb_mod.read_embedding(args.embedding) if args.embedding else None
    graph = read_graph(args.graph) if args.graph else None
    return inst, emb, graph


def _scan_problem(args):
    """The object a scan programs: a direct Ising instance or an embedded one."""
    inst, emb, graph = _load_logical(args)
    if emb is None:
        if isinstance(inst, Qubo):
            inst = qubo_to_ising(inst)[0]
        return inst
    if graph is None or args.J_E is None:
        raise ValidationError("--embedding needs --graph and --J-E")
    return emb_mod.embed(inst, emb, graph, args.J_E)


# -- readouts ----------------------------------------------------------------


def readouts_csv(reads, spins) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(READOUT_COLUMNS)
    per_batch = np.zeros(reads.n_programmings, dtype=np.int64)
    for b, e, s in zip(reads.batch.tolist(), reads.energy_device.tolist(), spins):
        w.writerow((b, per_batch[b], _fmt(e), "".join("+" if v > 0 else "-" for v in s)))
        per_batch[b] += 1
    return buf.getvalue()


def load_readouts(path):
    """Return (batch ids, device energies, spins, sidecar metadata or {})."""
    path = Path(path)
    with path.open(newline="") as f:
        rows = list(csv.reader(f))
    if not rows or tuple(rows[0]) != READOUT_COLUMNS:
        raise ValidationError(f"{path}: expected header {','.join(READOUT_COLUMNS)}")
    body = rows[1:]
    if not body:
        raise ValidationError(f"{path}: no readouts")
    try:
        batch = np.array([int(r[0]) for r in body], dtype=np.int64)
        energy = np.array([float(r[2]) for r in body])
    except (ValueError, IndexError) as e:
        raise ValidationError(f"{path}: malformed readout row") from e
    widths = {len(r[3]) for r in body}
    if len(widths) != 1 or any(set(r[3]) - {"+", "-"} for r in body):
        raise ValidationError(f"{path}: spins must be equal-length strings of '+' and '-'")
    spins = np.array([[1 if c == "+" else -1 for c in r[3]] for r in body], dtype=np.int8).reshape(len(body), -1)
    side = path.with_suffix(".json")
    meta = json.loads(side.read_text()) if side.exists() else {}
    return batch, energy, spins, meta


def _readout_energies(path, args):
    batch, energy, spins, meta = load_readouts(path)
    if args.instance:
        inst = read_instance(args.instance)
        emb_path = args.embedding or meta.get("embedding")
        if emb_path:
            spins = emb_mod.majority_vote_decode(spins, emb_mod.read_embedding(emb_path), args.decode_seed)
        if spins.shape[1] != inst.n:
            raise ValidationError(f"{path}: spins have {spins.shape[1]} entries, instance has {inst.n}")
        energy = inst.energies(spins_to_binary(spins)) if isinstance(inst, Qubo) else inst.energies(spins)
    spec_id = str(meta.get("spec_id", Path(path).stem))
    batches = [energy[batch == b] for b in np.unique(batch)]
    return spec_id, energy, batches


def _collect(args):
    out = {}
    for path in args.readouts:
        sid, energy, batches = _readout_energies(path, args)
        if sid in out:
            raise ValidationError(f"duplicate spec id {sid!r}; readouts must come from distinct gauges")
        out[sid] = (energy, batches)
    return out


def _score(energy, batches, args):
    return elite_score_batched(batches, args.epsilon) if args.batched else elite_mean(energy, args.epsilon)


# -- commands ------------------------------------------------------------------


def cmd_generate(args, store, cfg):
    M, N, L = parse_chimera_shape(args.chimera)
    graph = build_chimera(ChimeraSpec(M, N, L, frozenset(args.broken)))
    p = random_spin_glass(graph, args.coupling_domain, args.field_domain, args.seed)
    return [
        store.write("instances", "generate", args.seed, ".instance.txt", dumps_instance(p), cfg),
        store.write("instances", "generate", args.seed, ".graph.txt", dumps_graph(graph), cfg),
    ]


def cmd_sample(args, store, cfg):
    inst, emb, graph = _load_logical(args)
    meta = {"instance": args.instance, "embedding": args.embedding, "J_E": None}
    if emb is not None:
        if graph is None or args.J_E is None:
            raise ValidationError("--embedding needs --graph and --J-E")
        device = emb_mod.embed(inst, emb, graph, args.J_E).hardware
        meta["J_E"] = args.J_E
    else:
        device = qubo_to_ising(inst)[0] if isinstance(inst, Qubo) else inst
        device = device if device.normalized else normalize_dynamic_range(device)[0]
    if args.gauge_seed is None:
        gauge, meta["spec_id"] = identity_gauge(device.n), "identity"
    else:
        gauge, meta["spec_id"] = random_gauge(device.n, args.gauge_seed), str(args.gauge_seed)
    config, noise = _config(args), _noise(args)
    reads = sample(apply_gauge(device, gauge), config, noise)
    meta.update(
        gauge_seed=args.gauge_seed,
        frame="problem",
        sampler=asdict(config),
        noise=asdict(noise),
        seeds=reads.seeds,
        n_programmings=reads.n_programmings,
    )
    text = readouts_csv(reads, ungauge(reads.spins, gauge))
    csv_path = store.write("readouts", "sample", args.seed, ".csv", text, cfg)
    side = csv_path.with_suffix(".json")
    store.write("readouts", "sample", args.seed, ".json", json_dumps(meta), cfg, path=side)
    return [csv_path, side]


def cmd_score(args, store, cfg):
    data = _collect(args)
    scores = {sid: _score(e, b, args) for sid, (e, b) in data.items()}
    return [store.write("scores", "score", args.seed, ".csv", scores_to_csv(scores), cfg)]


def cmd_rank(args, store, cfg):
    data = _collect(args)
    if args.method == "elite":
        text = scores_to_csv({sid: _score(e, b, args) for sid, (e, b) in data.items()})
    else:
        table = greedy_rank([SpecSummary.from_energies(sid, e) for sid, (e, _) in data.items()])
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SCORE_COLUMNS)
        for r, sid in enumerate(table.ids, start=1):
            e, batches = data[sid]
            w.writerow((sid, _fmt(e.min()), r, len(batches[0]), len(batches), "greedy"))
        text = buf.getvalue()
    return [store.write("ranks", "rank", args.seed, ".csv", text, cfg)]


def cmd_je_scan(args, store, cfg):
    inst, emb, graph = _load_logical(args)
    if emb is None or graph is None:
        raise ValidationError("je-scan needs --embedding and --graph")
    gauge = None if args.gauge_seed is None else random_gauge(graph.n_ids, args.gauge_seed)
    res = pipeline.je_scan(inst, emb, graph, args.candidates, gauge, args.n_reads, args.epsilon,
                           _config(args), _noise(args), args.seed)
    return [store.write("reports", "je-scan", args.seed, ".csv", res.to_csv(), cfg)]


def cmd_gauge_scan(args, store, cfg):
    res = pipeline.gauge_scan(_scan_problem(args), args.n_gauges, args.n_reads, args.epsilon, _config(args),
                              _noise(args), args.seed)
    return [store.write("scores", "gauge-scan", args.seed, ".csv", res.to_csv(), cfg)]


def cmd_tune(args, store, cfg):
    inst, emb, graph = _load_logical(args)
    budgets = pipeline.Budgets(args.scan_reads, args.total_reads, args.top_k, args.target_energy)
    rep = pipeline.iterative_tune(inst, emb, graph, args.candidates, args.n_gauges, budgets, args.epsilon,
                                  _config(args, n_reads=args.scan_reads), _noise(args), args.seed,
                                  args.second_scan, onset=args.onset)
    return [store.write("reports", "tune", args.seed, ".json", json_dumps(rep.to_dict()), cfg)]


def cmd_experiment(args, store, cfg):
    tab = pipeline.containment_experiment(
        _scan_problem(args), args.n_gauges, tuple(args.n_reads), tuple(args.epsilons), args.experiments,
        args.total_reads, _config(args, n_reads=args.n_reads[0]), _noise(args), args.seed, k=args.top_k,
    )
    return [store.write("reports", "experiment", args.seed, ".json", json_dumps(tab.to_dict()), cfg)]


def cmd_correlate(args, store, cfg):
    problem = _scan_problem(args)
    config, noise = _config(args), _noise(args)
    scan = pipeline.gauge_scan(problem, args.n_gauges, args.n_reads, args.epsilon, config, noise, args.seed)
    truth = pipeline.performance_summaries(problem, scan.gauges, args.total_reads, config, noise, args.seed)
    res = pipeline.correlate_positive_couplers(scan, greedy_rank(list(truth.values())))
    return [store.write("reports", "correlate", args.seed, ".csv", pipeline.correlation_csv(res), cfg)]


def json_dumps(obj) -> str:
    def clean(x):
        if isinstance(x, float) and not math.isfinite(x):
            return None
        if isinstance(x, dict):
            return {str(k): clean(v) for k, v in x.items()}
        if isinstance(x, (list, tuple)):
            return [clean(v) for v in x]
        if isinstance(x, np.generic):
            return clean(x.item())
        return x

    return json.dumps(clean(obj), indent=1, sort_keys=True) + "\n"


# -- parser --------------------------------------------------------------------


def build_parser():
    parser = _Parser(prog="anneal-tuner", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="Chimera graph plus a random spin-glass instance")
    p.add_argument("--chimera", required=True, help="shape MxNxL, e.g. 8x8x4")
    p.add_argument("--broken", type=_ints, default=[], help="comma-separated broken qubit ids")
    p.add_argument("--coupling-domain", type=_floats, default=[-1.0, 1.0], help="e.g. --coupling-domain=-1,1")
    p.add_argument("--field-domain", type=_floats, default=[0.0])
    _add_common(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("sample", help="sample one instance under one gauge")
    _add_problem(p)
    p.add_argument("--gauge-seed", type=int, default=None, help="random gauge seed (identity if omitted)")
    _add_sampler(p)
    _add_common(p)
    p.set_defaults(func=cmd_sample)

    for name, func, helptext in (("score", cmd_score, "elite-mean scores"), ("rank", cmd_rank, "rank specs")):
        p = sub.add_parser(name, help=f"{helptext} of readout files")
        p.add_argument("--readouts", type=_path, nargs="+", required=True)
        p.add_argument("--epsilon", type=float, default=2.0)
        p.add_argument("--batched", action="store_true", help="average per-batch elite means")
        p.add_argument("--instance", type=_path, default=None, help="re-evaluate spins on the clean instance")
        p.add_argument("--embedding", type=_path, default=None)
        p.add_argument("--decode-seed", type=int, default=0)
        if name == "rank":
            p.add_argument("--method", choices=("elite", "greedy"), default="elite")
        _add_common(p)
        p.set_defaults(func=func)

    p = sub.add_parser("je-scan", help="scan chain coupling candidates")
    _add_problem(p, need_je=False)
    p.add_argument("--candidates", type=_floats, default=list(pipeline.DEFAULT_JE_GRID))
    p.add_argument("--gauge-seed", type=int, default=None)
    p.add_argument("--epsilon", type=float, default=2.0)
    _add_sampler(p)
    _add_common(p)
    p.set_defaults(func=cmd_je_scan)

    p = sub.add_parser("gauge-scan", help="score random gauges")
    _add_problem(p)
    p.add_argument("--n-gauges", type=int, default=100)
    p.add_argument("--epsilon", type=float, default=2.0)
    _add_sampler(p)
    _add_common(p)
    p.set_defaults(func=cmd_gauge_scan)

    p = sub.add_parser("tune", help="iterative J_E and gauge tuning")
    _add_problem(p, graph_required=True, need_je=False)
    p.add_argument("--candidates", type=_floats, default=list(pipeline.DEFAULT_JE_GRID))
    p.add_argument("--n-gauges", type=int, default=100)
    p.add_argument("--scan-reads", type=int, default=1000)
    p.add_argument("--total-reads", type=int, default=100_000)
    p.add_argument("--top-k", type=int, default=5)
    p.add_argument("--target-energy", type=float, default=None)
    p.add_argument("--epsilon", type=float, default=2.0)
    p.add_argument("--second-scan", action="store_true")
    p.add_argument("--onset", type=float, default=0.95)
    _add_sampler(p)
    _add_common(p)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("experiment", help="top-k containment table")
    _add_problem(p)
    p.add_argument("--n-gauges", type=int, default=100)
    p.add_argument("--epsilons", type=_floats, default=[1.0, 2.0, 5.0, 10.0])
    p.add_argument("--experiments", type=int, default=50)
    p.add_argument("--total-reads", type=int, default=100_000)
    p.add_argument("--top-k", type=int, default=5)
    _add_sampler(p, n_reads=[1000], reads_type=_ints)
    _add_common(p)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("correlate", help="positive-coupler counts vs performance rank")
    _add_problem(p)
    p.add_argument("--n-gauges", type=int, default=100)
    p.add_argument("--epsilon", type=float, default=2.0)
    p.add_argument("--total-reads", type=int, default=100_000)
    _add_sampler(p)
    _add_common(p)
    p.set_defaults(func=cmd_correlate)
    return parser


def _config_of(args):
    skip = {"func", "out", "threads", "command"}
    return {"command": args.command, **{k: v for k, v in sorted(vars(args).items()) if k not in skip}}


def _replay_argv(parser, args):
    """Flags that reproduce ``args``, with file paths already absolute."""
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction)).choices[args.command]
    argv = [args.command]
    for action in sub._actions:
        if not action.option_strings or action.dest in ("help", "out", "threads"):
            continue
        value = getattr(args, action.dest, None)
        flag = action.option_strings[0]
        if isinstance(action, argparse._StoreTrueAction):
            if value:
                argv.append(flag)
        elif isinstance(value, list):
            if action.nargs == "+":
                argv += [flag, *map(str, value)]
            else:
                argv.append(f"{flag}={','.join(repr(v) if isinstance(v, float) else str(v) for v in value)}")
        elif value is not None:
            argv.append(f"{flag}={value!r}" if isinstance(value, float) else f"{flag}={value}")
    return argv


def _set_threads(n):
    if n is None:
        return
    if n < 1:
        raise ValidationError("--threads must be >= 1")
    import warnings

    import numba

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", numba.NumbaWarning)  # threading-layer probe noise
        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


def _fail(code, kind, message, command):
    sys.stderr.write(json.dumps({"error": kind, "message": message, "command": command}) + "\n")
    return code


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    command = argv[0] if argv else None
    try:
        args = parser.parse_args(argv)
        _set_threads(args.threads)
        store = ResultStore(resolve_out_dir(args.out))
        cfg = _config_of(args)
        cfg["replay"] = _replay_argv(parser, args)
        paths = args.func(args, store, cfg)
    except RegionNotFoundError as e:
        return _fail(1, "region-not-found", f"{e} (curve: {e.curve})", command)
    except ValidationError as e:
        return _fail(1, "validation", str(e), command)
    except (OSError, json.JSONDecodeError) as e:
        return _fail(1, "validation", f"{type(e).__name__}: {e}", command)
    except Exception as e:  # noqa: BLE001 - report anything else as internal
        traceback.print_exc(file=sys.stderr)
        return _fail(2, "internal", f"{type(e).__name__}: {e}", command)
    print(json.dumps({"artifacts": [str(p) for p in paths]}))
    return 0


def replay(entry: dict, out_dir) -> Path:
    """Re-run the command behind a manifest entry into ``out_dir``; return the matching new artifact."""
    fresh = ResultStore(out_dir)
    before = len(fresh.entries())
    code = main([*entry["config"]["replay"], f"--out={out_dir}"])
    if code:
        raise ValidationError(f"replay of {entry['path']} exited with {code}")
    new = [e for e in fresh.entries()[before:] if (e["kind"], e["suffix"]) == (entry["kind"], entry["suffix"])]
    return Path(out_dir) / new[0]["path"]


if __name__ == "__main__":
    sys.exit(main())
