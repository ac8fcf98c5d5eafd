"""Command-line interface: ``nmsteer {povm,detect,volume,bellscan}``.

Exit status: 0 success, 1 usage or configuration error, 2 validation failure.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from .errors import ConstructionFailedError, NMSteerError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
WORKERS_ENV = "NMSTEER_WORKERS"

log = logging.getLogger("nmsteer")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV)
    if raw is None:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    if n < 1:
        raise UsageError(f"{WORKERS_ENV} must be >= 1")
    return n


def _global_options(p, suppress: bool):
    def default(v):
        return argparse.SUPPRESS if suppress else v

    p.add_argument("--seed", type=int, default=default(0), help="base random seed (default 0)")
    p.add_argument("--workers", type=int, default=default(None),
                   help=f"worker processes (default ${WORKERS_ENV} or 1)")
    p.add_argument("--format", choices=("json", "csv", "text"), default=default(None),
                   help="output format (default depends on the command)")
    p.add_argument("--out", default=default(None), help="write the result here instead of stdout")
    p.add_argument("-v", "--verbose", action="store_true", default=default(False))


def _povm_args(p):
    p.add_argument("-d", type=int, help="Hilbert-space dimension")
    p.add_argument("-N", type=int, help="number of sub-POVMs")
    p.add_argument("-M", type=int, help="outcomes per sub-POVM")
    p.add_argument("-x", type=float, help="purity parameter")
    p.add_argument("--where", choices=("default", "mid", "max"),
                   help="pick x inside the admissible range instead of -x")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    _global_options(common, suppress=True)
    parser = _Parser(prog="nmsteer", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _global_options(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("povm", parents=[common], help="construct, validate or inspect (N,M)-POVMs")
    p.add_argument("action", choices=("construct", "validate", "spectrum"))
    p.add_argument("file", nargs="?", help="POVM JSON file (validate/spectrum)")
    _povm_args(p)

    p = sub.add_parser("detect", parents=[common], help="evaluate a steering detector on one state")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--state", help="named state: singlet, werner:w, bell-diag:t1,t2,t3, "
                                     "isotropic:d,v, mixed:dA,dB")
    src.add_argument("--state-file", help="state JSON file")
    p.add_argument("--detector", default="loo",
                   choices=("loo", "loo-swapped", "loo-rescaled", "povm", "das-npt", "ccnr"))
    p.add_argument("--povm-a", help="Alice's POVM as N,M,x (default GSIC)")
    p.add_argument("--povm-b", help="Bob's POVM as N,M,x (default GSIC)")
    p.add_argument("--restarts", type=int, default=20, help="random starts for loo-rescaled")
    p.add_argument("--mu", type=float, help="mixing parameter for das-npt (default 1/sqrt(3))")

    p = sub.add_parser("volume", parents=[common], help="estimate volume ratios of detected states")
    p.add_argument("action", nargs="?", choices=("estimate", "table"), default="estimate")
    p.add_argument("--da", type=int, default=2)
    p.add_argument("--db", type=int, default=2)
    p.add_argument("--detector", default="loo", choices=("loo", "loo-rescaled", "povm", "das-npt"))
    p.add_argument("-n", "--samples", type=int, default=10**5)
    p.add_argument("--chains", type=int, default=1, help="independent chains (part of the replay key)")
    p.add_argument("--burn-in", type=int)
    p.add_argument("--thinning", type=int)
    p.add_argument("--restarts", type=int, default=3, help="random starts per state for loo-rescaled")
    p.add_argument("--povm-a", help="Alice's POVM as N,M,x")
    p.add_argument("--povm-b", help="Bob's POVM as N,M,x")
    p.add_argument("--which", type=int, choices=(1, 2), help="table to reproduce")
    p.add_argument("--scale", type=int, default=10**5, help="samples per table entry")
    p.add_argument("--extended", action="store_true", help="include the slow table entries")

    p = sub.add_parser("bellscan", parents=[common], help="classify a grid of Bell-diagonal states")
    p.add_argument("--resolution", type=float, default=0.02)
    return parser


# helpers ---------------------------------------------------------------------


def _header(args, config: dict) -> dict:
    return {"tool": "nmsteer", "version": __version__, "command": args.command,
            "seed": args.seed, "config": config}


def _emit(args, text: str):
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n"


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _text_block(header: dict, body: dict) -> str:
    lines = [f"# {k}: {json.dumps(v, sort_keys=True, default=_jsonable)}" for k, v in header.items()]
    lines += [f"{k}: {v}" for k, v in body.items()]
    return "\n".join(lines) + "\n"


def _parse_params(spec, d):
    from .povm import NMParams
    from .volume import default_povm_params

    if spec is None:
        return default_povm_params(d)
    try:
        N, M, x = spec.split(",")
        return NMParams(d, int(N), int(M), float(x))
    except ValueError as exc:
        raise UsageError(f"POVM spec must be N,M,x: {exc}") from None


def _load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path} is not valid JSON: {exc}") from None


# commands ----------------------------------------------------------------------


def cmd_povm(args) -> int:
    from .povm import (
        NMParams,
        build_povm,
        expected_sts_spectrum,
        povm_from_dict,
        povm_to_dict,
        sts_spectrum,
        validate_povm,
    )

    fmt = args.format or ("json" if args.action == "construct" else "text")
    if args.file:
        doc = _load_json(args.file)
        try:
            povm = povm_from_dict(doc.get("povm", doc))
        except (KeyError, TypeError, ValueError) as exc:
            raise UsageError(f"malformed POVM file {args.file}: {exc}") from None
        params = povm.params
    else:
        if None in (args.d, args.N, args.M) or (args.x is None and args.where is None):
            raise UsageError("need -d, -N, -M and -x (or --where), or a POVM file")
        params = NMParams.at(args.d, args.N, args.M, args.where) if args.x is None \
            else NMParams(args.d, args.N, args.M, args.x)
        try:
            povm = build_povm(params, seed=args.seed)
        except ConstructionFailedError as exc:
            print(f"nmsteer: {exc}", file=sys.stderr)
            return EXIT_VALIDATION
    config = {"d": params.d, "N": params.N, "M": params.M, "x": params.x, "action": args.action,
              "file": args.file}
    header = _header(args, config)

    if args.action == "construct":
        body = povm_to_dict(povm)
        if fmt == "json":
            _emit(args, _json({"header": header, **body}))
        else:
            _emit(args, _text_block(header, {"params": body["params"], "gamma": povm.gamma,
                                             "S": np.asarray(povm.S).round(12).tolist()}))
        return EXIT_OK

    if args.action == "validate":
        rep = validate_povm(povm)
        body = {"params": config, **rep.as_dict()}
        _emit(args, _json({"header": header, **body}) if fmt == "json" else _text_block(header, body))
        return EXIT_OK if rep.passed else EXIT_VALIDATION

    spec = np.where(np.abs(sts_spectrum(povm)) < 1e-12, 0.0, sts_spectrum(povm))[::-1]
    expected = expected_sts_spectrum(params)[::-1]
    dev = float(np.max(np.abs(spec - expected)))
    body = {"spectrum": [round(float(v), 12) for v in spec],
            "expected": [round(float(v), 12) for v in expected], "max_deviation": dev}
    if fmt == "csv":
        _emit(args, "eigenvalue\n" + "".join(f"{v!r}\n" for v in body["spectrum"]))
    elif fmt == "json":
        _emit(args, _json({"header": header, **body}))
    else:
        _emit(args, _text_block(header, body))
    return EXIT_OK if dev < 1e-9 else EXIT_VALIDATION


def cmd_detect(args) -> int:
    from .das import DasConfig, ccnr_entanglement_check, das_steering_check
    from .povm import build_povm
    from .states import named_state, state_from_dict
    from .steering import (
        RescaleOptions,
        loo_steering_check,
        loo_steering_check_swapped,
        optimize_rescaled_steering,
        povm_steering_check,
    )

    if args.state_file:
        try:
            state = state_from_dict(_load_json(args.state_file))
        except NMSteerError as exc:
            raise UsageError(f"invalid state file {args.state_file}: {exc}") from None
    else:
        state = named_state(args.state).validate()
    det = args.detector
    config = {"state": args.state, "state_file": args.state_file, "detector": det,
              "dA": state.dA, "dB": state.dB}
    extra = {}
    if det == "loo":
        v = loo_steering_check(state)
    elif det == "loo-swapped":
        v = loo_steering_check_swapped(state)
    elif det == "loo-rescaled":
        config["restarts"] = args.restarts
        h, v = optimize_rescaled_steering(state, opts=RescaleOptions(restarts=args.restarts, seed=args.seed))
        extra["h"] = [float(x) for x in h]
    elif det == "povm":
        pa, pb = _parse_params(args.povm_a, state.dA), _parse_params(args.povm_b, state.dB)
        config["povm_a"] = [pa.N, pa.M, pa.x]
        config["povm_b"] = [pb.N, pb.M, pb.x]
        v = povm_steering_check(state, build_povm(pa, seed=args.seed), build_povm(pb, seed=args.seed + 1))
    elif det == "das-npt":
        cfg = DasConfig() if args.mu is None else DasConfig(args.mu)
        config["mu"] = cfg.mu
        v = das_steering_check(state, cfg)
    else:
        e = ccnr_entanglement_check(state)
        body = e.as_dict()
        _write_record(args, config, body)
        return EXIT_OK
    _write_record(args, config, {**v.as_dict(), **extra})
    return EXIT_OK


def _write_record(args, config, body):
    header = _header(args, config)
    fmt = args.format or "text"
    if fmt == "json":
        _emit(args, _json({"header": header, "result": body}))
    elif fmt == "csv":
        keys = [k for k, val in body.items() if not isinstance(val, (list, dict))]
        _emit(args, ",".join(keys) + "\n" + ",".join(str(body[k]) for k in keys) + "\n")
    else:
        _emit(args, _text_block(header, body))


def cmd_volume(args) -> int:
    from .volume import EstimationJob, estimate_ratio, format_report, reproduce_table, versions

    workers = args.workers
    if args.action == "table" or args.which is not None:
        if args.which is None:
            raise UsageError("volume table needs --which 1 or --which 2")
        config = {"which": args.which, "scale": args.scale, "chains": args.chains,
                  "extended": args.extended, "workers": workers}
        rows = reproduce_table(args.which, args.scale, seed=args.seed, chains=args.chains,
                               workers=workers, extended=args.extended)
        header = _header(args, config)
        fmt = args.format or "text"
        text = format_report(rows, fmt)
        if fmt == "json":
            text = json.dumps({"header": header}, sort_keys=True) + "\n" + text
        elif fmt == "text":
            text = "".join(f"# {k}: {json.dumps(v, sort_keys=True)}\n" for k, v in header.items()) + text
        _emit(args, text)
        return EXIT_OK if all(r.passed for r in rows) else EXIT_VALIDATION

    pa = _parse_params(args.povm_a, args.da) if args.detector == "povm" else None
    pb = _parse_params(args.povm_b, args.db) if args.detector == "povm" else None
    job = EstimationJob(args.da, args.db, args.detector, args.samples, seed=args.seed,
                        chains=args.chains, burn_in=args.burn_in, thinning=args.thinning,
                        povm_a=pa, povm_b=pb, rescale_restarts=args.restarts)
    est = estimate_ratio(job, workers)
    header = _header(args, job.as_dict())
    header["versions"] = versions()
    rec = est.record()
    fmt = args.format or "text"
    if args.out:
        # JSON-lines: header line, then one record per job
        with open(args.out, "w") as fh:
            fh.write(json.dumps({"header": header}, sort_keys=True) + "\n")
            fh.write(json.dumps(rec, sort_keys=True, default=_jsonable) + "\n")
    summary = {k: rec[k] for k in ("detector", "ratio", "stderr", "hits", "samples", "seed",
                                   "chains", "backend", "repairs", "wall_time")}
    if fmt == "json":
        out = json.dumps({"header": header}, sort_keys=True) + "\n" + json.dumps(rec, sort_keys=True) + "\n"
    elif fmt == "csv":
        out = ",".join(summary) + "\n" + ",".join(str(v) for v in summary.values()) + "\n"
    else:
        out = _text_block({k: header[k] for k in ("tool", "version", "command", "seed", "config")}, summary)
    if args.out:
        sys.stdout.write(_text_block({}, summary) if fmt == "text" else out)
    else:
        sys.stdout.write(out)
    return EXIT_OK


def cmd_bellscan(args) -> int:
    from .steering import bell_diagonal_scan, write_bellscan_csv

    t, labels, lhs, rhs = bell_diagonal_scan(args.resolution)
    header = _header(args, {"resolution": args.resolution})
    fmt = args.format or "csv"
    with (open(args.out, "w") if args.out else contextlib.nullcontext(sys.stdout)) as fh:
        if fmt == "json":
            rows = [{"t1": float(a), "t2": float(b), "t3": float(c), "class": str(k)}
                    for (a, b, c), k in zip(t, labels)]
            json.dump({"header": header, "rows": rows}, fh, sort_keys=True)
            fh.write("\n")
        elif fmt == "csv":
            write_bellscan_csv(fh, t, labels, [json.dumps(header, sort_keys=True)])
        else:
            counts = {k: int(np.sum(labels == k)) for k in ("outside", "detected", "undetected")}
            fh.write(_text_block(header, counts))
    return EXIT_OK


COMMANDS = {"povm": cmd_povm, "detect": cmd_detect, "volume": cmd_volume, "bellscan": cmd_bellscan}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.workers is None:
            args.workers = _default_workers()
        if args.workers < 1:
            raise UsageError("--workers must be >= 1")
        return COMMANDS[args.command](args)
    except (UsageError, NMSteerError) as exc:
        print(f"nmsteer: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
