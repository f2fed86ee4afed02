"""Command-line entry point.

Every subcommand builds a request body, answers it in-process or, with
``--server URL``, posts it to a running service; either way the output is
written locally.  Exit status: 0 when every tuned field is feasible, 3 when
at least one is not (the report is still written), 1 on any other failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from typing import Any, Optional, Sequence, TypeVar

from pydantic import BaseModel, ValidationError

from .compressor import CompressorError
from .io import emit_report, emit_sweep, merge_config, parse_param, parse_shape, read_config_file, write_report
from .model import ContractError
from .service import handlers
from .service.schemas import (
    CompressRequest,
    CompressResponse,
    DecompressRequest,
    DecompressResponse,
    MetricsRequest,
    MetricsResponse,
    SweepRequest,
    SweepResponse,
    TuneRequest,
    TuneResponse,
)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INFEASIBLE = 3

log = logging.getLogger("ratiotune")
R = TypeVar("R", bound=BaseModel)


class RemoteError(RuntimeError):
    pass


def _call(server: Optional[str], route: str, req: BaseModel, local, response: type[R]) -> R:
    if server is None:
        return local(req)
    import httpx

    url = server.rstrip("/") + route
    try:
        resp = httpx.post(url, content=req.model_dump_json(), headers={"content-type": "application/json"},
                          timeout=None)
    except httpx.HTTPError as exc:
        raise RemoteError(f"{url}: {exc}") from exc
    if resp.status_code != 200:
        try:
            detail = resp.json().get("detail", resp.text)
        except ValueError:
            detail = resp.text
        raise RemoteError(f"{url}: HTTP {resp.status_code}: {detail}")
    return response.model_validate_json(resp.text)


def _params(items: Optional[Sequence[str]]) -> Optional[dict[str, Any]]:
    if not items:
        return None
    return dict(parse_param(p) for p in items)


# -- subcommands ----------------------------------------------------------------


def cmd_tune(args: argparse.Namespace) -> int:
    file_values = read_config_file(args.config) if args.config else {}
    flags = {
        "input": args.input,
        "shape": parse_shape(args.shape) if args.shape else None,
        "dtype": args.dtype,
        "codec": args.codec,
        "codec_params": _params(args.param),
        "target": args.target,
        "epsilon": args.epsilon,
        "max_bound": args.max_bound,
        "regions": args.regions,
        "overlap": args.overlap,
        "max_iters": args.max_iters,
        "seed": args.seed,
        "pool": args.pool,
        "report": args.report,
        "format": args.format,
        "trace": True if args.trace else None,
        "deterministic": True if args.deterministic else None,
    }
    cfg = merge_config(file_values, flags)
    res = _call(args.server, "/tune", TuneRequest.from_config(cfg), handlers.tune, TuneResponse)
    rows = [r.to_row() for r in res.rows]
    traces = res.traces if cfg.format == "json" else None
    if cfg.report:
        emit_report(rows, cfg.report, cfg.format, traces)
    else:
        write_report(rows, sys.stdout, cfg.format, traces)
    for r in rows:
        if not r.feasible:
            log.warning("%s step %d: infeasible, closest ratio %.6g at bound %.6g%s", r.field, r.time_step,
                        r.rho_achieved, r.error_bound, f" ({r.error})" if r.error else "")
    return EXIT_OK if res.all_feasible else EXIT_INFEASIBLE


def cmd_sweep(args: argparse.Namespace) -> int:
    req = SweepRequest(input=args.input, shape=list(parse_shape(args.shape)), dtype=args.dtype, codec=args.codec,
                       codec_params=_params(args.param) or {}, lower=args.lower, upper=args.upper,
                       points=args.points, log=not args.linear)
    res = _call(args.server, "/sweep", req, handlers.sweep, SweepResponse)
    if args.output:
        emit_sweep(res.points, args.output)
    else:
        sys.stdout.write("error_bound,ratio\n")
        for b, r in res.points:
            sys.stdout.write(f"{b:.17g},{r:.17g}\n")
    return EXIT_OK


def cmd_metrics(args: argparse.Namespace) -> int:
    req = MetricsRequest(original=args.original, reconstructed=args.reconstructed,
                         shape=list(parse_shape(args.shape)), dtype=args.dtype)
    res = _call(args.server, "/metrics", req, handlers.metrics, MetricsResponse)
    print(res.model_dump_json(indent=1))
    return EXIT_OK


def cmd_compress(args: argparse.Namespace) -> int:
    req = CompressRequest(input=args.input, shape=list(parse_shape(args.shape)), dtype=args.dtype,
                          codec=args.codec, codec_params=_params(args.param) or {}, error_bound=args.error_bound,
                          output=args.output)
    res = _call(args.server, "/compress", req, handlers.compress, CompressResponse)
    print(res.model_dump_json())
    return EXIT_OK


def cmd_decompress(args: argparse.Namespace) -> int:
    req = DecompressRequest(input=args.input, output=args.output)
    res = _call(args.server, "/decompress", req, handlers.decompress, DecompressResponse)
    print(res.model_dump_json())
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    uvicorn.run("ratiotune.service.app:app", host=args.host, port=args.port, log_level=args.log_level)
    return EXIT_OK


# -- parser ---------------------------------------------------------------------


def _data_args(p: argparse.ArgumentParser, required: bool = True) -> None:
    p.add_argument("--shape", required=required, help="extents, slowest axis first, e.g. 100,500,500")
    p.add_argument("--dtype", default=None if not required else "f32", choices=["f32", "f64"])


def _codec_args(p: argparse.ArgumentParser, default: Optional[str] = "pq") -> None:
    p.add_argument("--codec", default=default, help="codec name (pq, pq-nodict, bt, identity, external:CMD)")
    p.add_argument("--param", action="append", metavar="NAME=VALUE", help="fixed codec parameter (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ratiotune", description="Find error bounds that hit a target compression ratio.")
    parser.add_argument("--server", metavar="URL", help="send the request to a running service instead")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("tune", help="tune every field and time step matching a pattern")
    p.add_argument("--config", help="file of 'key = value' lines; flags override it")
    p.add_argument("--input", help="file pattern with {step} and optionally {field}")
    _data_args(p, required=False)
    _codec_args(p, default=None)
    p.add_argument("--target", type=float, help="target compression ratio")
    p.add_argument("--epsilon", type=float, help="relative tolerance on the ratio")
    p.add_argument("--max-bound", type=float, help="largest error bound allowed (default: value range)")
    p.add_argument("--regions", type=int, help="number of search regions")
    p.add_argument("--overlap", type=float, help="fractional overlap between neighbouring regions")
    p.add_argument("--max-iters", type=int, help="evaluation budget per region")
    p.add_argument("--seed", type=int)
    p.add_argument("--pool", type=int, help="worker threads")
    p.add_argument("--report", help="output path (default: stdout)")
    p.add_argument("--format", choices=["csv", "json"])
    p.add_argument("--trace", action="store_true", help="embed search traces (JSON reports)")
    p.add_argument("--deterministic", action="store_true", help="write zero elapsed times")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("sweep", help="ratio at a grid of bounds, as CSV")
    p.add_argument("--input", required=True)
    _data_args(p)
    _codec_args(p)
    p.add_argument("--lower", type=float)
    p.add_argument("--upper", type=float)
    p.add_argument("--points", type=int, default=1000)
    p.add_argument("--linear", action="store_true", help="linear instead of log spacing")
    p.add_argument("--output")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("metrics", help="compare an original and a reconstructed raw file")
    p.add_argument("--original", required=True)
    p.add_argument("--reconstructed", required=True)
    _data_args(p)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("compress", help="compress a raw file at a fixed bound")
    p.add_argument("--input", required=True)
    _data_args(p)
    _codec_args(p)
    p.add_argument("--error-bound", type=float, required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_compress)

    p = sub.add_parser("decompress", help="restore a raw file written by compress")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_decompress)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--log-level", default="info")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ContractError, CompressorError, RemoteError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
