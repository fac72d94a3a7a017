"""Command-line front end.

Every subcommand builds a request, sends it through the HTTP service,
and writes the response to disk.  By default the service runs
in-process over an ASGI transport, so no server is needed; pass
--server http://host:port to talk to a running one instead.

Exit codes: 0 success, 1 validation problem (bad flags, malformed
files), 2 numerical failure (non-convergence, singular matrices).  A
fit that does not converge still writes its JSON output before
exiting 2.
"""

from __future__ import annotations

import argparse
import asyncio
import csv
import io
import json
import sys
import time

import httpx

from . import __version__
from .report import RunManifest, dumps, sha256_file


class _ExitFailure(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on bad flags; the contract here is exit 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise _ExitFailure(1, f"{self.prog}: error: {message}")


def _read_text(path: str) -> str:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            return handle.read()
    except OSError as exc:
        raise _ExitFailure(1, f"cannot read {path}: {exc}")


def _load_json(path: str):
    """JSON from a file, or inline when the argument itself is JSON."""
    text = path if path.lstrip()[:1] in ("[", "{") else _read_text(path)
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise _ExitFailure(1, f"{path} is not valid JSON: {exc}")


def _load_matrix_csv(path: str) -> list:
    """Headerless numeric CSV as a list of rows."""
    rows = []
    for line_no, line in enumerate(_read_text(path).splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rows.append([float(cell) for cell in next(csv.reader([line]))])
        except (ValueError, StopIteration):
            raise _ExitFailure(1, f"{path} line {line_no}: not numeric CSV")
    if not rows:
        raise _ExitFailure(1, f"{path} is empty")
    return rows


def _load_vector_csv(path: str) -> list:
    return [value for row in _load_matrix_csv(path) for value in row]


def _load_beta(path: str, want_matrix: bool = False):
    """Coefficients from a beta JSON or a saved fit JSON."""
    raw = _load_json(path)
    if isinstance(raw, dict):
        for key in ("beta_hat", "beta"):
            if key in raw:
                raw = raw[key]
                break
        else:
            raise _ExitFailure(1, f"{path}: expected a 'beta' or 'beta_hat' entry")
    if not isinstance(raw, list):
        raise _ExitFailure(1, f"{path}: coefficients must be a JSON array")
    if want_matrix and not (raw and isinstance(raw[0], list)):
        raise _ExitFailure(1, f"{path}: coefficients must be a nested array (matrix)")
    return raw


def _post(server: str | None, path: str, payload: dict) -> dict:
    if server:
        with httpx.Client(base_url=server, timeout=None) as client:
            response = client.post(path, json=payload)
    else:
        from .service.app import app

        async def _go():
            transport = httpx.ASGITransport(app=app)
            async with httpx.AsyncClient(
                transport=transport, base_url="http://crlogit.local", timeout=None
            ) as client:
                return await client.post(path, json=payload)

        response = asyncio.run(_go())
    if response.status_code in (400, 422):
        try:
            detail = response.json().get("detail", response.text)
        except ValueError:
            detail = response.text
        raise _ExitFailure(1 if response.status_code == 400 else 2, str(detail))
    if response.status_code != 200:
        raise _ExitFailure(2, f"service returned HTTP {response.status_code}")
    return response.json()


def _manifest(subcommand: str, args, config: dict, inputs: dict,
              seed: int | None, elapsed: float) -> dict:
    digests = {}
    for name, path in inputs.items():
        try:
            digests[name] = sha256_file(path)
        except OSError:
            digests[name] = None
    return RunManifest(
        subcommand=subcommand,
        version=__version__,
        seed=seed,
        config=config,
        inputs=digests,
        timings={"elapsed_seconds": elapsed},
    ).to_dict()


def _emit_json(document: dict, out_path: str | None) -> None:
    text = dumps(document)
    if out_path:
        with open(out_path, "w", encoding="utf-8") as handle:
            handle.write(text)
    else:
        sys.stdout.write(text)


def _echo(args, message: str) -> None:
    if not getattr(args, "quiet", False):
        print(f"[crlogit] {message}", file=sys.stderr)


def _resolved_seed(args, fallback: int = 0) -> int:
    return args.seed if args.seed is not None else fallback


def cmd_fit(args) -> int:
    started = time.perf_counter()
    payload = {
        "data_csv": _read_text(args.data),
        "lambda": args.lam,
        "init": args.init,
        "tol": args.tol,
    }
    result = _post(args.server, "/fit", payload)
    config = {"data": args.data, "lambda": args.lam, "init": args.init, "tol": args.tol}
    result["manifest"] = _manifest(
        "fit", args, config, {"data": args.data}, None, time.perf_counter() - started
    )
    _emit_json(result, args.out)
    if not result.get("converged", False):
        for note in result.get("warnings", []):
            print(f"[crlogit] warning: {note}", file=sys.stderr)
        print("[crlogit] fit did not converge; partial result written", file=sys.stderr)
        return 2
    return 0


def cmd_test(args) -> int:
    started = time.perf_counter()
    payload = {
        "fit": _load_json(args.fit),
        "M": _load_matrix_csv(args.M),
        "m": _load_vector_csv(args.m),
        "alpha": args.alpha,
    }
    result = _post(args.server, "/test", payload)
    config = {"fit": args.fit, "M": args.M, "m": args.m, "alpha": args.alpha}
    inputs = {"fit": args.fit, "M": args.M, "m": args.m}
    result["manifest"] = _manifest(
        "test", args, config, inputs, None, time.perf_counter() - started
    )
    _emit_json(result, args.out)
    return 0


def cmd_influence(args) -> int:
    started = time.perf_counter()
    if (args.M is None) != (args.m is None):
        raise _ExitFailure(1, "--M and --m must be supplied together")
    payload = {
        "data_csv": _read_text(args.data),
        "beta": _load_beta(args.beta),
        "lambda": args.lam,
        "stratum": args.stratum,
        "cluster": args.cluster,
        "category": args.category,
    }
    inputs = {"data": args.data, "beta": args.beta}
    if args.M is not None:
        payload["M"] = _load_matrix_csv(args.M)
        payload["m"] = _load_vector_csv(args.m)
        inputs["M"] = args.M
        inputs["m"] = args.m
    result = _post(args.server, "/influence", payload)
    config = {
        "data": args.data, "beta": args.beta, "lambda": args.lam,
        "stratum": args.stratum, "cluster": args.cluster,
        "category": args.category, "M": args.M, "m": args.m,
    }
    result["manifest"] = _manifest(
        "influence", args, config, inputs, None, time.perf_counter() - started
    )
    _emit_json(result, args.out)
    return 0


def _hypothesis_payload(args, payload: dict, inputs: dict) -> None:
    payload["M"] = _load_matrix_csv(args.M)
    payload["m"] = _load_vector_csv(args.m)
    inputs["M"] = args.M
    inputs["m"] = args.m
    if args.V is not None:
        payload["V"] = _load_matrix_csv(args.V)
        inputs["V"] = args.V
    elif args.fit is not None:
        fit_doc = _load_json(args.fit)
        if not isinstance(fit_doc, dict) or "V_hat" not in fit_doc:
            raise _ExitFailure(1, f"{args.fit}: expected a fit JSON with V_hat")
        payload["V"] = fit_doc["V_hat"]
        inputs["fit"] = args.fit
    else:
        raise _ExitFailure(1, "a covariance source is required: --V or --fit")


def cmd_power(args) -> int:
    started = time.perf_counter()
    payload = {
        "beta0": _load_beta(args.beta0),
        "n": args.n,
        "alpha": args.alpha,
    }
    inputs = {"beta0": args.beta0}
    _hypothesis_payload(args, payload, inputs)
    result = _post(args.server, "/power", payload)
    config = {
        "beta0": args.beta0, "M": args.M, "m": args.m, "V": args.V,
        "fit": args.fit, "n": args.n, "alpha": args.alpha,
    }
    result["manifest"] = _manifest(
        "power", args, config, inputs, None, time.perf_counter() - started
    )
    _emit_json(result, args.out)
    return 0


def cmd_samplesize(args) -> int:
    started = time.perf_counter()
    payload = {
        "beta0": _load_beta(args.beta0),
        "alpha": args.alpha,
        "target_power": args.power,
    }
    inputs = {"beta0": args.beta0}
    _hypothesis_payload(args, payload, inputs)
    result = _post(args.server, "/samplesize", payload)
    config = {
        "beta0": args.beta0, "M": args.M, "m": args.m, "V": args.V,
        "fit": args.fit, "alpha": args.alpha, "power": args.power,
    }
    result["manifest"] = _manifest(
        "samplesize", args, config, inputs, None, time.perf_counter() - started
    )
    _emit_json(result, args.out)
    return 0


def cmd_generate(args) -> int:
    started = time.perf_counter()
    seed = _resolved_seed(args)
    _echo(args, f"seed = {seed}")
    nh = [int(v) for v in str(args.nh).split(",")]
    payload = {
        "beta": _load_beta(args.beta, want_matrix=True),
        "num_strata": args.H,
        "clusters_per_stratum": nh if len(nh) > 1 else nh[0],
        "cluster_size": args.m,
        "family": args.family,
        "rho2": args.rho2,
        "epsilon": args.contaminate,
        "seed": seed,
    }
    if args.permutation:
        payload["permutation"] = [int(v) for v in args.permutation.split(",")]
    result = _post(args.server, "/generate", payload)
    with open(args.out, "w", encoding="utf-8", newline="") as handle:
        handle.write(result["data_csv"])
    config = {
        "H": args.H, "nh": args.nh, "m": args.m, "beta": args.beta,
        "family": args.family, "rho2": args.rho2,
        "contaminate": args.contaminate, "permutation": args.permutation,
    }
    manifest = _manifest(
        "generate", args, config, {"beta": args.beta}, seed,
        time.perf_counter() - started,
    )
    _emit_json({"manifest": manifest}, args.out + ".manifest.json")
    _echo(args, f"wrote {result['n_clusters']} clusters to {args.out}")
    return 0


def cmd_simulate(args) -> int:
    import os

    started = time.perf_counter()
    plan = _load_json(args.plan)
    if not isinstance(plan, dict):
        raise _ExitFailure(1, f"{args.plan}: plan must be a JSON object")
    if args.seed is not None:
        plan["seed"] = args.seed
    seed = plan.get("seed", 42)
    _echo(args, f"seed = {seed}")
    payload = {"plan": plan, "threads": args.threads}
    result = _post(args.server, "/simulate", payload)
    os.makedirs(args.out, exist_ok=True)
    results_path = os.path.join(args.out, "results.csv")
    plot_path = os.path.join(args.out, "plot_data.csv")
    with open(results_path, "w", encoding="utf-8", newline="") as handle:
        handle.write(result["results_csv"])
    with open(plot_path, "w", encoding="utf-8", newline="") as handle:
        handle.write(result["plot_data_csv"])
    config = {"plan": args.plan, "out": args.out, "threads": args.threads}
    manifest = _manifest(
        "simulate", args, config, {"plan": args.plan}, seed,
        time.perf_counter() - started,
    )
    manifest["config"]["resolved_plan"] = plan
    _emit_json({"manifest": manifest}, os.path.join(args.out, "manifest.json"))
    _echo(args, f"wrote {len(result['cells'])} cells to {args.out}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service.app import app

    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def _build_parser() -> _Parser:
    parser = _Parser(prog="crlogit", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=__version__)

    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=None,
                        help="seed for stochastic subcommands")
    common.add_argument("--threads", type=int, default=None,
                        help="worker threads for simulation")
    common.add_argument("--quiet", action="store_true",
                        help="suppress progress messages on stderr")
    common.add_argument("--server", default=None, metavar="URL",
                        help="talk to a running service instead of in-process")

    sub = parser.add_subparsers(dest="command", metavar="SUBCOMMAND")

    p = sub.add_parser("fit", parents=[common],
                       help="fit the model at one divergence parameter")
    p.add_argument("--data", required=True, help="survey CSV file")
    p.add_argument("--lambda", dest="lam", type=float, default=0.0,
                   help="divergence parameter (> -1)")
    p.add_argument("--init", choices=["zeros", "pmle"], default="pmle",
                   help="start from zeros or warm-start at lambda = 0")
    p.add_argument("--tol", type=float, default=1e-8, help="gradient tolerance")
    p.add_argument("--out", default=None, help="output JSON (default stdout)")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("test", parents=[common],
                       help="Wald-type test of M'beta = m from a saved fit")
    p.add_argument("--fit", required=True, help="fit JSON from the fit subcommand")
    p.add_argument("--M", required=True, help="constraint matrix CSV (p rows, r columns)")
    p.add_argument("--m", required=True, help="constraint value CSV (r values)")
    p.add_argument("--alpha", type=float, default=0.05, help="test level")
    p.add_argument("--out", default=None, help="output JSON (default stdout)")
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("influence", parents=[common],
                       help="influence of contaminating one cluster")
    p.add_argument("--data", required=True, help="survey CSV file")
    p.add_argument("--beta", required=True,
                   help="beta JSON, or a fit JSON to reuse its estimate")
    p.add_argument("--lambda", dest="lam", type=float, default=0.0)
    p.add_argument("--stratum", type=int, required=True)
    p.add_argument("--cluster", type=int, required=True)
    p.add_argument("--category", type=int, required=True,
                   help="1-based contaminating category")
    p.add_argument("--M", default=None, help="optional constraint matrix CSV")
    p.add_argument("--m", default=None, help="optional constraint value CSV")
    p.add_argument("--out", default=None, help="output JSON (default stdout)")
    p.set_defaults(func=cmd_influence)

    for name, func in (("power", cmd_power), ("samplesize", cmd_samplesize)):
        p = sub.add_parser(name, parents=[common],
                           help=f"Wald-test {name} planning")
        p.add_argument("--beta0", required=True, help="alternative beta JSON (file or inline)")
        p.add_argument("--M", required=True, help="constraint matrix CSV")
        p.add_argument("--m", required=True, help="constraint value CSV")
        p.add_argument("--V", default=None, help="covariance CSV")
        p.add_argument("--fit", default=None, help="fit JSON supplying V_hat")
        p.add_argument("--alpha", type=float, default=0.05)
        if name == "power":
            p.add_argument("--n", type=int, required=True, help="cluster count")
        else:
            p.add_argument("--power", type=float, default=0.8,
                           help="target power in (0, 1)")
        p.add_argument("--out", default=None, help="output JSON (default stdout)")
        p.set_defaults(func=func)

    p = sub.add_parser("generate", parents=[common],
                       help="simulate a survey dataset")
    p.add_argument("--H", type=int, required=True, help="number of strata")
    p.add_argument("--nh", required=True,
                   help="clusters per stratum (int, or comma list per stratum)")
    p.add_argument("--m", type=int, required=True, help="units per cluster")
    p.add_argument("--beta", required=True, help="coefficient matrix JSON (file or inline)")
    p.add_argument("--family", default="multinomial",
                   help="multinomial, m_inflated, random_clumped or dirichlet_multinomial")
    p.add_argument("--rho2", type=float, default=0.0, help="intra-cluster rho^2")
    p.add_argument("--contaminate", type=float, default=0.0,
                   help="fraction of clusters with relabelled categories")
    p.add_argument("--permutation", default=None,
                   help="comma list sigma(1..d+1); default forward cycle")
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("simulate", parents=[common],
                       help="run a Monte Carlo experiment plan")
    p.add_argument("--plan", required=True, help="plan JSON (file or inline)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("serve", parents=[common], help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "func", None) is None:
            parser.print_help(sys.stderr)
            return 1
        return args.func(args)
    except _ExitFailure as failure:
        print(f"[crlogit] error: {failure}", file=sys.stderr)
        return failure.code
    except httpx.HTTPError as exc:
        print(f"[crlogit] transport error: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())
