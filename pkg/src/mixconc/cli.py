"""Command line entry point ``conc``."""
import argparse
import json
import sys

from . import harness
from .bounds import bound_inputs_from_json, bound_result_to_json, theorem_bound
from .coupling import BlockingInfeasible

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_IO = 0, 2, 3, 4

SUBCOMMAND_KIND = {"erm": "erm-oracle", "concentration": "concentration"}


def _common():
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", default=argparse.SUPPRESS, help="JSON configuration file")
    p.add_argument("--out", default=argparse.SUPPRESS, help="output path (default: stdout)")
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="master seed (u64)")
    p.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="worker processes")
    p.add_argument("--format", choices=("csv", "json"), default=argparse.SUPPRESS)
    return p


def build_parser():
    common = _common()
    parser = argparse.ArgumentParser(prog="conc", parents=[common],
                                     description="Concentration bounds for dependent data.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="simulate a Markov chain or AR(1) trajectory")
    sub.add_parser("beta", parents=[common], help="exact beta-mixing profile of a chain")
    sub.add_parser("gamma", parents=[common], help="chaining functionals of a finite metric space")
    sub.add_parser("bound", parents=[common], help="evaluate the concentration bound")
    sub.add_parser("erm", parents=[common], help="run the perceptron ERM experiment")
    sub.add_parser("concentration", parents=[common], help="run the concentration dominance experiment")
    return parser


def _read_doc(path):
    if path is None:
        return {}
    with open(path) as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as err:
        raise harness.ConfigError(f"{path}: line {err.lineno}, column {err.colno}: {err.msg}") from None
    if not isinstance(doc, dict):
        raise harness.ConfigError(f"{path}: top level must be a JSON object")
    return doc


def _write(text, path):
    if path is None:
        sys.stdout.write(text)
        return
    try:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    except OSError as err:
        raise OSError(f"cannot write {path}: {err.strerror or err}") from err


def _experiment(args, doc, kind):
    doc = {**doc, "kind": doc.get("kind", kind)}
    if doc["kind"] != kind:
        raise harness.ConfigError(f"kind: expected {kind!r}, got {doc['kind']!r}")
    cfg = harness.ExperimentConfig.from_dict(doc).with_overrides(seed=args.seed, out=args.out)
    threads = args.threads or 1
    if kind == "concentration":
        records = harness.run_concentration_experiment(cfg, threads)
    else:
        records = harness.run_erm_experiment(cfg, threads)
    harness.emit_results(records, args.format, cfg.out)


def _profile(args, doc, kind, fn):
    doc = {k: v for k, v in doc.items() if k != "kind"}
    unknown = set(doc) - set(harness._DEFAULTS[kind])
    if unknown:
        raise harness.ConfigError(f"unknown field(s) for {kind}: {', '.join(sorted(unknown))}")
    rows = fn({**harness._DEFAULTS[kind], **doc})
    _write(harness.render(rows, args.format), args.out)


def _simulate(args, doc):
    T = doc.get("T", 1000)
    process = doc.get("process", {"P": [[0.7, 0.3], [0.3, 0.7]]})
    if not isinstance(T, int) or T < 1:
        raise harness.ConfigError("T: must be a positive integer")
    seed = args.seed if args.seed is not None else doc.get("seed", 0)
    _write(harness.render(harness.simulate(process, T, seed), args.format), args.out)


def _bound(args, doc):
    try:
        inputs = bound_inputs_from_json(doc)
    except TypeError as err:
        raise harness.ConfigError(f"bound inputs: {err}") from None
    tb = theorem_bound(inputs)
    result = {
        "C_alpha": tb.C_alpha,
        "compact": bound_result_to_json(tb.compact),
        "decomposed": bound_result_to_json(tb.decomposed),
    }
    if args.format == "csv":
        rows = []
        for form in ("compact", "decomposed"):
            r = result[form]
            rows.append({"form": form, "threshold": r["threshold"], "failure_prob": r["failure_prob"],
                         "term1": r["terms"][0], "term2": r["terms"][1], "term3": r["terms"][2],
                         "vacuous": r["vacuous"]})
        text = harness.render(rows, "csv")
    else:
        text = json.dumps(result, indent=2) + "\n"
    _write(text, args.out)


def main(argv=None):
    args = build_parser().parse_args(argv)
    for name, default in (("config", None), ("out", None), ("seed", None), ("threads", 1), ("format", None)):
        if not hasattr(args, name):
            setattr(args, name, default)
    if args.format is None:
        args.format = "json" if args.command == "bound" else "csv"
    try:
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise harness.ConfigError("--seed must lie in [0, 2^64)")
        if args.threads < 1:
            raise harness.ConfigError("--threads must be >= 1")
        doc = _read_doc(args.config)
        if args.command in SUBCOMMAND_KIND:
            _experiment(args, doc, SUBCOMMAND_KIND[args.command])
        elif args.command == "beta":
            _profile(args, doc, "beta-profile", harness.beta_profile)
        elif args.command == "gamma":
            _profile(args, doc, "gamma-profile", harness.gamma_profile)
        elif args.command == "simulate":
            _simulate(args, doc)
        else:
            _bound(args, doc)
    except BlockingInfeasible as err:
        print(f"conc: infeasible parameters: {err}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except OSError as err:
        print(f"conc: I/O error: {err}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, KeyError, TypeError) as err:
        print(f"conc: configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
