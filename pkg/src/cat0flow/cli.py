"""Command line entry point: ``cat0flow run | verify | oracle``.

Exit codes: 0 all checks pass, 2 a check failed, 3 configuration error,
4 numerical failure.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .errors import ConfigError, InvalidParameterError
from .scenario import (
    ORACLE_CASES,
    SUITES,
    load_shipped,
    parse_config,
    run_scenario,
    shipped_scenarios,
    verify_suite,
    write_oracle,
    write_verify,
)

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3, 4


def _parse_params(items):
    params = {}
    for item in items or []:
        key, sep, val = item.partition("=")
        if not sep or not key:
            raise InvalidParameterError(f"expected key=value, got {item!r}")
        params[key] = val
    return params


def _load(config: str):
    path = Path(config)
    if path.exists():
        return parse_config(path)
    if config in shipped_scenarios():
        return load_shipped(config)
    raise ConfigError([f"no such config file or shipped scenario: {config}"])


def _cmd_run(args) -> int:
    cfg = _load(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    art = run_scenario(cfg, args.out)
    for r in art.reports:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status} {r.check:<28} min={r.min:.3e} max={r.max:.3e} tol={r.tolerance:.1e}")
    if art.failure:
        print(f"numerical failure in scenario {cfg.name!r}: {art.failure}", file=sys.stderr)
    print(f"artifacts written to {art.out_dir}")
    return art.exit_code


def _cmd_verify(args) -> int:
    res = verify_suite(args.suite, args.seed or 0)
    path = write_verify(res, args.out)
    for r in res["reports"]:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.check}")
    print(f"summary written to {path}")
    return EXIT_OK if res["pass"] else EXIT_CHECK


def _cmd_oracle(args) -> int:
    path = write_oracle(args.case, _parse_params(args.params), args.out)
    print(f"oracle values written to {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cat0flow",
                                description="Harmonic map heat flow into CAT(0) targets.")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a scenario and its checks")
    r.add_argument("--config", required=True, help="TOML file or shipped scenario name")
    r.add_argument("--out", default=None, help="output directory")
    r.add_argument("--seed", type=int, default=None, help="override the config seed")
    r.set_defaults(func=_cmd_run)
    v = sub.add_parser("verify", help="run a property suite")
    v.add_argument("--suite", choices=SUITES, default="all")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--out", default=".")
    v.set_defaults(func=_cmd_verify)
    o = sub.add_parser("oracle", help="emit reference values")
    o.add_argument("--case", choices=ORACLE_CASES, required=True)
    o.add_argument("--params", nargs="*", default=[], metavar="KEY=VALUE")
    o.add_argument("--out", default=".")
    o.set_defaults(func=_cmd_oracle)
    sub.add_parser("list", help="list shipped scenarios").set_defaults(
        func=lambda a: print("\n".join(shipped_scenarios())) or EXIT_OK)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        for err in exc.errors:
            print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except InvalidParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
