"""``relcommit`` command line: honest runs, the binding bound, geometry and attacks.

Each subcommand prints an aligned table and, with ``--out``, writes a JSON
report that embeds the resolved configuration. The JSON file is written
atomically and only when the command succeeds.

Exit codes: 0 success, 1 usage or domain error, 2 internal invariant failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile

import numpy as np

from . import adversary, config, geometry, protocol, security

US = 1e6


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------------------
# rendering
# ---------------------------------------------------------------------------


def _fmt(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, bool):
        return "yes" if v else "no"
    if isinstance(v, float):
        if math.isnan(v):
            return "-"
        return f"{v:.6g}"
    return str(v)


def render_table(columns, rows) -> str:
    cells = [[_fmt(r.get(c)) for c in columns] for r in rows]
    widths = [max([len(c)] + [len(row[i]) for row in cells]) for i, c in enumerate(columns)]
    lines = ["  ".join(c.rjust(w) for c, w in zip(columns, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines.extend("  ".join(x.rjust(w) for x, w in zip(row, widths)) for row in cells)
    return "\n".join(lines)


def render_pairs(pairs) -> str:
    width = max((len(k) for k, _ in pairs), default=0)
    return "\n".join(f"{k.ljust(width)}  {_fmt(v)}" for k, v in pairs)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.bool_):
        return bool(obj)
    if hasattr(obj, "value") and isinstance(getattr(obj, "value"), (str, int)):
        return obj.value
    return obj


def dump_report(report: dict) -> str:
    return json.dumps(_jsonable(report), sort_keys=True, indent=2) + "\n"


def write_atomic(path: str, text: str):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".relcommit-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _bound_row(params: security.SecurityParams) -> dict:
    b = security.epsilon_b_bound(params)
    return {
        "n_tol": params.n_tol,
        "e_tol": params.e_tol,
        "error_budget": b.error_budget,
        "eps_b": b.eps_b,
        "delta_star": b.delta_star,
        "exponential_term": b.exponential_term,
        "entropy_term": b.entropy_term,
        "combinatorial_factor": b.combinatorial_factor,
    }


def cmd_bound(cfg: config.RunConfig):
    p = cfg.security
    if cfg.sweep is None:
        row = _bound_row(p)
        return render_pairs(list(row.items())), {"command": "bound", "bound": row}
    start, stop, step = cfg.sweep
    rows = []
    for n in range(start, stop + 1, step):
        q = security.SecurityParams(n, p.e_tol, p.eps_rect, p.eps_diag, p.mu, p.intensity_fluctuation)
        rows.append(_bound_row(q))
    cols = ["n_tol", "error_budget", "eps_b", "delta_star", "exponential_term", "entropy_term", "combinatorial_factor"]
    return render_table(cols, rows), {"command": "bound", "sweep": rows}


def cmd_geometry(cfg: config.RunConfig, field_run=None):
    obs = config.field_timing(field_run) if field_run is not None else cfg.timing
    if obs is None:
        raise config.ConfigError("timing.t_b0", "missing timing field (set timing.t0/t_b0/t_b1 or --field-run)")
    layout = cfg.layout
    g = geometry.derived_distances(layout)
    d01 = geometry.agent_separation(layout)
    top = geometry.commit_point_max(layout, obs)
    sol = geometry.solve_commit_point(layout, obs)
    excl = geometry.location_exclusion(layout, obs)
    approx = geometry.location_exclusion_approx(layout, obs)
    result = {
        "t0_us": obs.t0 * US,
        "t_b0_us": obs.t_b0 * US,
        "t_b1_us": obs.t_b1 * US,
        "d_bob_b0_m": g.d_bob_b0,
        "d_bob_b1_m": g.d_bob_b1,
        "theta0_rad": g.theta0,
        "theta1_rad": g.theta1,
        "d_b0_b1_m": g.d_b0_b1,
        "d_a0_a1_m": d01,
        "t_max_simple_us": geometry.t_max_simple(obs, d01) * US,
        "q": top.q,
        "d_bob_pcommit_max_m": top.d_bob_pcommit_max,
        "d_bob_pcommit_m": sol.d_bob_pcommit,
        "psi_rad": sol.psi,
        "t_commit_upper_us": sol.t_commit_upper * US,
        "at_max_point": sol.at_max_point,
        "a0_excluded": excl.a0_excluded,
        "a1_excluded": excl.a1_excluded,
        "a0_excluded_approx": approx.a0_excluded,
        "a1_excluded_approx": approx.a1_excluded,
    }
    report = {"command": "geometry", "geometry": result}
    if field_run is not None:
        report["field_run"] = field_run
    return render_pairs(list(result.items())), report


RUN_COLUMNS = [
    "exp", "bit_committed", "bit_deduced", "reason", "n_e", "n_rect", "n_diag",
    "n_e_over_n_tol_pct", "t_b0_us", "t_b1_us", "t_commit_us", "t_unveil_us",
]


def cmd_run(cfg: config.RunConfig):
    seed = cfg.require_seed()
    bound = security.epsilon_b_bound(cfg.security)
    rows = []
    bits = cfg.committed_bits
    for i in range(cfg.repetitions):
        bit = bits[i % len(bits)]
        tr, v = protocol.run_honest_protocol(
            cfg.layout, cfg.source, cfg.detector, cfg.security, bit, [seed, i], cfg.engine
        )
        est = v.estimation
        n_e = None
        if est is not None:
            n_e = est.n_e_rect if bit == 0 else est.n_e_diag
        obs = tr.observations
        rows.append({
            "exp": i + 1,
            "bit_committed": bit,
            "bit_deduced": v.deduced_bit,
            "accepted": v.accepted,
            "reason": v.reason.value,
            "n_e": n_e,
            "n_rect": None if est is None else est.n_rect,
            "n_diag": None if est is None else est.n_diag,
            "n_detect_rect": None if est is None else est.n_detect_rect,
            "n_detect_diag": None if est is None else est.n_detect_diag,
            "n_e_over_n_tol_pct": None if n_e is None else round(100.0 * n_e / cfg.security.n_tol, 2),
            "t_b0_us": (obs.t_b0 - obs.t0) * US,
            "t_b1_us": (obs.t_b1 - obs.t0) * US,
            "t_commit_us": v.t_commit_upper * US,
            "t_unveil_us": (tr.t_unveil - obs.t0) * US,
            "true_commit_us": (tr.commit_time - obs.t0) * US,
            "a0_excluded": v.exclusions[0],
            "a1_excluded": v.exclusions[1],
        })
    text = render_table(RUN_COLUMNS, rows)
    accepted = sum(r["accepted"] for r in rows)
    text += f"\n\naccepted {accepted}/{len(rows)}   eps_b = {bound.eps_b:.6g} (delta* = {bound.delta_star:.6g})"
    report = {"command": "run", "seed": seed, "eps_b": bound.eps_b, "delta_star": bound.delta_star, "rows": rows}
    return text, report


def cmd_attack(cfg: config.RunConfig, trials: int):
    seed = cfg.require_seed()
    spec = cfg.attack
    kwargs = {}
    if spec.strategy is adversary.Strategy.MULTI_PHOTON:
        kwargs = {"src": cfg.source, "params": cfg.security}
    elif spec.strategy is adversary.Strategy.DELAYED_COMMIT:
        kwargs = {"layout": cfg.layout, "deadlines": cfg.timing or config.field_timing(1)}
    try:
        out = adversary.run_attack(spec, trials, seed, **kwargs)
    except ValueError as exc:
        raise config.ConfigError("attack.countermeasure", str(exc)) from None
    details = {k: v for k, v in out.details.items() if k != "results"}
    row = {
        "strategy": spec.strategy.value,
        "attacker": spec.attacker.value,
        "countermeasure": spec.countermeasure or "-",
        "trials": out.trials,
        "successes": out.success_count,
        "probability": out.estimated_probability,
        "ci_low": out.ci_low,
        "ci_high": out.ci_high,
        "guarantee_respected": out.guarantee_respected,
    }
    text = render_table(list(row), [row])
    if details:
        text += "\n\n" + render_pairs(sorted(details.items()))
    return text, {"command": "attack", "seed": seed, "attack": row, "details": details}


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="key=value configuration file")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override one configuration key (repeatable)")
    common.add_argument("--out", help="write the JSON report here")

    p = _Parser(prog="relcommit", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", parents=[common], help="honest protocol runs")
    run.add_argument("--seed", type=int)
    run.add_argument("--reps", type=int, help="number of runs")

    bound = sub.add_parser("bound", parents=[common], help="binding bound")
    bound.add_argument("--sweep", metavar="START:STOP:STEP", help="sweep N_tol")

    geo = sub.add_parser("geometry", parents=[common], help="commit-time bound and exclusions")
    geo.add_argument("--field-run", type=int, metavar="N", help="use the timings of field run N (1-8)")

    att = sub.add_parser("attack", parents=[common], help="cheating strategies")
    att.add_argument("--seed", type=int)
    att.add_argument("--reps", type=int, help="number of trials")
    att.add_argument("--strategy", choices=[s.value for s in adversary.Strategy])
    att.add_argument("--countermeasure")
    return p


def _overrides(args) -> list:
    items = list(args.overrides)
    if getattr(args, "seed", None) is not None:
        items.append(f"run.seed={args.seed}")
    if getattr(args, "reps", None) is not None:
        key = "attack.trials" if args.command == "attack" else "run.repetitions"
        items.append(f"{key}={args.reps}")
    if getattr(args, "sweep", None):
        items.append(f"bound.sweep={args.sweep}")
    if getattr(args, "strategy", None):
        items.append(f"attack.strategy={args.strategy}")
    if getattr(args, "countermeasure", None) is not None:
        items.append(f"attack.countermeasure={args.countermeasure}")
    if args.out is not None:
        items.append(f"run.out={args.out}")
    return items


def execute(argv):
    """Run one command and return (stdout text, report dict, output path)."""
    args = build_parser().parse_args(argv)
    cfg = config.load(args.config, _overrides(args))
    if args.command == "run":
        text, report = cmd_run(cfg)
    elif args.command == "bound":
        text, report = cmd_bound(cfg)
    elif args.command == "geometry":
        text, report = cmd_geometry(cfg, args.field_run)
    else:
        text, report = cmd_attack(cfg, cfg.trials)
    report["config"] = cfg.resolved
    return text, report, cfg.out


DOMAIN_ERRORS = (
    UsageError,
    config.ConfigError,
    geometry.GeometryError,
    security.SecurityError,
    protocol.ProtocolAbort,
    protocol.IncompleteTranscript,
)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        text, report, out = execute(argv)
        payload = dump_report(report)
        if out:
            write_atomic(out, payload)
    except DOMAIN_ERRORS as exc:
        print(f"relcommit: error: {exc}", file=sys.stderr)
        return 1
    except protocol.CausalityError as exc:
        print(f"relcommit: internal invariant failure: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # anything unexpected is an internal failure
        print(f"relcommit: internal invariant failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    print(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
