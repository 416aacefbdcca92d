"""Command-line front end: ``ehcr <command> --config <path>``.

The configuration is a flat ``key = value`` document with dotted
namespaces.  Values are Python literals (numbers, quoted strings, lists);
bare words are strings and ``true``/``false`` are booleans.  ``#`` starts a
comment.

Exit codes: 0 success, 1 unexpected error, 2 configuration error,
3 infeasible scenario, 4 validation failure.  Errors are reported as one
JSON object on stderr.  ``EHCR_WORKERS`` sets the sweep worker count.
"""

from __future__ import annotations

import argparse
import ast
import csv
import json
import math
import os
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import rates, sim, solver
from .channel import LinkModel, SuccessProbs, derive_success_probs
from .presets import PRESETS, get_preset
from .rates import AccessPolicy, Traffic

COMMANDS = ("rates", "optimize", "region", "delay", "simulate", "validate")
COLUMNS = ("system", "lambda_p", "lambda_e", "D", "lambda_s_max", "winner", "p_s", "p_t", "p_f", "p_b",
           "p_r", "mu_p", "mu_s", "mu_e", "d_p", "ci_half_width")
VALIDATE_COLUMNS = ("check", "expected", "observed", "tolerance", "passed")
WORKERS_ENV = "EHCR_WORKERS"

EXIT_OK, EXIT_ERROR, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_VALIDATION = 0, 1, 2, 3, 4


class ConfigError(ValueError):
    def __init__(self, message, key=None, line=None, column=None):
        super().__init__(message)
        self.key, self.line, self.column = key, line, column

    def record(self):
        return {"error": "config", "message": str(self), "key": self.key, "line": self.line,
                "column": self.column}


class InfeasibleError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# schema


def _prob(v):
    v = _num(v)
    if not 0.0 <= v <= 1.0:
        raise ValueError("must be in [0, 1]")
    return v


def _num(v):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or math.isnan(v):
        raise ValueError("must be a number")
    return float(v)


def _pos(v):
    v = _num(v)
    if v <= 0:
        raise ValueError("must be positive")
    return v


def _nonneg(v):
    v = _num(v)
    if v < 0:
        raise ValueError("must be >= 0")
    return v


def _count(lo):
    def check(v):
        if isinstance(v, bool) or not isinstance(v, int) or v < lo:
            raise ValueError(f"must be an integer >= {lo}")
        return v
    return check


def _flag(v):
    if not isinstance(v, bool):
        raise ValueError("must be true or false")
    return v


def _choice(*options):
    def check(v):
        if v not in options:
            raise ValueError(f"must be one of {', '.join(options)}")
        return v
    return check


def _list_of(item):
    def check(v):
        vals = v if isinstance(v, (list, tuple)) else [v]
        if not vals:
            raise ValueError("must not be empty")
        return tuple(item(x) for x in vals)
    return check


def _delay(v):
    v = _num(v)
    if v < 1:
        raise ValueError("must be >= 1")
    return v


_PROB_KEYS = tuple(f.name for f in fields(SuccessProbs))
_LINK_KEYS = tuple(f.name for f in fields(LinkModel))

SCHEMA = {
    "command": _choice(*COMMANDS),
    "probs.preset": _choice(*PRESETS),
    "probs.mpr_delta": _prob,
    **{f"probs.{k}": _prob for k in _PROB_KEYS},
    **{f"link.{k}": _nonneg for k in _LINK_KEYS},
    **{f"traffic.{k}": _prob for k in ("lambda_p", "lambda_s", "lambda_e", "p_fa", "p_md")},
    **{f"policy.{k}": _prob for k in ("p_s", "p_t", "p_f", "p_b", "p_r")},
    "solver.ps_points": _count(1),
    "solver.pr_points": _count(1),
    "solver.tol": _pos,
    "solver.feedback": _flag,
    "sweep.lambda_p": _list_of(_prob),
    "sweep.lambda_p_start": _prob,
    "sweep.lambda_p_stop": _prob,
    "sweep.lambda_p_step": _pos,
    "delay.D": _list_of(_delay),
    "sim.num_slots": _count(2),
    "sim.seed": _count(0),
    "sim.feedback": _flag,
    "sim.energy_model": _choice(*sim.ENERGY_MODELS),
    "sim.dominance": _choice(*sim.DOMINANCE_MODES),
    "sim.warmup_slots": _count(0),
    "output.dir": str,
    "output.svg": _flag,
}


@dataclass(frozen=True)
class Scenario:
    command: str
    probs: SuccessProbs
    traffic: Traffic
    policy: AccessPolicy
    ps_grid: tuple
    pr_grid: tuple
    tol: float
    feedback: bool
    lambda_p_grid: tuple
    delays: tuple
    sim: sim.SimConfig
    out_dir: Path
    svg: bool = True
    preset: str | None = None
    raw: dict = field(default_factory=dict, compare=False, repr=False)


def _literal(text):
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        if any(ch in text for ch in "[](){},'\" "):
            raise
        return text


def _tokenise(text):
    """``{key: (value, line, column)}`` from the document, rejecting duplicates and unknown keys."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0]
        if not line.strip():
            continue
        if "=" not in line:
            raise ConfigError("expected 'key = value'", None, lineno, len(raw) - len(raw.lstrip()) + 1)
        key_part, value_part = line.split("=", 1)
        key = key_part.strip()
        kcol = len(key_part) - len(key_part.lstrip()) + 1
        vcol = len(key_part) + 2 + len(value_part) - len(value_part.lstrip())
        if key not in SCHEMA:
            raise ConfigError(f"unknown key {key!r}", key, lineno, kcol)
        if key in out:
            raise ConfigError(f"duplicate key {key!r}", key, lineno, kcol)
        value_text = value_part.strip()
        if not value_text:
            raise ConfigError(f"{key}: missing value", key, lineno, vcol)
        try:
            value = _literal(value_text)
        except (ValueError, SyntaxError):
            raise ConfigError(f"{key}: cannot parse value {value_text!r}", key, lineno, vcol) from None
        try:
            value = SCHEMA[key](value)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{key}: {exc} (got {value_text})", key, lineno, vcol) from None
        out[key] = (value, lineno, vcol)
    return out


def parse_config(text: str, command: str | None = None) -> Scenario:
    """Validate a configuration document into a :class:`Scenario`.

    ``command`` (from the command line) takes precedence over a ``command``
    key in the document.
    """
    tok = _tokenise(text)
    val = {k: v[0] for k, v in tok.items()}

    def fail(msg, key):
        line, col = (tok[key][1], tok[key][2]) if key in tok else (None, None)
        raise ConfigError(msg, key, line, col)

    cmd = command or val.get("command")
    if cmd is None:
        fail("missing required key 'command'", "command")
    if cmd not in COMMANDS:
        raise ConfigError(f"unknown command {cmd!r}", "command")

    # success probabilities: preset, explicit values, or a link model
    preset = val.get("probs.preset")
    link_keys = [k for k in val if k.startswith("link.")]
    prob_keys = [k for k in val if k.startswith("probs.") and k.split(".", 1)[1] in _PROB_KEYS]
    base_traffic = Traffic()
    if link_keys:
        if preset or prob_keys:
            fail("link.* cannot be combined with probs.*", link_keys[0])
        try:
            link = LinkModel(**{k.split(".", 1)[1]: val[k] for k in link_keys})
            probs = derive_success_probs(link)
        except (TypeError, ValueError) as exc:
            fail(f"link: {exc}", link_keys[0])
    else:
        if preset:
            p = get_preset(preset)
            base = dict(zip(_PROB_KEYS, p.probs.as_tuple()))
            base_traffic = p.traffic
        else:
            base = {}
        base.update({k.split(".", 1)[1]: val[k] for k in prob_keys})
        missing = [f"probs.{k}" for k in _PROB_KEYS if k not in base]
        if missing:
            fail(f"missing required key {missing[0]!r} (or set probs.preset)", missing[0])
        try:
            probs = SuccessProbs(**base)
        except ValueError as exc:
            fail(f"probs: {exc}", (prob_keys or ["probs.preset"])[0])
    if "probs.mpr_delta" in val:
        probs = probs.with_secondary_mpr(val["probs.mpr_delta"])

    traffic = replace(base_traffic, **{k.split(".", 1)[1]: v for k, v in val.items()
                                       if k.startswith("traffic.")})
    policy = AccessPolicy(**{k.split(".", 1)[1]: v for k, v in val.items() if k.startswith("policy.")})

    ps_grid = tuple(np.linspace(0.0, 1.0, val.get("solver.ps_points", 101)).tolist())
    pr_grid = tuple(np.linspace(0.0, 1.0, val.get("solver.pr_points", 101)).tolist())

    if "sweep.lambda_p" in val:
        if any(k in val for k in ("sweep.lambda_p_start", "sweep.lambda_p_stop", "sweep.lambda_p_step")):
            fail("sweep.lambda_p excludes start/stop/step", "sweep.lambda_p")
        grid = val["sweep.lambda_p"]
    else:
        start = val.get("sweep.lambda_p_start", 0.0)
        stop = val.get("sweep.lambda_p_stop", probs.p_bar_p)
        step = val.get("sweep.lambda_p_step", 0.01)
        if stop < start:
            fail("sweep.lambda_p_stop is below sweep.lambda_p_start", "sweep.lambda_p_stop")
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        grid = tuple(round(start + i * step, 12) for i in range(count))
    if cmd == "delay" and "delay.D" not in val:
        fail("missing required key 'delay.D' for the delay command", "delay.D")

    try:
        simcfg = sim.SimConfig(
            num_slots=val.get("sim.num_slots", 1_000_000),
            seed=val.get("sim.seed", 0),
            feedback_enabled=val.get("sim.feedback", False),
            energy_model=val.get("sim.energy_model", "md1-approx"),
            dominance=val.get("sim.dominance", "none"),
            warmup_slots=val.get("sim.warmup_slots"),
        )
    except ValueError as exc:
        fail(f"sim: {exc}", "sim.warmup_slots" if "sim.warmup_slots" in val else "sim.num_slots")

    return Scenario(
        command=cmd, probs=probs, traffic=traffic, policy=policy, ps_grid=ps_grid, pr_grid=pr_grid,
        tol=val.get("solver.tol", solver.DEFAULT_TOL), feedback=val.get("solver.feedback", False),
        lambda_p_grid=tuple(grid), delays=val.get("delay.D", ()), sim=simcfg,
        out_dir=Path(val.get("output.dir", "out")), svg=val.get("output.svg", True), preset=preset,
        raw=val,
    )


# ---------------------------------------------------------------------------
# rows


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    return f"{float(v):.12g}"


def _row(system, traffic, policy=None, **kw):
    row = dict.fromkeys(COLUMNS)
    row.update(system=system, lambda_p=traffic.lambda_p, lambda_e=traffic.lambda_e)
    if policy is not None:
        row.update(zip(("p_s", "p_t", "p_f", "p_b", "p_r"), policy.as_tuple()))
    row.update(kw)
    return row


def _s1_row(system, policy, probs, traffic, **kw):
    r = rates.s1_rates(policy, probs, traffic)
    return _row(system, traffic, policy, mu_p=r.mu_p, mu_s=r.mu_s, mu_e=r.mu_e,
                d_p=rates.delay_s1(policy, probs, traffic).d_p, **kw)


def _sf1_row(system, policy, probs, traffic, **kw):
    fc = rates.feedback_chain(policy, probs, traffic)
    mu_s = rates.sf1_secondary_rate(policy, probs, traffic)
    occ_idle = fc.pi0
    mu_e = rates.energy_rate(policy, traffic, occ_idle, fc.sum_pi)
    return _row(system, traffic, policy, mu_p=fc.eta, mu_s=mu_s, mu_e=mu_e,
                d_p=rates.delay_sf1(policy, probs, traffic).d_p, **kw)


def _s2_row(system, policy, probs, traffic, **kw):
    r = rates.s2_rates(policy, probs, traffic)
    return _row(system, traffic, policy, mu_p=r.mu_p, mu_s=r.mu_s, mu_e=r.mu_e, **kw)


def _curve_rows(curve, probs, traffic, delay=None):
    rows = []
    for lam, lsm, win, pol in zip(curve.lambda_p, curve.lambda_s_max, curve.winner, curve.policies):
        t = replace(traffic, lambda_p=lam)
        kw = dict(lambda_s_max=lsm, winner=win, D=delay)
        if win == solver.S2:
            s2 = solver.feasibility_s2(probs, replace(t, lambda_s=lsm))
            rows.append(_s2_row(curve.label, s2.best_policy, probs, replace(t, lambda_s=lsm), **kw))
        elif win == solver.S1F:
            rows.append(_sf1_row(curve.label, pol, probs, t, **kw))
        else:
            rows.append(_s1_row(curve.label, pol, probs, t, **kw))
    return rows


def _workers():
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{WORKERS_ENV} must be a positive integer (got {raw!r})", WORKERS_ENV) from None
    if n < 1:
        raise ConfigError(f"{WORKERS_ENV} must be a positive integer (got {raw!r})", WORKERS_ENV)
    return n


# ---------------------------------------------------------------------------
# commands


def _cmd_rates(sc):
    t = sc.traffic
    rows = []
    r1 = rates.s1_rates(sc.policy, sc.probs, t)
    rows.append(_s1_row(solver.S1, sc.policy, sc.probs, t) if r1.stable
                else _row(solver.S1, t, sc.policy, mu_p=r1.mu_p))
    try:
        rows.append(_sf1_row(solver.S1F, sc.policy, sc.probs, t))
    except rates.UnstableError:
        rows.append(_row(solver.S1F, t, sc.policy, mu_p=math.nan))
    rows.append(_s2_row(solver.S2, sc.policy, sc.probs, t))
    return rows, []


def _cmd_optimize(sc):
    t, lam = sc.traffic, sc.traffic.lambda_p
    rows = []
    r1 = solver.optimize_s1(sc.probs, t, lam, sc.ps_grid, sc.tol)
    rf = solver.optimize_sf1(sc.probs, t, lam, sc.ps_grid, sc.tol)
    if not (r1.feasible or rf.feasible):
        raise InfeasibleError(r1.reason)
    if r1.feasible:
        rows.append(_s1_row(solver.S1, r1.best_policy, sc.probs, t, lambda_s_max=r1.best_value,
                            winner=solver.S1))
    if rf.feasible:
        rows.append(_sf1_row(solver.S1F, rf.best_policy, sc.probs, t, lambda_s_max=rf.best_value,
                             winner=solver.S1F))
    return rows, []


def _cmd_region(sc):
    grid, w = sc.lambda_p_grid, _workers()
    curves = [
        solver.stability_region(sc.probs, sc.traffic, grid, feedback=False, ps_grid=sc.ps_grid, workers=w),
        solver.stability_region(sc.probs, sc.traffic, grid, feedback=True, ps_grid=sc.ps_grid, workers=w),
        solver.s2_region(sc.probs, sc.traffic, grid),
        solver.conventional_region(sc.probs, sc.traffic, grid),
    ]
    if not any(len(c) for c in curves):
        raise InfeasibleError("no lambda_p in the sweep admits a stable system")
    rows = [r for c in curves for r in _curve_rows(c, sc.probs, sc.traffic)]
    return rows, curves


def _cmd_delay(sc):
    grid, w = sc.lambda_p_grid, _workers()
    curves, rows = [], []
    for D in sc.delays:
        for fb in ((False, True) if sc.feedback else (False,)):
            c = solver.stability_region(sc.probs, sc.traffic, grid, feedback=fb, ps_grid=sc.ps_grid,
                                        max_delay=D, workers=w)
            curves.append(c)
            rows.extend(_curve_rows(c, sc.probs, sc.traffic, delay=D))
    if not rows:
        raise InfeasibleError("no lambda_p in the sweep meets any delay bound")
    return rows, curves


def _cmd_simulate(sc):
    rep = sim.run(sc.sim, sc.policy, sc.probs, sc.traffic)
    row = _row("sim", sc.traffic, sc.policy, mu_p=rep.mu_p, mu_s=rep.mu_s, mu_e=rep.mu_e,
               d_p=rep.mean_delay_p, ci_half_width=rep.ci["mu_s"])
    return [row], []


_DEFAULT_CHECK_POLICY = AccessPolicy(p_s=0.3, p_t=0.6, p_f=0.9, p_b=0.2, p_r=0.5)


def validation_checks(sc) -> list[dict]:
    """Analytic-vs-solver and analytic-vs-simulation checks for the scenario's parameters."""
    probs, base = sc.probs, sc.traffic
    checks = []

    def add(name, expected, observed, tol, relative=False):
        err = abs(observed - expected) / (abs(expected) if relative else 1.0)
        checks.append(dict(check=name, expected=expected, observed=observed, tolerance=tol,
                           passed=bool(err <= tol)))

    for lam in (0.1, 0.3, 0.5):
        if lam >= probs.p_bar_p:
            continue
        cf = solver.closed_form_s1_ps0(probs, base, lam)
        op = solver.optimize_s1(probs, base, lam, ps_grid=[0.0], tol=sc.tol)
        add(f"closed_form_s1_ps0 lambda_p={lam}", cf.best_value, op.best_value, 1e-5)
        of = solver.optimize_sf1(probs, base, lam, ps_grid=[0.0], tol=sc.tol)
        if of.feasible:
            cff = solver.closed_form_sf_ps0(probs, base, lam, pr_grid=[of.best_policy.p_r])
            add(f"closed_form_sf_ps0 lambda_p={lam}", cff.best_value, of.best_value, 1e-5)

    policy = sc.policy if sc.policy != rates.SILENT else _DEFAULT_CHECK_POLICY
    lam = base.lambda_p if base.lambda_p > 0 else 0.3
    t = replace(base, lambda_p=lam)
    cfg = replace(sc.sim, dominance="saturate-secondary", energy_model="md1-approx", feedback_enabled=False)
    r1 = rates.s1_rates(policy, probs, t)
    if r1.stable and lam < r1.mu_p:
        rep = sim.run(cfg, policy, probs, t)
        add("sim S1 mu_p", r1.mu_p, rep.mu_p, 0.02, True)
        add("sim S1 mu_s", r1.mu_s, rep.mu_s, 0.02, True)
        add("sim S1 delay", rates.delay_s1(policy, probs, t).d_p, rep.mean_delay_p, 0.02, True)
    try:
        fc = rates.feedback_chain(policy, probs, t)
    except rates.UnstableError:
        fc = None
    if fc is not None and lam < fc.eta:
        rep = sim.run(replace(cfg, feedback_enabled=True), policy, probs, t)
        add("sim S1f mu_s", rates.sf1_secondary_rate(policy, probs, t), rep.mu_s, 0.02, True)
        add("sim S1f delay", rates.delay_sf1(policy, probs, t).d_p, rep.mean_delay_p, 0.02, True)
        for name, exp, obs in zip(("empty", "first", "retx"), (fc.pi0, fc.sum_pi, fc.sum_eps),
                                  rep.primary_states):
            se = rep.stderr[f"state_{name}"]
            add(f"sim S1f state {name} (3 se)", exp, obs, 3.0 * se)
    s2_mu_s = rates.s2_rates(policy, probs, replace(t, lambda_s=0.0)).mu_s
    if s2_mu_s > 0:
        t2 = replace(t, lambda_s=0.5 * s2_mu_s)
        r2 = rates.s2_rates(policy, probs, t2)
        rep = sim.run(replace(cfg, dominance="saturate-primary"), policy, probs, t2)
        add("sim S2 mu_p", r2.mu_p, rep.mu_p, 0.02, True)
        add("sim S2 mu_s", r2.mu_s, rep.mu_s, 0.02, True)
    return checks


def _cmd_validate(sc):
    return validation_checks(sc), []


_HANDLERS = {"rates": _cmd_rates, "optimize": _cmd_optimize, "region": _cmd_region, "delay": _cmd_delay,
             "simulate": _cmd_simulate, "validate": _cmd_validate}


def write_csv(path: Path, rows, columns=COLUMNS):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in columns])


def write_svg(path: Path, curves, title=""):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    for c in curves:
        if len(c):
            ax.plot(c.lambda_p, c.lambda_s_max, label=c.label)
    ax.set_xlabel("lambda_p (packets/slot)")
    ax.set_ylabel("max stable lambda_s (packets/slot)")
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def execute(sc: Scenario) -> int:
    """Run the scenario, write its artifacts, return the exit status."""
    try:
        sc.out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"output.dir: {exc}", "output.dir") from None
    rows, curves = _HANDLERS[sc.command](sc)
    if sc.command == "validate":
        write_csv(sc.out_dir / "validate.csv", rows, VALIDATE_COLUMNS)
        failed = [r["check"] for r in rows if not r["passed"]]
        if failed:
            _emit_error({"error": "validation", "failed": failed})
            return EXIT_VALIDATION
        return EXIT_OK
    write_csv(sc.out_dir / f"{sc.command}.csv", rows)
    if curves and sc.svg:
        write_svg(sc.out_dir / f"{sc.command}.svg", curves, sc.preset or "")
    return EXIT_OK


def _emit_error(record):
    print(json.dumps(record, sort_keys=True), file=sys.stderr)


def build_parser():
    ap = argparse.ArgumentParser(prog="ehcr", description="Energy-harvesting cognitive radio MAC analysis.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, type=Path)
    ap.add_argument("--out", type=Path)
    ap.add_argument("--seed", type=int)
    ap.add_argument("--slots", type=int)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        try:
            text = args.config.read_text(encoding="utf-8")
        except (OSError, UnicodeDecodeError) as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        sc = parse_config(text, args.command)
        simcfg = sc.sim
        try:
            if args.seed is not None:
                simcfg = replace(simcfg, seed=SCHEMA["sim.seed"](args.seed))
            if args.slots is not None:
                simcfg = replace(simcfg, num_slots=SCHEMA["sim.num_slots"](args.slots))
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"--seed/--slots: {exc}") from None
        sc = replace(sc, sim=simcfg, out_dir=args.out if args.out is not None else sc.out_dir)
        return execute(sc)
    except ConfigError as exc:
        _emit_error(exc.record())
        return EXIT_CONFIG
    except InfeasibleError as exc:
        _emit_error({"error": "infeasible", "message": str(exc)})
        return EXIT_INFEASIBLE
    except Exception as exc:  # noqa: BLE001
        _emit_error({"error": "internal", "type": type(exc).__name__, "message": str(exc)})
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
