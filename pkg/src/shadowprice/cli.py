"""Command-line front end.

    shadowprice counterexample --kmax 20 --mode unconstrained --endowment 4,-1 --output ce.json
    shadowprice diagnose --input ce.json
    shadowprice shadow --input ce_ns.json --format structured

Exit status: 0 when a verdict or report is produced, 1 on invalid input,
2 when a solver fails.
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass

import numpy as np

from . import serialize
from . import shadow as sh
from .optimize import (GAP_RTOL, SolveError, TooLarge, brute_force_value, lipschitz_constant,
                       solve)
from .scenario import (ScenarioError, build_counterexample, load_scenario, save_scenario)
from .utility import UtilitySpec

COMMANDS = ("validate", "solve", "shadow", "pins", "diagnose", "scps", "arbitrage",
            "counterexample")


class UsageError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    input: str | None = None
    output: str | None = None
    n: int = 10
    kmax: int = 20
    endowment: tuple = (4.0, -1.0)
    mode: str = "unconstrained"
    utility: str = "log"
    p: float | None = None
    grid: float | None = None
    tol_gap: float = GAP_RTOL
    tol_check: float = sh.CERT_RTOL
    format: str = "text"

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise UsageError(f"unknown command {self.command!r}")
        for name in ("tol_gap", "tol_check"):
            if not getattr(self, name) > 0:
                raise UsageError(f"--{name.replace('_', '-')} must be positive")
        if self.grid is not None and not self.grid > 0:
            raise UsageError("--grid must be positive")
        if self.command != "counterexample" and not self.input:
            raise UsageError(f"{self.command} needs --input")

    def tolerances(self) -> dict:
        return {"gap": self.tol_gap, "check": self.tol_check, "pin": sh.PIN_TOL,
                "martingale": sh.MARTINGALE_TOL, "margin": sh.DELTA_TOL}


def _floats(text: str) -> tuple:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated decimals, got {text!r}") from e


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="shadowprice", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--input")
    ap.add_argument("--output")
    ap.add_argument("--n", type=int, default=10)
    ap.add_argument("--kmax", type=int, default=20)
    ap.add_argument("--endowment", type=_floats, default=(4.0, -1.0))
    ap.add_argument("--mode", choices=("no_short", "unconstrained"), default="unconstrained")
    ap.add_argument("--utility", choices=("log", "power"), default="log")
    ap.add_argument("--p", type=float)
    ap.add_argument("--grid", type=float)
    ap.add_argument("--tol-gap", type=float, default=GAP_RTOL)
    ap.add_argument("--tol-check", type=float, default=sh.CERT_RTOL)
    ap.add_argument("--format", choices=("text", "structured"), default="text")
    return ap


def _load(cfg: RunConfig):
    try:
        with open(cfg.input, "rb") as fh:
            return load_scenario(fh.read())
    except OSError as e:
        raise UsageError(f"cannot read {cfg.input}: {e.strerror}") from e


def _holdings(v) -> list:
    return [list(map(float, h)) for h in v.holdings]


def _solve_section(r) -> dict:
    return {"value": r.value, "gap": r.gap, "iterations": r.iterations,
            "holdings": _holdings(r.strategy),
            "payoff": [{"leaf": k, "f": v} for k, v in sorted(r.payoff.items())]}


def _pins(pins) -> list:
    return [{"node": p.node, "pay": p.i + 1, "receive": p.j + 1} for p in pins]


def cmd_validate(cfg, s):
    return {"valid": True, "nodes": s.tree.size, "d": s.d, "T": s.tree.T, "mode": s.mode,
            "utility": s.utility.to_dict()}


def cmd_solve(cfg, s):
    r = solve(s, tol_gap=cfg.tol_gap)
    out = _solve_section(r)
    if cfg.grid is not None:
        b = brute_force_value(s, cfg.grid)
        out["brute_force"] = {"grid": cfg.grid, "value": b, "difference": r.value - b,
                              "bound": lipschitz_constant(s) * cfg.grid}
    return out


def cmd_shadow(cfg, s):
    r = solve(s, tol_gap=cfg.tol_gap)
    z = sh.extract_shadow(s, r, tol_gap=cfg.tol_gap)
    ver = sh.verify_price_system(s, z)
    cert = sh.certify_shadow(s, z, r, tol=cfg.tol_check)
    fr = sh.frictionless_solve(s, z)
    diff = fr.value - r.value
    return {"value": r.value, "gap": r.gap, "verification": ver.to_dict(),
            "certificate": cert.to_dict(),
            "frictionless": {"value": fr.value, "difference": diff,
                             "passed": bool(abs(diff) <= cfg.tol_check)},
            "prices": [list(map(float, row)) for row in z.prices()],
            "shadow_price": bool(ver.ok and cert.ok and abs(diff) <= cfg.tol_check)}


def cmd_pins(cfg, s):
    r = solve(s, tol_gap=cfg.tol_gap)
    return {"value": r.value, "pins": _pins(sh.pin_constraints(s, r))}


def cmd_diagnose(cfg, s):
    r = solve(s, tol_gap=cfg.tol_gap)
    pins = sh.pin_constraints(s, r)
    kind = "martingale" if s.mode == "unconstrained" else "supermartingale"
    res = sh.find_pinned_price_system(s, pins, kind)
    out = {"value": r.value, "kind": kind, "pins": _pins(pins)}
    if isinstance(res, sh.PriceSystem):
        out["verdict"] = f"pinned {kind} price system exists (margin {res.delta:.6g})"
        out["exists"] = True
        out["price_system"] = res.to_dict()
    else:
        out["verdict"] = f"no shadow price: pinned {kind} system infeasible"
        out["detail"] = ("no price system of the required kind satisfies the pins of the "
                         "unique optimal payoff")
        out["exists"] = False
        out["certificate"] = res.to_dict()
    return out


def cmd_scps(cfg, s):
    ps = sh.find_scps(s)
    if ps is None:
        return {"found": False}
    return {"found": True, "price_system": ps.to_dict()}


def cmd_arbitrage(cfg, s):
    if not all(M.is_frictionless() for M in s.bid_ask):
        raise UsageError("arbitrage needs a frictionless scenario (price map pi[1, j])")
    S = np.array([M.pi[0] for M in s.bid_ask])
    v = sh.detect_arbitrage(s, S, s.mode)
    if isinstance(v, sh.Arbitrage):
        return {"verdict": "arbitrage", "gain": v.gain, "holdings": _holdings(v),
                "wealth": list(map(float, v.wealth))}
    if isinstance(v, sh.NoArbitrage):
        return {"verdict": "no arbitrage", "margin": v.delta,
                "density": list(map(float, v.density))}
    return {"verdict": "boundary", "margin": v.delta}


def cmd_counterexample(cfg):
    u = UtilitySpec(cfg.utility, cfg.p)
    return build_counterexample(cfg.n, cfg.kmax, cfg.endowment, cfg.mode, u)


HANDLERS = {"validate": cmd_validate, "solve": cmd_solve, "shadow": cmd_shadow, "pins": cmd_pins,
            "diagnose": cmd_diagnose, "scps": cmd_scps, "arbitrage": cmd_arbitrage}


def render_text(report: dict, prefix: str = "") -> str:
    lines = []
    for k, v in report.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            lines.append(render_text(v, key + "."))
        elif isinstance(v, list) and v and isinstance(v[0], dict):
            for i, item in enumerate(v):
                lines.append(f"{key}[{i}]: " + ", ".join(f"{a}={_fmt(b)}" for a, b in item.items()))
        else:
            lines.append(f"{key}: {_fmt(v)}")
    return "\n".join(line for line in lines if line)


def _fmt(v) -> str:
    if isinstance(v, float):
        return format(v, ".10g")
    if isinstance(v, list):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    return str(v)


def run(cfg: RunConfig) -> tuple[int, bytes]:
    """Execute one command; returns (exit status, report bytes)."""
    report = {"command": cfg.command, "tolerances": cfg.tolerances()}
    status = 0
    try:
        if cfg.command == "counterexample":
            s = cmd_counterexample(cfg)
            return 0, save_scenario(s)
        s = _load(cfg)
        report["scenario"] = cfg.input
        report.update(HANDLERS[cfg.command](cfg, s))
    except (ScenarioError, UsageError, TooLarge, ValueError) as e:
        status = 1
        report["error"] = {"kind": type(e).__name__, "message": str(e)}
        node = getattr(e, "node", None)
        if node is not None:
            report["error"]["node"] = node
    except (SolveError, sh.ShadowError) as e:
        status = 2
        report["error"] = {"kind": type(e).__name__, "message": str(e)}
    if cfg.format == "structured":
        return status, serialize.dump_bytes(report)
    return status, (render_text(report) + "\n").encode()


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    fields = vars(args)
    try:
        cfg = RunConfig(**fields)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    status, out = run(cfg)
    if cfg.output:
        with open(cfg.output, "wb") as fh:
            fh.write(out)
    else:
        sys.stdout.buffer.write(out)
        sys.stdout.flush()
    return status


if __name__ == "__main__":
    sys.exit(main())
