"""Command-line experiment harness.

Subcommands ``simulate``, ``verify``, ``sofic``, ``fed`` and ``diagnose`` read a
JSON configuration, write CSV tables and JSON reports into ``--out``, and exit
with 0 (ok), 1 (a check failed) or 2 (bad configuration).
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import json
import math
import os
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .cayley import GroupSpec, build_ball
from .diagnostics import gibbs_conditional_check
from .dynamics import Glauber, sample_trajectory
from .fed import SoficSequence, fed_bounds_check, fed_estimate, fed_via_logZ
from .homgraph import Delta, HomGraph
from .model import SpinModel, gibbs_finite, microstate_index
from .state import (ChainGibbs, ExplicitMarginals, PatternDistribution, ProductMeasure,
                    empirical_state, product_dense)
from .suites import SUITES

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2


class ConfigError(ValueError):
    """A configuration problem, located by JSON path and (when found) line."""

    def __init__(self, path: str, message: str, line: int | None = None):
        self.path, self.message, self.line = path, message, line
        where = f"line {line}: " if line else ""
        super().__init__(f"{where}{path}: {message}")


# --- configuration -----------------------------------------------------------------

def _locate(text: str, path: str) -> int | None:
    """Line of the last key of ``path`` found after its parents in ``text``."""
    pos = 0
    for key in [p for p in re.split(r"[.\[\]]", path) if p and not p.isdigit()]:
        m = re.compile(r'"%s"\s*:' % re.escape(key)).search(text, pos)
        if m is None:
            return None
        pos = m.start()
    return text.count("\n", 0, pos) + 1


def _locate_cell(text: str, key_path: str, row: int) -> int | None:
    """Line holding row ``row`` of the nested list stored under ``key_path``."""
    line = _locate(text, key_path)
    if line is None:
        return None
    pos = sum(len(s) + 1 for s in text.split("\n")[: line - 1])
    key = key_path.rsplit(".", 1)[-1]
    start = text.find("[", text.find(":", text.find(f'"{key}"', pos)))
    if start < 0:
        return line
    at = start
    for _ in range(row + 1):
        at = text.find("[", at + 1)
        if at < 0:
            return line
    return text.count("\n", 0, at) + 1


class ExperimentConfig:
    """Validated view of a JSON experiment configuration."""

    def __init__(self, raw: dict, text: str = ""):
        self.raw = raw
        self.text = text
        try:
            self.spec = GroupSpec.from_dict(raw.get("group", {"family": "free", "r": 1}))
        except (ValueError, KeyError, TypeError) as exc:
            raise self.error("group", str(exc)) from None
        try:
            self.model = SpinModel.from_dict(raw.get("model", {"preset": "ising", "beta": 0.5}))
        except (ValueError, KeyError, TypeError) as exc:
            cell = re.search(r"J\[(\d+),(\d+)\]", str(exc))
            if cell:
                a, b = int(cell.group(1)), int(cell.group(2))
                line = _locate_cell(text, "model.J", a)
                raise ConfigError(f"model.J[{a}][{b}]", str(exc), line) from None
            path = "model.J" if "J" in str(exc) else "model"
            raise self.error(path, str(exc)) from None
        self.homs_cfg = raw.get("homs", {"kind": "cycles", "sizes": [4]})
        self.dyn = raw.get("dynamics", {})
        self.fed_cfg = raw.get("fed", {})
        self.sofic_cfg = raw.get("sofic", {})
        self.diag_cfg = raw.get("diagnose", {})
        self.verify_cfg = raw.get("verify", {})
        try:
            self.sequence = self._sequence()
        except (ValueError, KeyError, TypeError) as exc:
            raise self.error("homs", str(exc)) from None

    def error(self, path: str, message: str) -> ConfigError:
        return ConfigError(path, message, _locate(self.text, path))

    @classmethod
    def load(cls, path: str | os.PathLike, seed_override: int | None = None) -> "ExperimentConfig":
        text = Path(path).read_text()
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError("<root>", exc.msg, exc.lineno) from None
        if not isinstance(raw, dict):
            raise ConfigError("<root>", "the configuration must be a JSON object", 1)
        if seed_override is not None:
            raw = apply_seed_override(raw, seed_override)
        return cls(raw, text)

    @property
    def hash(self) -> str:
        blob = json.dumps(self.raw, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def _sequence(self) -> SoficSequence:
        h = self.homs_cfg
        kind = h.get("kind", "cycles")
        if kind == "explicit":
            homs = [HomGraph.from_dict(d) for d in h.get("homs", [])]
            if not homs:
                raise ValueError("explicit hom list is empty")
            return SoficSequence("explicit", self.spec, homs=homs)
        sizes = h.get("sizes") or h.get("dims")
        if not sizes:
            raise ValueError(f"hom source {kind!r} needs a nonempty 'sizes' list")
        seq = SoficSequence(kind, self.spec, sizes=[tuple(s) if isinstance(s, list) else int(s) for s in sizes],
                            seeds=[int(s) for s in h.get("seeds", [])])
        seq.members()
        return seq

    def target(self):
        t = self.fed_cfg.get("target", {"kind": "chain_gibbs"})
        kind = t.get("kind")
        if kind == "product":
            return ProductMeasure(tuple(t["p"]))
        if kind == "chain_gibbs":
            return ChainGibbs(self.model)
        if kind == "explicit":
            ball = build_ball(self.spec, int(t["radius"]))
            return ExplicitMarginals(PatternDistribution.from_rows(
                ball, self.model.k, t["patterns"], t.get("weights")))
        raise self.error("fed.target.kind", f"unknown target kind {kind!r}")


def apply_seed_override(raw: dict, seed: int) -> dict:
    raw = copy.deepcopy(raw)
    raw.setdefault("dynamics", {})["seed"] = seed
    homs = raw.get("homs", {})
    if homs.get("kind") == "random":
        count = len(homs.get("seeds", [0])) or 1
        homs["seeds"] = [seed + i for i in range(count)]
    return raw


# --- output helpers ------------------------------------------------------------------

def _header(cfg: ExperimentConfig) -> str:
    return f"# config_hash={cfg.hash} version={__version__}\n"


def _fmt(v) -> str:
    if isinstance(v, float):
        return "inf" if v == math.inf else repr(v)
    return str(v)


def write_csv(path: Path, cfg: ExperimentConfig, header: list[str], rows) -> None:
    buf = io.StringIO()
    buf.write(_header(cfg))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        values = [row[h] for h in header] if isinstance(row, dict) else row
        w.writerow([_fmt(v) for v in values])
    path.write_text(buf.getvalue())


def write_json(path: Path, cfg: ExperimentConfig, payload: dict) -> None:
    body = {"config_hash": cfg.hash, "version": __version__, **payload}
    path.write_text(json.dumps(body, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _pmap(fn, items, workers: int):
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# --- commands ----------------------------------------------------------------------

def _initial_state(cfg: ExperimentConfig, n: int) -> np.ndarray:
    init = cfg.dyn.get("initial", {"kind": "uniform"})
    k = cfg.model.k
    kind = init.get("kind")
    if kind == "uniform":
        return np.full(k ** n, 1.0 / k ** n)
    if kind == "product":
        return product_dense(np.tile(np.asarray(init["p"], dtype=float), (n, 1)))
    if kind == "micro":
        x = np.asarray(init["x"], dtype=np.int64)
        if x.shape != (n,):
            raise cfg.error("dynamics.initial.x", f"microstate must have {n} letters")
        z = np.zeros(k ** n)
        z[microstate_index(x, k)] = 1.0
        return z
    raise cfg.error("dynamics.initial.kind", f"unknown initial state kind {kind!r}")


def cmd_simulate(cfg: ExperimentConfig, out: Path, workers: int) -> int:
    times = [float(t) for t in cfg.dyn.get("times", [0.0, 0.5, 1.0])]
    dt = float(cfg.dyn.get("dt", 1e-3))
    runs = int(cfg.dyn.get("trajectories", 0))
    seed = int(cfg.dyn.get("seed", 0))
    summary = []
    for label, hom in cfg.sequence.members():
        g = Glauber(cfg.model, hom)
        z0 = _initial_state(cfg, hom.n)
        for t, z in zip(times, g.evolve_path(z0, times, dt)):
            probs = {str(i): float(p) for i, p in enumerate(z) if p > 0}
            write_json(out / f"state_n{hom.n}_t{t:g}.json", cfg,
                       {"n": hom.n, "t": t, "free_energy": g.free_energy(z), "probs": probs})
            summary.append({"member": label, "n": hom.n, "t": t, "free_energy": g.free_energy(z)})
        if runs:
            init = cfg.dyn.get("initial", {})
            x0 = np.asarray(init.get("x", np.zeros(hom.n, dtype=int)))
            for r in range(runs):
                _, events = sample_trajectory(cfg.model, hom, x0, times[-1], seed + r)
                write_csv(out / f"trajectory_n{hom.n}_run{r}.csv", cfg, ["time", "site", "new_letter"],
                          [(e.time, e.site, e.new_letter) for e in events])
    write_csv(out / "free_energy.csv", cfg, ["member", "n", "t", "free_energy"], summary)
    return EXIT_OK


def _delta_row(args):
    label, hom, spec, R_max = args
    D = Delta(hom, spec, R_max)
    return {"member": label, "n": hom.n, "R_star": D.argmin_R,
            "deltas": ";".join(repr(d) for d in D.deltas), "Delta": D.value, "slack": D.slack}


def cmd_sofic(cfg: ExperimentConfig, out: Path, workers: int) -> int:
    R_max = int(cfg.sofic_cfg.get("R_max", cfg.spec.r_max))
    members = cfg.sequence.members()
    rows = _pmap(_delta_row, [(label, h, cfg.spec, R_max) for label, h in members], workers)
    write_csv(out / "sofic.csv", cfg, ["member", "n", "R_star", "deltas", "Delta", "slack"], rows)
    by_n: dict[int, list[float]] = {}
    for row in rows:
        by_n.setdefault(row["n"], []).append(row["Delta"])
    medians = {str(n): float(np.median(v)) for n, v in sorted(by_n.items())}
    write_json(out / "sofic_summary.json", cfg, {"R_max": R_max, "median_Delta": medians})
    return EXIT_OK


def cmd_fed(cfg: ExperimentConfig, out: Path, workers: int) -> int:
    R = int(cfg.fed_cfg.get("R", 2))
    eps = [float(e) for e in cfg.fed_cfg.get("epsilons", [0.3, 0.2, 0.15])]
    est = fed_estimate(cfg.sequence, cfg.model, cfg.target(), eps, R)
    write_csv(out / "fed_table.csv", cfg, ["n", "epsilon", "R", "value_or_inf", "status", "residual"],
              est.rows())
    r = cfg.spec.r
    bounds = all(fed_bounds_check(c.value, cfg.model, r) for c in est.cells)
    summary = {
        "headline": "inf" if est.headline == math.inf else est.headline,
        "headline_cell": None if est.headline_cell is None else est.headline_cell.row(),
        "monotone_in_eps": est.monotone,
        "bounds_ok": bounds,
    }
    try:
        summary["fed_via_logZ"] = fed_via_logZ(cfg.sequence, cfg.model)
    except ValueError as exc:
        summary["fed_via_logZ"] = f"unavailable: {exc}"
    write_json(out / "fed_summary.json", cfg, summary)
    return EXIT_OK if (est.monotone and bounds) else EXIT_FAILED


def cmd_diagnose(cfg: ExperimentConfig, out: Path, workers: int) -> int:
    R = int(cfg.diag_cfg.get("R", 2))
    tol = float(cfg.diag_cfg.get("tol", 1e-8))
    source = cfg.diag_cfg.get("source", "target")
    ball = build_ball(cfg.spec, R)
    reports = {}
    if source == "target":
        reports["target"] = gibbs_conditional_check(cfg.target().marginal(ball), cfg.model, tol, cfg.spec)
    elif source == "gibbs":
        for label, hom in cfg.sequence.members():
            xi, _ = gibbs_finite(cfg.model, hom)
            mu = empirical_state(hom, xi, R, ball, cfg.model.k)
            reports[label] = gibbs_conditional_check(mu, cfg.model, tol, cfg.spec)
    else:
        raise cfg.error("diagnose.source", f"unknown source {source!r}")
    write_json(out / "gibbs_report.json", cfg, {k: v.to_dict() for k, v in reports.items()})
    return EXIT_OK


def cmd_verify(cfg: ExperimentConfig, out: Path, workers: int, suite: str) -> int:
    params = cfg.verify_cfg.get(suite, {})
    try:
        result = SUITES[suite](**params)
    except TypeError as exc:
        raise cfg.error(f"verify.{suite}", str(exc)) from None
    write_json(out / f"verify_{suite}.json", cfg, result.to_dict())
    print(result.summary())
    return EXIT_OK if result.passed else EXIT_FAILED


# --- entry point -----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="JSON experiment configuration")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--workers", type=int, default=os.cpu_count() or 1,
                        help="parallel workers for independent cells (1 = serial)")
    common.add_argument("--seed-override", type=int, default=None,
                        help="replace every seed in the configuration")
    parser = argparse.ArgumentParser(prog="glauber-sofic", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="exact state snapshots and sampled paths")
    v = sub.add_parser("verify", parents=[common], help="run a verification suite")
    v.add_argument("suite", choices=sorted(SUITES))
    sub.add_parser("sofic", parents=[common], help="local similarity table of the configured actions")
    sub.add_parser("fed", parents=[common], help="free energy density table")
    sub.add_parser("diagnose", parents=[common], help="depth-R Gibbs report")
    return parser


COMMANDS = {"simulate": cmd_simulate, "sofic": cmd_sofic, "fed": cmd_fed, "diagnose": cmd_diagnose}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = ExperimentConfig.load(args.config, args.seed_override)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        workers = max(1, args.workers)
        if args.command == "verify":
            return cmd_verify(cfg, out, workers, args.suite)
        return COMMANDS[args.command](cfg, out, workers)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
