"""Command-line front end.

Config files are flat ``section.key = value`` lines; ``#`` starts a comment.
Every output directory gets ``report.json`` holding the resolved config and a
format version, plus the CSV tables of the chosen subcommand.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import warnings
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import checks
from .core_state import ExperimentParams, PairConfiguration, quadrature_halfwidth
from .detection import (
    Bins,
    Histogram,
    SelectiveFilter,
    Side,
    antidiagonal_cells,
    bqm_ensemble,
    fringe_maxima,
    fringe_spacing,
    fringe_spacing_reference,
    marginal_chi2,
    selective_mask,
    sqm_conditional_s2_density,
    sqm_joint_grid,
    sqm_marginal_s1,
    sqm_quadrant_mass,
    sqm_same_side_probability,
    total_variation,
)
from .errors import ConfigParseError, NoFringesDetected, PhysicsError
from .guidance import ballistic_x, write_trajectories
from .integrator import IntegratorSettings, integrate_pair
from .sampler import SamplerSpec, sample_block

FORMAT_VERSION = 1
SUBCOMMANDS = ("trajectory", "ensemble", "sqm-joint", "selective", "compare", "validate")


@dataclass
class RunConfig:
    params: ExperimentParams = field(default_factory=ExperimentParams)
    sampler: SamplerSpec = field(default_factory=SamplerSpec)
    integrator: IntegratorSettings = field(default_factory=IntegratorSettings)
    n_pairs: int = 10_000
    workers: int = 1
    out: str = "out"
    histogram: Bins = Bins(-3.0, 3.0, 120)
    grid: Bins | None = None
    trajectory_count: int = 3
    keep_side_s1: Side = Side.UPPER

    def grid_bins(self) -> Bins:
        if self.grid is not None:
            return self.grid
        w = quadrature_halfwidth(self.params, self.params.arrival_time)
        return Bins(-w, w, 40)

    def resolved(self) -> dict:
        """Plain-dict form embedded in outputs; the worker count is left out
        because results do not depend on it."""
        g = self.grid_bins()
        return {
            "params": _plain(asdict(self.params)),
            "sampler": _plain(asdict(self.sampler)),
            "integrator": _plain(asdict(self.integrator)),
            "run": {"n_pairs": self.n_pairs},
            "histogram": {"lo": self.histogram.lo, "hi": self.histogram.hi, "nbins": self.histogram.nbins},
            "grid": {"lo": g.lo, "hi": g.hi, "nbins": g.nbins},
            "trajectory": {"count": self.trajectory_count},
            "selective": {"keep_side_s1": self.keep_side_s1.value},
        }


def _plain(d):
    return {k: (v.value if hasattr(v, "value") else v) for k, v in d.items()}


# config key -> value type
def _schema():
    s = {}
    for f in fields(ExperimentParams):
        s[f"params.{f.name}"] = str if f.name == "statistics" else float
    for f in fields(SamplerSpec):
        s[f"sampler.{f.name}"] = {"mode": str, "seed": int, "max_rejects": int}.get(f.name, float)
    for f in fields(IntegratorSettings):
        s[f"integrator.{f.name}"] = {"scheme": str, "max_steps": int}.get(f.name, float)
    s.update({
        "run.n_pairs": int, "run.workers": int, "run.out": str,
        "histogram.lo": float, "histogram.hi": float, "histogram.nbins": int,
        "grid.lo": float, "grid.hi": float, "grid.nbins": int,
        "trajectory.count": int, "selective.keep_side_s1": str,
    })
    return s


def parse_config_text(text: str) -> RunConfig:
    """Parse config text, raising ``ConfigParseError`` naming the line and key."""
    schema = _schema()
    values, where = {}, {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigParseError("expected 'section.key = value'", key=line, line=lineno)
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in schema:
            raise ConfigParseError("unknown key", key=key, line=lineno)
        if key in values:
            raise ConfigParseError("duplicate key", key=key, line=lineno)
        typ = schema[key]
        try:
            if typ is int:
                values[key] = int(val)
            elif typ is float:
                values[key] = float(val)
                if not math.isfinite(values[key]):
                    raise ValueError
            else:
                if not val:
                    raise ValueError
                values[key] = val
        except ValueError:
            raise ConfigParseError(f"cannot read {val!r} as {typ.__name__}", key=key, line=lineno) from None
        where[key] = lineno
    return build_config(values, where)


def build_config(values: dict, where: dict | None = None) -> RunConfig:
    where = where or {}

    def section(prefix, cls):
        kw = {k.split(".", 1)[1]: v for k, v in values.items() if k.startswith(prefix + ".")}
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                return cls(**kw)
        except ValueError as exc:
            key = next(iter(sorted(kw)), None)
            for k in kw:
                if k in str(exc):
                    key = k
            full = f"{prefix}.{key}" if key else prefix
            raise ConfigParseError(str(exc), key=full, line=where.get(full)) from None

    cfg = RunConfig(
        params=section("params", ExperimentParams),
        sampler=section("sampler", SamplerSpec),
        integrator=section("integrator", IntegratorSettings),
    )

    def get(key, default):
        return values.get(key, default)

    def bins(prefix, default):
        keys = [f"{prefix}.{k}" for k in ("lo", "hi", "nbins")]
        if default is None and not any(k in values for k in keys):
            return None
        if default is None:
            missing = [k for k in keys if k not in values]
            if missing:
                raise ConfigParseError("grid needs lo, hi and nbins together", key=missing[0])
            default = Bins(0.0, 1.0, 2)
        b = Bins(float(get(keys[0], default.lo)), float(get(keys[1], default.hi)), int(get(keys[2], default.nbins)))
        if b.nbins < 2:
            raise ConfigParseError("need at least two bins", key=keys[2], line=where.get(keys[2]))
        if not b.hi > b.lo:
            raise ConfigParseError("hi must exceed lo", key=keys[1], line=where.get(keys[1]))
        return b

    cfg.n_pairs = int(get("run.n_pairs", cfg.n_pairs))
    cfg.workers = int(get("run.workers", cfg.workers))
    cfg.out = str(get("run.out", cfg.out))
    cfg.histogram = bins("histogram", cfg.histogram)
    cfg.grid = bins("grid", None)
    cfg.trajectory_count = int(get("trajectory.count", cfg.trajectory_count))
    for key, val in (("run.n_pairs", cfg.n_pairs), ("run.workers", cfg.workers), ("trajectory.count", cfg.trajectory_count)):
        if val < 1:
            raise ConfigParseError("must be >= 1", key=key, line=where.get(key))
    try:
        cfg.keep_side_s1 = Side(get("selective.keep_side_s1", cfg.keep_side_s1))
    except ValueError:
        raise ConfigParseError("must be 'upper' or 'lower'", key="selective.keep_side_s1",
                               line=where.get("selective.keep_side_s1")) from None
    try:
        cfg.sampler.check(cfg.params)
    except ValueError as exc:
        raise ConfigParseError(str(exc), key="sampler.y0_sigma", line=where.get("sampler.y0_sigma")) from None
    return cfg


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigParseError(f"cannot read config: {exc.strerror}", key=str(path)) from None
    return parse_config_text(text)


# ---------------------------------------------------------------------------
# output helpers


def _num(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, dict):
        return {k: _num(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_num(v) for v in x]
    return x


def write_report(out: Path, cfg: RunConfig, command: str, results: dict) -> None:
    doc = {"format_version": FORMAT_VERSION, "command": command, "config": cfg.resolved(), "results": _num(results)}
    (out / "report.json").write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def _csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def write_events(path: Path, ens) -> None:
    _csv(path, ("pair_id", "y_s1", "y_s2", "t_arrive", "y1_start", "y2_start"),
         ((int(i), a, b, ens.t_arrive, c, d)
          for i, a, b, c, d in zip(ens.pair_id, ens.y_s1, ens.y_s2, ens.y1_start, ens.y2_start)))


def write_histogram(path: Path, h: Histogram) -> None:
    _csv(path, ("lo", "hi", "count", "density"), h.rows())


def write_joint_grid(path: Path, b1: Bins, b2: Bins, sqm=None, bqm=None) -> None:
    e1, e2 = b1.edges, b2.edges
    cols = ["y1_lo", "y1_hi", "y2_lo", "y2_hi"]
    if sqm is not None:
        cols.append("sqm_prob")
    if bqm is not None:
        cols.append("bqm_count")
    rows = []
    for i in range(b1.nbins):
        for j in range(b2.nbins):
            row = [e1[i], e1[i + 1], e2[j], e2[j + 1]]
            if sqm is not None:
                row.append(sqm[i, j])
            if bqm is not None:
                row.append(int(bqm[i, j]))
            rows.append(row)
    _csv(path, cols, rows)


def _hist_summary(h: Histogram) -> dict:
    return {"total": int(h.total), "in_range": int(np.sum(h.counts)),
            "underflow": int(h.underflow), "overflow": int(h.overflow)}


def _ensemble(cfg: RunConfig):
    return bqm_ensemble(cfg.params, cfg.sampler, cfg.n_pairs, cfg.integrator, workers=cfg.workers)


def _ensemble_summary(ens) -> dict:
    return {
        "n_requested": ens.n_requested,
        "n_events": int(len(ens.y_s1)),
        "excluded": dict(sorted(ens.excluded.items())),
        "excluded_fraction": ens.excluded_fraction,
        "acceptance_rate": ens.acceptance_rate,
        "t_arrive": ens.t_arrive,
        "slit_side_correlation": ens.side_correlation(),
        "same_side_events": int(np.sum(ens.y_s1 * ens.y_s2 > 0)),
        "max_abs_y_s1_plus_y_s2": float(np.max(np.abs(ens.y_s1 + ens.y_s2))) if len(ens.y_s1) else None,
    }


def joint_counts(y1, y2, b1: Bins, b2: Bins) -> np.ndarray:
    counts, _, _ = np.histogram2d(y1, y2, bins=(b1.nbins, b2.nbins), range=((b1.lo, b1.hi), (b2.lo, b2.hi)))
    return counts.astype(np.int64)


# ---------------------------------------------------------------------------
# subcommands


def cmd_trajectory(cfg: RunConfig, out: Path) -> int:
    p = cfg.params
    batch = sample_block(p, cfg.sampler, 0, cfg.trajectory_count)
    x1, x2 = ballistic_x(p, 0.0)
    trajs = [integrate_pair(p, PairConfiguration(float(x1), float(a), float(x2), float(b), 0.0), p.arrival_time, cfg.integrator)
             for a, b in zip(batch.y1, batch.y2)]
    write_trajectories(out / "trajectories.csv", trajs)
    write_report(out, cfg, "trajectory", {
        "pairs": [{"pair_id": i, "y1_start": tr.y1[0], "y2_start": tr.y2[0], "y1_end": tr.y1[-1],
                   "y2_end": tr.y2[-1], "steps": len(tr) - 1} for i, tr in enumerate(trajs)],
    })
    return 0


def cmd_ensemble(cfg: RunConfig, out: Path) -> int:
    ens = _ensemble(cfg)
    h1 = Histogram.from_values(ens.y_s1, cfg.histogram)
    h2 = Histogram.from_values(ens.y_s2, cfg.histogram)
    write_events(out / "events.csv", ens)
    write_histogram(out / "hist_s1.csv", h1)
    write_histogram(out / "hist_s2.csv", h2)
    write_report(out, cfg, "ensemble", {"ensemble": _ensemble_summary(ens),
                                        "hist_s1": _hist_summary(h1), "hist_s2": _hist_summary(h2)})
    return 0


def cmd_sqm_joint(cfg: RunConfig, out: Path) -> int:
    g = cfg.grid_bins()
    grid = sqm_joint_grid(cfg.params, g)
    write_joint_grid(out / "joint_grid.csv", g, g, sqm=grid)
    write_report(out, cfg, "sqm-joint", {
        "grid_mass": float(grid.sum()),
        "same_side_probability": sqm_same_side_probability(cfg.params),
        "off_antidiagonal_mass": float(grid[~antidiagonal_cells(g, g)].sum()),
    })
    return 0


def selective_summary(cfg: RunConfig, ens) -> tuple[dict, Histogram, Histogram, int]:
    """Filter an ensemble and contrast it with the SQM conditional density."""
    p = cfg.params
    flt = SelectiveFilter(cfg.keep_side_s1)
    keep = selective_mask(ens.y_s1, flt)
    ties = int(np.sum(ens.y_s1 == 0.0))
    kept_s2 = ens.y_s2[keep]
    h2 = Histogram.from_values(kept_s2, cfg.histogram)
    cond = sqm_conditional_s2_density(p, flt, cfg.histogram)
    partner_side = kept_s2 > 0 if flt.keep_side_s1 is Side.UPPER else kept_s2 < 0
    up = sqm_quadrant_mass(p, flt.keep_side_s1, Side.UPPER)
    down = sqm_quadrant_mass(p, flt.keep_side_s1, Side.LOWER)
    ref = fringe_spacing_reference(p, p.arrival_time)
    small = np.abs(ens.y_s1[keep] + kept_s2) / 2.0 < ref
    res = {
        "kept": int(keep.sum()),
        "ties": ties,
        "bqm_same_side_as_filter_fraction": float(partner_side.mean()) if len(kept_s2) else None,
        "bqm_upper_s2_fraction": float(np.mean(kept_s2 > 0)) if len(kept_s2) else None,
        "sqm_upper_s2_mass": up / (up + down),
        "sqm_lower_s2_mass": down / (up + down),
        "fringe_reference": ref,
        "smallness_fraction": float(small.mean()) if len(small) else None,
    }
    code = 0
    try:
        res["fringe_maxima"] = [float(v) for v in fringe_maxima(h2)]
        res["fringe_spacing"] = fringe_spacing(h2)
        res["fringe_relative_error"] = abs(res["fringe_spacing"] - ref) / ref
    except NoFringesDetected as exc:
        res["fringe_spacing"] = None
        res["fringe_error"] = str(exc)
        code = 1
    return res, h2, cond, code


def cmd_selective(cfg: RunConfig, out: Path) -> int:
    ens = _ensemble(cfg)
    res, h2, cond, code = selective_summary(cfg, ens)
    write_events(out / "events.csv", ens)
    write_histogram(out / "hist_s1.csv", Histogram.from_values(ens.y_s1, cfg.histogram))
    write_histogram(out / "hist_s2.csv", h2)
    _csv(out / "sqm_conditional_s2.csv", ("lo", "hi", "probability", "density"), cond.rows())
    write_report(out, cfg, "selective", {"ensemble": _ensemble_summary(ens), "selective": res})
    if code:
        print(f"error: {res['fringe_error']}", file=sys.stderr)
    return code


def compare_summary(cfg: RunConfig, ens) -> tuple[dict, np.ndarray, np.ndarray, np.ndarray]:
    """Side-by-side SQM and BQM statistics of one ensemble."""
    p = cfg.params
    g = cfg.grid_bins()
    sqm = sqm_joint_grid(p, g)
    bqm = joint_counts(ens.y_s1, ens.y_s2, g, g)
    n = len(ens.y_s1)
    off = ~antidiagonal_cells(g, g)
    bqm_p = bqm / n if n else np.zeros_like(sqm)
    bqm_out = (n - int(bqm.sum())) / n if n else 0.0
    sqm_out = max(1.0 - float(sqm.sum()), 0.0)
    marg = sqm_marginal_s1(p, cfg.histogram)
    h1 = Histogram.from_values(ens.y_s1, cfg.histogram)
    obs = np.append(h1.counts, h1.underflow + h1.overflow)
    chi2, pval, dof = marginal_chi2(obs, marg)
    res = {
        "bqm_same_side_events": int(np.sum(ens.y_s1 * ens.y_s2 > 0)),
        "sqm_same_side_probability": sqm_same_side_probability(p),
        "bqm_off_antidiagonal_events": int(bqm[off].sum()),
        "sqm_off_antidiagonal_mass": float(sqm[off].sum()),
        "total_variation": total_variation(np.append(bqm_p.ravel(), bqm_out), np.append(sqm.ravel(), sqm_out)),
        "marginal_chi2": {"statistic": chi2, "p_value": pval, "dof": dof},
    }
    return res, sqm, bqm, h1


def cmd_compare(cfg: RunConfig, out: Path) -> int:
    ens = _ensemble(cfg)
    res, sqm, bqm, h1 = compare_summary(cfg, ens)
    g = cfg.grid_bins()
    write_events(out / "events.csv", ens)
    write_histogram(out / "hist_s1.csv", h1)
    write_histogram(out / "hist_s2.csv", Histogram.from_values(ens.y_s2, cfg.histogram))
    write_joint_grid(out / "joint_grid.csv", g, g, sqm=sqm, bqm=bqm)
    write_report(out, cfg, "compare", {"ensemble": _ensemble_summary(ens), "compare": res})
    return 0


def cmd_validate(cfg: RunConfig, out: Path) -> int:
    results = checks.run_all(cfg.params, cfg.integrator, seed=cfg.sampler.seed, workers=cfg.workers)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name}: {r.detail}")
    write_report(out, cfg, "validate", {"checks": [{"name": r.name, "passed": r.passed, "detail": r.detail}
                                                   for r in results]})
    return 0 if all(r.passed for r in results) else 1


COMMANDS = {
    "trajectory": cmd_trajectory,
    "ensemble": cmd_ensemble,
    "sqm-joint": cmd_sqm_joint,
    "selective": cmd_selective,
    "compare": cmd_compare,
    "validate": cmd_validate,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="twoslit", description="Two-particle two-slit simulator (SQM vs BQM)")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="flat 'section.key = value' config file")
        sp.add_argument("--seed", type=int, help="sampler seed (overrides the config)")
        sp.add_argument("--out", help="output directory (overrides run.out)")
        sp.add_argument("--workers", type=int, help="worker processes (overrides run.workers)")
    return ap


def run_subcommand(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else RunConfig()
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigParseError("seed must be non-negative", key="--seed")
            cfg.sampler = replace(cfg.sampler, seed=args.seed)
        if args.workers is not None:
            if args.workers < 1:
                raise ConfigParseError("must be >= 1", key="--workers")
            cfg.workers = args.workers
        if args.out is not None:
            cfg.out = args.out
        out = Path(cfg.out)
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigParseError(f"cannot create output directory: {exc.strerror}", key="run.out") from None
        return COMMANDS[args.command](cfg, out)
    except ConfigParseError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except PhysicsError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_subcommand())


if __name__ == "__main__":
    main()
