"""Command line front end.

    randwidth sweep --law gaussian --model gaussian --n 8 --N 64,256,1024 --seed 1

Every run writes ``<out>.csv`` and ``<out>.manifest.json``.  Settings come
from built-in defaults, then a flat ``key=value`` config file (``--config``
or the ``RANDWIDTH_CONFIG`` environment variable), then flags.

Exit codes: 0 success, 2 usage error, 3 numeric or I/O failure.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import math
import os
import sys
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Dict, Mapping, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .lawcheck import (
    bound_vs_estimate,
    concentration_probe,
    inclusion_probe,
    lipschitz_probe,
    perturbation_for,
    run_cells,
    sweep_rate,
    tail_probe,
)
from .orlicz import equivalence_check
from .polytope import DEFAULT_M, DEFAULT_R, f_estimate
from .randsrc import (
    FAMILIES,
    LAW_KINDS,
    IsotropicModel,
    PerturbationLaw,
    make_rng,
    sample_isotropic,
    uniform_directions,
)

COMMANDS = ("sample", "width", "orlicz", "sweep", "concentrate", "lipschitz", "tailprobe", "inclusion", "bound")

CSV_COLUMNS = {
    "sample": None,  # depends on n
    "width": "law,model,n,N,p,R,M,seed,estimate,std_error",
    "orlicz": "law,model,n,N,p,R,M,samples,seed,lhs,rhs,ratio",
    "sweep": "law,model,n,N,p,R,M,y_draws,seed,estimate,std_error,rate,normalized",
    "concentrate": "law,model,n,N,p,draws,seed,t,empirical_tail",
    "lipschitz": "model,n,N,pairs,R,M,seed,pair,diff,dist,ratio",
    "tailprobe": "model,n,N,alpha,samples,seed,level,empirical_tail,reference,ratio",
    "inclusion": "model,n,N,trials,M,samples,seed,trial,c_hat",
    "bound": "model,n,N,c1,c2,k_star,sup_term,f_hat,fitted_c2",
}

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3
ENV_CONFIG = "RANDWIDTH_CONFIG"


class UsageError(ValueError):
    pass


def _default_workers() -> int:
    return os.cpu_count() or 1


@dataclass(frozen=True)
class RunConfig:
    command: str
    seed: int
    model: str = "gaussian"
    law: str = "gaussian"
    n: int = 8
    N_grid: Tuple[int, ...] = (64,)
    p: Optional[float] = None
    R: int = DEFAULT_R
    M: int = DEFAULT_M
    y_draws: int = 1
    workers: int = 1
    out: str = ""
    c1: float = 0.5
    c2: float = 1.0
    draws: int = 200
    t_grid: Tuple[float, ...] = (0.05, 0.1, 0.2, 0.3, 0.5, 0.75, 1.0)
    pairs: int = 20
    alpha: float = 0.5
    samples: int = 100_000
    trials: int = 20
    strict: bool = False

    @property
    def prefix(self) -> str:
        return self.out or f"randwidth_{self.command}"

    def isotropic_model(self) -> IsotropicModel:
        return IsotropicModel(self.model, self.n)

    def perturbation_law(self) -> PerturbationLaw:
        if self.law == "fixed":
            return PerturbationLaw("fixed", fixed_vector=(1.0,))
        return PerturbationLaw(self.law, p=self.p)

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if v is None:
                continue
            lines.append(f"{f.name}={_format_value(v)}")
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {f.name: _jsonable(getattr(self, f.name)) for f in dataclasses.fields(self)}


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ",".join(_format_value(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse_int(text: str) -> int:
    return int(text.strip())


def _parse_u64(text: str) -> int:
    v = int(text.strip())
    if not 0 <= v < 2**64:
        raise ValueError("not a 64-bit unsigned integer")
    return v


def _parse_float(text: str) -> float:
    v = float(text.strip())
    if math.isnan(v):
        raise ValueError("nan")
    return v


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError("not a boolean")


def _parse_int_list(text: str) -> Tuple[int, ...]:
    return tuple(int(x) for x in text.split(",") if x.strip())


def _parse_float_list(text: str) -> Tuple[float, ...]:
    return tuple(_parse_float(x) for x in text.split(",") if x.strip())


_PARSERS = {
    "command": str.strip,
    "seed": _parse_u64,
    "model": str.strip,
    "law": str.strip,
    "n": _parse_int,
    "N_grid": _parse_int_list,
    "p": _parse_float,
    "R": _parse_int,
    "M": _parse_int,
    "y_draws": _parse_int,
    "workers": _parse_int,
    "out": str,
    "c1": _parse_float,
    "c2": _parse_float,
    "draws": _parse_int,
    "t_grid": _parse_float_list,
    "pairs": _parse_int,
    "alpha": _parse_float,
    "samples": _parse_int,
    "trials": _parse_int,
    "strict": _parse_bool,
}
# aliases accepted in config files
_KEY_ALIASES = {"N": "N_grid", "y-draws": "y_draws", "t-grid": "t_grid"}


def _convert(key: str, raw: str):
    try:
        return _PARSERS[key](raw)
    except (ValueError, TypeError) as exc:
        raise UsageError(f"malformed value for {key!r}: {raw!r} ({exc})") from None


def parse_config_text(text: str) -> Dict[str, object]:
    """Flat ``key=value`` lines; ``#`` starts a comment."""
    values: Dict[str, object] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config line {lineno} is not key=value: {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        key = _KEY_ALIASES.get(key, key)
        if key not in _PARSERS:
            raise UsageError(f"unknown config key {key!r}")
        values[key] = _convert(key, raw)
    return values


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser() -> _Parser:
    ap = _Parser(prog="randwidth", allow_abbrev=False, description="Mean width of randomly perturbed random polytopes.")
    ap.add_argument("command", nargs="?", help="one of: " + ", ".join(COMMANDS))
    ap.add_argument("--config", help="flat key=value config file")
    ap.add_argument("--seed", help="64-bit unsigned seed (required)")
    ap.add_argument("--model", help="isotropic family: " + ", ".join(FAMILIES))
    ap.add_argument("--law", help="perturbation law: " + ", ".join(LAW_KINDS))
    ap.add_argument("--n", help="dimension")
    ap.add_argument("--N", dest="N_grid", help="point count or comma-separated increasing grid")
    ap.add_argument("--p", help="exponent for bp_ball / p_stable")
    ap.add_argument("--R", help="cloud replicates")
    ap.add_argument("--M", help="directions per replicate")
    ap.add_argument("--y-draws", "--y_draws", dest="y_draws", help="perturbation draws per N")
    ap.add_argument("--workers", help="worker threads (default: available parallelism)")
    ap.add_argument("--out", help="output path prefix")
    ap.add_argument("--c1", help="admissibility exponent of the lower bound")
    ap.add_argument("--c2", help="constant of the lower bound")
    ap.add_argument("--draws", help="perturbation draws for the concentration probe")
    ap.add_argument("--t", "--t-grid", "--t_grid", dest="t_grid", help="comma-separated deviation levels")
    ap.add_argument("--pairs", help="random pairs for the Lipschitz probe")
    ap.add_argument("--alpha", help="tail level multiplier")
    ap.add_argument("--samples", help="Monte Carlo samples")
    ap.add_argument("--trials", help="inclusion trials")
    ap.add_argument("--strict", action="store_const", const="true", help="strict admissibility for the bound")
    return ap


def _validate(values: Mapping[str, object]) -> RunConfig:
    cmd = values.get("command")
    if not cmd:
        raise UsageError("missing command; expected one of: " + ", ".join(COMMANDS))
    if cmd not in COMMANDS:
        raise UsageError(f"invalid value for 'command': {cmd!r}; expected one of: " + ", ".join(COMMANDS))
    if "seed" not in values:
        raise UsageError("missing required key 'seed'")
    kw = dict(values)
    kw.setdefault("workers", _default_workers())
    cfg = RunConfig(**kw)

    if cfg.model not in FAMILIES:
        raise UsageError(f"invalid value for 'model': {cfg.model!r}; expected one of {FAMILIES}")
    if cfg.law not in LAW_KINDS:
        raise UsageError(f"invalid value for 'law': {cfg.law!r}; expected one of {LAW_KINDS}")
    for key in ("n", "R", "M", "y_draws", "workers", "draws", "pairs", "samples", "trials"):
        if getattr(cfg, key) < 1:
            raise UsageError(f"invalid value for {key!r}: must be positive")
    if not cfg.N_grid or any(N < 1 for N in cfg.N_grid):
        raise UsageError("invalid value for 'N_grid': counts must be positive")
    if any(b <= a for a, b in zip(cfg.N_grid, cfg.N_grid[1:])):
        raise UsageError("invalid value for 'N_grid': must be strictly increasing")
    for key in ("c1", "c2", "alpha"):
        if not getattr(cfg, key) > 0:
            raise UsageError(f"invalid value for {key!r}: must be positive")
    if not cfg.t_grid or any(t <= 0 for t in cfg.t_grid):
        raise UsageError("invalid value for 't_grid': levels must be positive")
    if cfg.law in ("bp_ball", "p_stable") and cfg.p is None:
        raise UsageError(f"missing required key 'p' for law {cfg.law}")
    try:
        cfg.perturbation_law()
    except ValueError as exc:
        raise UsageError(f"invalid value for 'p': {exc}") from None
    return cfg


def parse_config(argv: Sequence[str] = (), file_text: Optional[str] = None,
                 env: Optional[Mapping[str, str]] = None) -> RunConfig:
    """Build a RunConfig from argv and/or config text; flags override file values."""
    env = os.environ if env is None else env
    argv = list(argv)
    if not argv and file_text is None and not env.get(ENV_CONFIG):
        raise UsageError("no command given; expected one of: " + ", ".join(COMMANDS))
    ns = _build_parser().parse_args(argv)

    values: Dict[str, object] = {}
    path = ns.config or env.get(ENV_CONFIG)
    if path:
        try:
            with open(path) as fh:
                values.update(parse_config_text(fh.read()))
        except OSError as exc:
            raise UsageError(f"cannot read config file {path!r}: {exc}") from None
    if file_text is not None:
        values.update(parse_config_text(file_text))
    for key, raw in vars(ns).items():
        if key == "config" or raw is None:
            continue
        values[key] = raw.strip() if key == "command" else _convert(key, raw)
    return _validate(values)


# ---------------------------------------------------------------- execution

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        return format(v, ".17g")
    return str(v)


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return None if not math.isfinite(v) else v
    return v


def _p_field(cfg: RunConfig):
    return cfg.p if cfg.law in ("bp_ball", "p_stable") else None


def _run_sample(cfg: RunConfig, rng):
    model, law = cfg.isotropic_model(), cfg.perturbation_law()
    header = ["model", "law", "n", "N", "p", "seed", "i", "y"] + [f"x{j + 1}" for j in range(cfg.n)]
    rows = []
    for N in cfg.N_grid:
        cloud = sample_isotropic(model, N, rng.substream(N, 0))
        y = perturbation_for(law, N, rng.substream(N, 1))
        for i in range(N):
            rows.append([cfg.model, cfg.law, cfg.n, N, _p_field(cfg), cfg.seed, i, y.values[i], *cloud.points[i]])
    return header, rows, {}


def _run_width(cfg: RunConfig, rng):
    model, law = cfg.isotropic_model(), cfg.perturbation_law()

    def cell(N):
        y = perturbation_for(law, N, rng.substream(N, 0))
        return f_estimate(model, N, y, cfg.R, cfg.M, rng.substream(N, 1))

    ests = run_cells(cell, list(cfg.N_grid), cfg.workers)
    rows = [[cfg.law, cfg.model, cfg.n, N, _p_field(cfg), cfg.R, cfg.M, cfg.seed, e.value, e.std_error]
            for N, e in zip(cfg.N_grid, ests)]
    return CSV_COLUMNS["width"].split(","), rows, {}


def _run_orlicz(cfg: RunConfig, rng):
    model, law = cfg.isotropic_model(), cfg.perturbation_law()
    theta = uniform_directions(cfg.n, 1, rng.substream(0).generator())[0]

    def cell(N):
        y = perturbation_for(law, N, rng.substream(1, N))
        return equivalence_check(model, cfg.n, N, y, theta, cfg.R, cfg.M, cfg.samples, rng.substream(2, N))

    recs = run_cells(cell, list(cfg.N_grid), cfg.workers)
    rows = [[cfg.law, cfg.model, cfg.n, N, _p_field(cfg), cfg.R, cfg.M, cfg.samples, cfg.seed, r.lhs, r.rhs, r.ratio]
            for N, r in zip(cfg.N_grid, recs)]
    ratios = np.array([r.ratio for r in recs])
    summary = {"theta": theta, "ratio_min": ratios.min(), "ratio_max": ratios.max(),
               "ratio_spread": ratios.max() / ratios.min()}
    return CSV_COLUMNS["orlicz"].split(","), rows, summary


def _run_sweep(cfg: RunConfig, rng):
    model, law = cfg.isotropic_model(), cfg.perturbation_law()
    rep = sweep_rate(law, model, cfg.n, cfg.N_grid, cfg.R, cfg.M, cfg.y_draws, rng, cfg.workers)
    rows = [[cfg.law, cfg.model, cfg.n, N, _p_field(cfg), cfg.R, cfg.M, cfg.y_draws, cfg.seed,
             rep.raw[i], rep.std_error[i], rep.rate[i], rep.normalized[i]]
            for i, N in enumerate(rep.N_grid)]
    summary = {
        "fitted_exponent": rep.fitted_exponent,
        "normalized_exponent": rep.normalized_exponent,
        "dispersion": rep.dispersion,
        "plain_mean": rep.plain_mean,
        "median_of_means": rep.median_of_means,
        "estimator": "median_of_means" if law.kind == "p_stable" else "mean",
        "mom_disagrees": rep.mom_disagrees,
    }
    return CSV_COLUMNS["sweep"].split(","), rows, summary


def _run_concentrate(cfg: RunConfig, rng):
    model, law = cfg.isotropic_model(), cfg.perturbation_law()
    rows, per_N = [], {}
    for N in cfg.N_grid:
        tc = concentration_probe(law, model, cfg.n, N, cfg.draws, cfg.t_grid, cfg.R, cfg.M, rng.substream(N),
                                 cfg.workers)
        for t, q in zip(tc.t_grid, tc.empirical_tail):
            rows.append([cfg.law, cfg.model, cfg.n, N, _p_field(cfg), cfg.draws, cfg.seed, t, q])
        per_N[str(N)] = {"center": tc.center, "fitted_c": tc.fitted_c, "threshold": tc.threshold,
                         "fit_mask": tc.fit_mask, "std_error": tc.std_error}
    return CSV_COLUMNS["concentrate"].split(","), rows, {"per_N": per_N}


def _run_lipschitz(cfg: RunConfig, rng):
    model = cfg.isotropic_model()
    rows, C = [], {}
    for N in cfg.N_grid:
        rep = lipschitz_probe(model, cfg.n, N, cfg.pairs, cfg.R, cfg.M, rng.substream(N), cfg.workers)
        for k, (d, s, r) in enumerate(zip(rep.diffs, rep.dists, rep.ratios)):
            rows.append([cfg.model, cfg.n, N, cfg.pairs, cfg.R, cfg.M, cfg.seed, k, d, s, r])
        C[str(N)] = rep.C_hat
    vals = np.array(list(C.values()))
    return CSV_COLUMNS["lipschitz"].split(","), rows, {"C_hat": C, "spread": vals.max() / vals.min()}


def _run_tailprobe(cfg: RunConfig, rng):
    model = cfg.isotropic_model()
    probes = run_cells(lambda N: tail_probe(model, cfg.n, N, cfg.alpha, cfg.samples, rng.substream(N)),
                       list(cfg.N_grid), cfg.workers)
    rows = [[cfg.model, cfg.n, t.N, cfg.alpha, cfg.samples, cfg.seed, t.level, t.empirical, t.reference, t.ratio]
            for t in probes]
    ratios = np.array([t.ratio for t in probes])
    return CSV_COLUMNS["tailprobe"].split(","), rows, {"ratio_spread": ratios.max() / ratios.min()}


def _run_inclusion(cfg: RunConfig, rng):
    model = cfg.isotropic_model()
    rows, c = [], {}
    for N in cfg.N_grid:
        rep = inclusion_probe(model, cfg.n, N, cfg.trials, cfg.M, cfg.samples, rng.substream(N),
                              workers=cfg.workers)
        for k, v in enumerate(rep.per_trial):
            rows.append([cfg.model, cfg.n, N, cfg.trials, cfg.M, cfg.samples, cfg.seed, k, v])
        c[str(N)] = rep.c_hat
    return CSV_COLUMNS["inclusion"].split(","), rows, {"c_hat": c}


def _run_bound(cfg: RunConfig, rng):
    model, law = cfg.isotropic_model(), cfg.perturbation_law()

    def cell(N):
        y = perturbation_for(law, N, rng.substream(N, 0))
        return bound_vs_estimate(model, y, cfg.n, N, cfg.c1, cfg.R, cfg.M, rng.substream(N, 1), cfg.c2, cfg.strict)

    res = run_cells(cell, list(cfg.N_grid), cfg.workers)
    rows = [[cfg.model, cfg.n, b.N, cfg.c1, cfg.c2, b.report.k_star, b.sup_term, b.f_hat, b.fitted_c2] for b in res]
    summary = {"I_y": {str(b.N): b.report.I_y for b in res},
               "bound_value": {str(b.N): b.report.bound_value for b in res}}
    return CSV_COLUMNS["bound"].split(","), rows, summary


_RUNNERS = {
    "sample": _run_sample,
    "width": _run_width,
    "orlicz": _run_orlicz,
    "sweep": _run_sweep,
    "concentrate": _run_concentrate,
    "lipschitz": _run_lipschitz,
    "tailprobe": _run_tailprobe,
    "inclusion": _run_inclusion,
    "bound": _run_bound,
}


def render_csv(header: Sequence[str], rows: Sequence[Sequence]) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue().encode()


def _regime(cfg: RunConfig) -> dict:
    return {str(N): {"N_ge_n": N >= cfg.n, "N_le_exp_sqrt_n": N <= math.exp(math.sqrt(cfg.n)),
                     "N_gt_n_squared": N > cfg.n ** 2}
            for N in cfg.N_grid}


def execute(cfg: RunConfig) -> int:
    """Run the configured command and write its CSV and manifest."""
    started = datetime.now(timezone.utc).isoformat()
    try:
        header, rows, summary = _RUNNERS[cfg.command](cfg, make_rng(cfg.seed))
        data = render_csv(header, rows)
        csv_path = cfg.prefix + ".csv"
        with open(csv_path, "wb") as fh:
            fh.write(data)
        manifest = {
            "config": cfg.to_dict(),
            "config_text": cfg.to_text(),
            "version": __version__,
            "started": started,
            "finished": datetime.now(timezone.utc).isoformat(),
            "outputs": {os.path.basename(csv_path): hashlib.sha256(data).hexdigest()},
            "regime": _regime(cfg),
            "summary": _jsonable(summary),
        }
        with open(cfg.prefix + ".manifest.json", "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
    except (ValueError, ArithmeticError, RuntimeError, OSError) as exc:
        print(f"randwidth: {cfg.command} failed: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        cfg = parse_config(argv)
    except UsageError as exc:
        print(f"randwidth: usage error: {exc}", file=sys.stderr)
        print(_build_parser().format_usage(), file=sys.stderr, end="")
        return EXIT_USAGE
    return execute(cfg)


if __name__ == "__main__":
    sys.exit(main())
