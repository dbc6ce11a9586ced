"""Command-line orchestration.

Subcommands: ``screen``, ``reconstruct``, ``ensemble``, ``benchmark``,
``validate``, ``smooth``. Every run writes a ``resolved_config.txt``
capturing every setting actually used (auto-selected K and lasso
penalties included), and re-running from that file reproduces the
outputs byte for byte. Configuration is plain ``key = value`` text;
command-line flags win over the file.

Exit codes: 0 success, 2 input/config error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import io
import os
import sys
from dataclasses import dataclass, fields, replace

import numpy as np

from .errors import (
    BlockMismatch,
    ConvergenceError,
    DegenerateBaseline,
    DegenerateColumn,
    DegenerateTruth,
    DuplicateId,
    FormatError,
    InsufficientCalibration,
    MissingDataError,
    NoCompleteBlock,
    NoOverlap,
    SingularFit,
    SpecError,
)
from .ioutil import atomic_write_text, fnum
from .pipeline import MethodConfig, pca_basis_for, reconstruct_with
from .proxies import (
    exclude_flagged,
    load_network,
    save_network,
    screen_replication,
    write_rejections,
)
from .pseudoproxy import (
    PseudoproxySpec,
    TruthConfig,
    generate_truth,
    load_field,
    run_benchmark,
    write_benchmark_csv,
    write_benchmark_summary_csv,
)
from .regression import calibration_design, fit_ols_pc, select_K
from .seeding import derive_seed
from .timeseries import loess_smooth, read_series_csv, to_anomaly, write_series_csv
from .uncertainty import (
    build_ensemble,
    prob_warmest_decade,
    sample_coefficients,
    splice_observed,
    write_ensemble_csv,
    write_ensemble_summary_csv,
)
from .verification import holdout_validate

INPUT_ERRORS = (
    FormatError,
    DuplicateId,
    SpecError,
    NoOverlap,
    FileNotFoundError,
    NotADirectoryError,
    ValueError,
)
NUMERICAL_ERRORS = (
    ConvergenceError,
    SingularFit,
    DegenerateColumn,
    DegenerateTruth,
    DegenerateBaseline,
    InsufficientCalibration,
    MissingDataError,
    NoCompleteBlock,
    BlockMismatch,
)


@dataclass
class RunConfig:
    """Every knob of every subcommand, with its default."""

    network: str | None = None
    target: str | None = None
    field: str | None = None
    output_dir: str = "out"
    method: str = "ols_pc"
    methods: str = "lasso,ols_pc,regem,regem_hybrid"
    k: int | None = None
    max_k: int = 10
    lam: float | None = None
    ridge: float | None = None
    split_period: float = 20.0
    rho: float = 0.32
    snr: float = 0.4
    n_sites: int = 59
    grid_sites: int = 150
    field_years: tuple[int, int] = (1000, 2006)
    n_draws: int = 1000
    replicates: int = 20
    seed: int = 0
    calibration: tuple[int, int] = (1856, 1980)
    base_period: tuple[int, int] | None = None
    decade: tuple[int, int] = (1997, 2006)
    anchor: int = 1997
    frozen_at: int = 1000
    min_cores: int = 8
    flag: str = "tiljander"
    span: float = 0.05
    block_length: int = 30
    mode: str = "sliding"
    noise: str = "coefficients_only"
    decade_source: str = "observed"

    def anomaly_base(self) -> tuple[int, int]:
        return self.base_period if self.base_period is not None else self.calibration

    def method_config(self) -> MethodConfig:
        return MethodConfig(
            method=self.method,
            K=self.k,
            max_K=self.max_k,
            lam=self.lam,
            ridge=self.ridge,
            split_period=self.split_period,
        )


_OPT_STR = {"network", "target", "field"}
_OPT_INT = {"k"}
_OPT_FLOAT = {"lam", "ridge"}
_PAIR = {"field_years", "calibration", "decade"}
_OPT_PAIR = {"base_period"}
_AUTO_WORDS = {"auto", "gcv", "none", "default"}


def _format_value(name: str, value) -> str:
    if value is None:
        return "auto"
    if name in _PAIR or name in _OPT_PAIR:
        return f"{value[0]}:{value[1]}"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_value(name: str, raw: str):
    raw = raw.strip()
    default = getattr(RunConfig(), name)
    if name in _OPT_STR:
        return None if raw.lower() in _AUTO_WORDS else raw
    if name in _OPT_INT:
        return None if raw.lower() in _AUTO_WORDS else int(raw)
    if name in _OPT_FLOAT:
        return None if raw.lower() in _AUTO_WORDS else float(raw)
    if name in _PAIR or name in _OPT_PAIR:
        if name in _OPT_PAIR and raw.lower() in _AUTO_WORDS | {"calibration"}:
            return None
        a, _, b = raw.partition(":")
        return (int(a), int(b))
    if isinstance(default, bool):
        return raw.lower() in ("1", "true", "yes")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        if raw.lower() in ("inf", "infinity"):
            return float("inf")
        return float(raw)
    return raw


def config_to_text(cfg: RunConfig, command: str) -> str:
    lines = [f"command = {command}"]
    for f in sorted(fields(RunConfig), key=lambda f: f.name):
        lines.append(f"{f.name} = {_format_value(f.name, getattr(cfg, f.name))}")
    return "\n".join(lines) + "\n"


def config_from_file(path: str) -> RunConfig:
    known = {f.name for f in fields(RunConfig)}
    cfg = RunConfig()
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, raw = line.partition("=")
            key = key.strip()
            if not sep:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            if key == "command":
                continue
            if key not in known:
                raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
            setattr(cfg, key, _parse_value(key, raw))
    return cfg


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hemirecon",
        description="Hemispheric temperature reconstruction and benchmarking",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, handler, help_text in _COMMANDS:
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(handler=handler)
        p.add_argument("--config", help="key = value config file; flags win")
        for f in fields(RunConfig):
            flag = "--" + f.name.replace("_", "-")
            p.add_argument(flag, dest=f.name, default=None, metavar="V")
    return parser


def _resolve_config(args) -> RunConfig:
    cfg = config_from_file(args.config) if args.config else RunConfig()
    overrides = {}
    for f in fields(RunConfig):
        raw = getattr(args, f.name, None)
        if raw is not None:
            overrides[f.name] = _parse_value(f.name, raw)
    return replace(cfg, **overrides)


def _require(cfg: RunConfig, *names: str) -> None:
    for name in names:
        if getattr(cfg, name) is None:
            raise ValueError(f"this command requires --{name.replace('_', '-')}")


def _emit(path: str, build) -> None:
    buf = io.StringIO()
    build(buf)
    atomic_write_text(path, buf.getvalue())


def _out(cfg: RunConfig, name: str) -> str:
    os.makedirs(cfg.output_dir, exist_ok=True)
    return os.path.join(cfg.output_dir, name)


def _write_resolved(cfg: RunConfig, command: str) -> None:
    atomic_write_text(_out(cfg, "resolved_config.txt"), config_to_text(cfg, command))


def _load_target(cfg: RunConfig):
    target = read_series_csv(cfg.target)
    base = cfg.anomaly_base()
    return to_anomaly(target, *base)


def cmd_screen(cfg: RunConfig) -> int:
    _require(cfg, "network")
    net, rejections = load_network(cfg.network, cfg.frozen_at, cfg.calibration[0])
    replicated = screen_replication(net, cfg.min_cores)
    cleaned = exclude_flagged(replicated, cfg.flag)

    removals = []
    kept = set(replicated.ids)
    for r in net.records:
        if r.id not in kept:
            got = "unknown" if r.core_count is None else str(r.core_count)
            removals.append((r.id, f"core_count {got} below {cfg.min_cores}"))
    kept = set(cleaned.ids)
    for r in replicated.records:
        if r.id not in kept:
            removals.append((r.id, f"flagged {cfg.flag}"))

    save_network(replicated, _out(cfg, "network_replicated"))
    save_network(cleaned, _out(cfg, "network_screened"))
    write_rejections(rejections, _out(cfg, "rejections.csv"))
    _emit(
        _out(cfg, "screen_log.csv"),
        lambda fh: fh.write("id,reason\n" + "".join(f"{i},{r}\n" for i, r in removals)),
    )
    _write_resolved(cfg, "screen")
    print(
        f"loaded {len(net)} records ({len(rejections)} rejected); "
        f"replication screen (min_cores={cfg.min_cores}) kept {len(replicated)}; "
        f"flag screen ({cfg.flag}) kept {len(cleaned)}"
    )
    return 0


def cmd_reconstruct(cfg: RunConfig) -> int:
    _require(cfg, "network", "target")
    net, _ = load_network(cfg.network, cfg.frozen_at, cfg.calibration[0])
    target = _load_target(cfg)
    recon = reconstruct_with(cfg.method_config(), net, target, cfg.calibration)

    if cfg.method == "ols_pc":
        cfg = replace(cfg, k=recon.model.K)
    elif cfg.method == "lasso":
        cfg = replace(cfg, lam=recon.model.lam)

    def _write_recon(series, label, fh):
        fh.write("year,value,label\n")
        for year, value, ok in zip(series.years, series.values, series.mask):
            fh.write(f"{year},{fnum(value)},{label}\n" if ok else f"{year},,{label}\n")

    smoothed = loess_smooth(recon.series, cfg.span)
    _emit(_out(cfg, "reconstruction.csv"), lambda fh: _write_recon(recon.series, recon.label, fh))
    _emit(
        _out(cfg, "reconstruction_smoothed.csv"),
        lambda fh: _write_recon(smoothed, f"{recon.label}+loess({cfg.span:g})", fh),
    )
    atomic_write_text(_out(cfg, "model.txt"), recon.model.dump())
    _write_resolved(cfg, "reconstruct")
    print(f"reconstruction {recon.label}: {recon.series.start_year}-{recon.series.end_year}")
    return 0


def cmd_ensemble(cfg: RunConfig) -> int:
    _require(cfg, "network", "target")
    if cfg.method != "ols_pc":
        raise ValueError("ensemble requires method = ols_pc")
    net, _ = load_network(cfg.network, cfg.frozen_at, cfg.calibration[0])
    target = _load_target(cfg)
    basis, matrix = pca_basis_for(net, cfg.calibration)
    k = cfg.k
    if k is None:
        k = select_K(basis, target, min(cfg.max_k, basis.n_components), cfg.calibration)
    cfg = replace(cfg, k=k)
    model = fit_ols_pc(basis, target, k, cfg.calibration)

    design, y = calibration_design(basis, target, cfg.calibration)
    draws = sample_coefficients(
        model, design, y, cfg.n_draws, seed=derive_seed(cfg.seed, "coefficients")
    )
    scores = basis.scores_for(matrix.values)
    complete = np.isfinite(scores).all(axis=1)
    runs = np.flatnonzero(complete)
    start_row, end_row = int(runs[0]), int(runs[-1])
    if not complete[start_row : end_row + 1].all():
        raise MissingDataError("score matrix has interior gaps; cannot build ensemble")
    ensemble = build_ensemble(
        draws,
        scores[start_row : end_row + 1],
        int(matrix.years[start_row]),
        noise=cfg.noise,
        seed=derive_seed(cfg.seed, "residual_noise"),
        label=f"ols_pc(K={k})",
    )

    basis_for_prob = ensemble
    if cfg.decade_source == "observed":
        basis_for_prob = splice_observed(ensemble, target)
    prob = prob_warmest_decade(basis_for_prob, cfg.decade, cfg.anchor)

    _emit(_out(cfg, "ensemble.csv"), lambda fh: write_ensemble_csv(ensemble, fh))
    _emit(
        _out(cfg, "ensemble_summary.csv"),
        lambda fh: write_ensemble_summary_csv(ensemble, fh),
    )
    _emit(
        _out(cfg, "probability.csv"),
        lambda fh: fh.write(
            "decade_start,decade_end,probability,n_draws,decade_source\n"
            f"{cfg.decade[0]},{cfg.decade[1]},{fnum(prob)},{cfg.n_draws},{cfg.decade_source}\n"
        ),
    )
    atomic_write_text(_out(cfg, "model.txt"), model.dump())
    _write_resolved(cfg, "ensemble")
    print(
        f"ensemble ols_pc(K={k}), {cfg.n_draws} draws: "
        f"P(decade {cfg.decade[0]}-{cfg.decade[1]} warmest) = {prob:.4f}"
    )
    return 0


def cmd_benchmark(cfg: RunConfig) -> int:
    if cfg.field:
        field = load_field(cfg.field)
    else:
        field = generate_truth(
            cfg.grid_sites, cfg.field_years, TruthConfig(), seed=derive_seed(cfg.seed, "field")
        )
    spec = PseudoproxySpec(
        n_sites=cfg.n_sites,
        rho=cfg.rho,
        snr=cfg.snr,
        seed=derive_seed(cfg.seed, "pseudoproxies"),
        calibration=cfg.calibration,
    )
    methods = []
    for name in (m.strip() for m in cfg.methods.split(",")):
        if name:
            methods.append(replace(cfg.method_config(), method=name))
    result = run_benchmark(
        field, spec, methods, cfg.replicates, base_seed=derive_seed(cfg.seed, "benchmark")
    )
    _emit(_out(cfg, "benchmark.csv"), lambda fh: write_benchmark_csv(result, fh))
    _emit(
        _out(cfg, "benchmark_summary.csv"),
        lambda fh: write_benchmark_summary_csv(result, fh),
    )
    _write_resolved(cfg, "benchmark")
    for cfg_m in methods:
        label = cfg_m.label()
        print(
            f"{label}: median var_ratio {result.median(label, 'var_ratio'):.3f}, "
            f"median RE {result.median(label, 're'):.3f} "
            f"({len(result.reports_for(label))}/{cfg.replicates} ok)"
        )
    return 0


def cmd_validate(cfg: RunConfig) -> int:
    _require(cfg, "network", "target")
    net, _ = load_network(cfg.network, cfg.frozen_at, cfg.calibration[0])
    target = _load_target(cfg)
    reports = holdout_validate(
        net, target, cfg.method_config(), cfg.block_length, cfg.mode, cfg.calibration
    )

    def _write(fh):
        fh.write("block_start,block_end,re,ce,rmse,r2,var_ratio\n")
        for (b0, b1), rep in reports:
            fh.write(
                f"{b0},{b1},{fnum(rep.re)},{fnum(rep.ce)},{fnum(rep.rmse)},"
                f"{fnum(rep.r2)},{fnum(rep.var_ratio)}\n"
            )

    _emit(_out(cfg, "validation.csv"), _write)
    _write_resolved(cfg, "validate")
    print(f"validated {len(reports)} {cfg.block_length}-year blocks ({cfg.mode})")
    return 0


def cmd_smooth(cfg: RunConfig) -> int:
    _require(cfg, "target")
    series = read_series_csv(cfg.target)
    smoothed = loess_smooth(series, cfg.span)
    write_series_csv(smoothed, _out(cfg, "smoothed.csv"))
    _write_resolved(cfg, "smooth")
    print(f"smoothed {series.start_year}-{series.end_year} at span {cfg.span:g}")
    return 0


_COMMANDS = [
    ("screen", cmd_screen, "apply replication and contamination screens to a network"),
    ("reconstruct", cmd_reconstruct, "fit one method and emit the reconstruction"),
    ("ensemble", cmd_ensemble, "Monte Carlo coefficient ensemble and decade probability"),
    ("benchmark", cmd_benchmark, "pseudoproxy method comparison"),
    ("validate", cmd_validate, "hold-out block validation over the instrumental period"),
    ("smooth", cmd_smooth, "loess-smooth a series file"),
]


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _resolve_config(args)
        return args.handler(cfg)
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except INPUT_ERRORS as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
