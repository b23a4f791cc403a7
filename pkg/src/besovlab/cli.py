"""Command-line front end: validated JSON configs in, CSV artifacts out.

Subcommands and their artifacts (every command also writes manifest.json):

========== =================================================================
run        norms.csv, verify.csv, profiles.csv, kernels/ (when requested)
spectrum   spectrum.csv (one row per eigenvalue per resolution)
norms      norms.csv (one row per norm request per family function)
verify     verify.csv (one row per reported constant)
bench      bench.csv (dense vs Chebyshev apply timings and errors)
profiles   profiles.csv (dyadic profile functions on a lambda grid)
========== =================================================================

Exit codes: 0 all requested work done and every check passed; 1 a check
failed under --assert; 2 the configuration was rejected (schema, index
constraints, or violated assumptions); 3 a compute budget was exceeded.

The manifest is written even when the run fails, with the failure recorded;
numbers in CSV cells are full-precision reprs, so reruns with the same
config and seed produce byte-identical CSVs apart from the wall_ms column
of verify.csv.
"""

from __future__ import annotations

import argparse
import hashlib
import inspect
import json
import platform
import sys
import time
from csv import writer as csv_writer
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import numpy.polynomial.chebyshev as npcheb
import scipy

from . import __version__
from .calculus import apply_symbol, dyadic_block, heat_kernel, kernel, psi_block, suite_symbols
from .config import RunConfig, as_exponent, load_config, prevalidate_windows
from .dyadic import build_system
from .errors import (
    BesovLabError,
    BudgetExceeded,
    CheckFailed,
    ConfigInvalid,
    DenseCapExceeded,
)
from .norms import besov_norm, lorentz_norm, sobolev_norm
from .operators import load_operator, save_operator
from .verify import CHECKS, Stage, build_stage

__all__ = ["main"]

VERIFY_COLUMNS = ("check", "anchor", "constant", "pass", "h", "N", "seed", "wall_ms")
_BENCH_DEGREES = (8, 16, 32, 64, 128, 256, 512, 1024)
_PROFILE_POINTS = 601


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with path.open("w", newline="") as fh:
        w = csv_writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _stage_key(cfg: RunConfig, h: float) -> str:
    payload = json.dumps(
        {
            "domain": cfg.domain,
            "h": h,
            "potential": cfg.potential,
            "trunc_radius": cfg.trunc_radius,
            "dense_cap": cfg.dense_cap,
        },
        sort_keys=True,
        separators=(",", ":"),
    )
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _build_stage_cached(cfg: RunConfig, h: float, cache_dir: Path) -> Stage:
    """Build one resolution stage, reusing the binary operator cache.

    Cache entries are keyed by the operator-determining part of the config
    (domain, spacing, potential, truncation, dense cap), so verify/norms/
    spectrum runs over the same setup share the eigendecompositions.
    """
    key = _stage_key(cfg, h)
    op_path = cache_dir / f"op-{key}.bin"
    op0_path = cache_dir / f"op0-{key}.bin"
    has_v = cfg.potential is not None
    if op_path.exists() and (not has_v or op0_path.exists()):
        op = load_operator(op_path)
        op0 = load_operator(op0_path) if has_v else op
        sys_ = build_system(
            min(op.lam_pos_min, op0.lam_pos_min),
            max(op.lam_max, op0.lam_max),
            lam0=op.lam0,
            profile=cfg.profile,
        )
        return Stage(grid=op.grid, op=op, op0=op0, sys=sys_)
    stage = build_stage(
        cfg.domain_spec(),
        h,
        potential=cfg.potential,
        profile=cfg.profile,
        dense_cap=cfg.dense_cap,
        trunc_radius=cfg.trunc_radius,
    )
    cache_dir.mkdir(parents=True, exist_ok=True)
    save_operator(stage.op, op_path)
    if stage.op0 is not stage.op:
        save_operator(stage.op0, op0_path)
    return stage


def _build_stages(cfg: RunConfig, out_dir: Path) -> list[Stage]:
    cache_dir = out_dir / "cache"
    return [_build_stage_cached(cfg, h, cache_dir) for h in sorted(cfg.h, reverse=True)]


def _write_spectrum(stages: Sequence[Stage], out_dir: Path) -> None:
    rows = []
    for st in stages:
        for k, lam in enumerate(st.op.eigvals, start=1):
            rows.append((st.h, st.grid.num_nodes, k, lam))
    _write_csv(out_dir / "spectrum.csv", ("h", "N", "k", "lam"), rows)


def _norm_rows(cfg: RunConfig, stages: Sequence[Stage]):
    fam = cfg.family()
    for st in stages:
        funcs = fam.sample(st)
        for spec in cfg.norms:
            kind = spec["kind"]
            for i, gf in enumerate(funcs):
                f = gf.values
                if kind == "besov":
                    hom = spec.get("homogeneous", False)
                    value = besov_norm(
                        st.op,
                        st.sys,
                        f,
                        spec["s"],
                        spec["p"],
                        as_exponent(spec["q"]),
                        homogeneous=hom,
                    )
                    row = (kind, spec["s"], spec["p"], spec["q"], "hom" if hom else "inhom")
                elif kind == "sobolev":
                    variant = spec.get("variant", "plain")
                    value = sobolev_norm(st.op, f, spec["s"], variant=variant)
                    row = (kind, spec["s"], "", "", variant)
                else:
                    value = lorentz_norm(gf, spec["p"], as_exponent(spec["q"]))
                    row = (kind, "", spec["p"], spec["q"], "")
                yield (*row, fam.tag, i, st.h, st.grid.num_nodes, float(value))


def _write_norms(cfg: RunConfig, stages: Sequence[Stage], out_dir: Path) -> None:
    header = ("kind", "s", "p", "q", "variant", "family", "func", "h", "N", "value")
    _write_csv(out_dir / "norms.csv", header, _norm_rows(cfg, stages))


def _write_verify(
    cfg: RunConfig,
    stages: Sequence[Stage],
    out_dir: Path,
    manifest: dict,
    report_only: bool,
) -> list[str]:
    """Run the configured checks, write verify.csv, return failing names."""
    rows: list[tuple] = []
    failed: list[str] = []
    summary: dict[str, bool] = {}
    for entry in cfg.checks:
        name = entry["name"]
        fn = CHECKS[name]
        kwargs = {k: v for k, v in entry.items() if k != "name"}
        if name == "equivalence_AV_A0" and report_only:
            kwargs["assert_window"] = False
        if "family" in inspect.signature(fn).parameters:
            kwargs.setdefault("family", cfg.family())
        report = fn(stages, config_hash=cfg.config_hash, **kwargs)
        summary[name] = report.passed
        if not report.passed:
            failed.append(name)
        for row in report.iter_rows():
            rows.append(tuple(row[c] for c in VERIFY_COLUMNS))
    _write_csv(out_dir / "verify.csv", VERIFY_COLUMNS, rows)
    manifest["checks"] = summary
    return failed


def _profile_rows(stages: Sequence[Stage]):
    sys_ = stages[-1].sys
    window = list(sys_.window)
    start = sys_.inhom_window.start
    # the cap plus the inhomogeneous blocks telescope to exactly 1 on
    # [0, 4^j_max], except when the window starts above level 1: then the
    # partition only becomes complete above the first block, so the grid
    # starts there
    lam_lo = 4.0**start if start > 1 else 4.0 ** (sys_.j_min - 2)
    lam = np.concatenate(
        ([0.0], np.geomspace(lam_lo, 4.0**sys_.j_max, _PROFILE_POINTS))
    )
    psi = sys_.psi(lam)
    phis = {j: sys_.phi_sqrt(j, lam) for j in window}
    total = psi + sum(phis[j] for j in sys_.inhom_window)
    for i in range(lam.size):
        yield (lam[i], psi[i], *(phis[j][i] for j in window), total[i])


def _write_profiles(stages: Sequence[Stage], out_dir: Path) -> None:
    sys_ = stages[-1].sys
    header = ("lam", "psi", *(f"phi_{j}" for j in sys_.window), "sum")
    _write_csv(out_dir / "profiles.csv", header, _profile_rows(stages))


def _cheb_apply_fixed(op, symbol, vec: np.ndarray, degree: int) -> np.ndarray:
    """Chebyshev apply at a fixed degree (bench ladder, not adaptive)."""
    lo = float(op.eigvals[0])
    hi = float(op.eigvals[-1])
    pad = 1e-12 * max(abs(lo), abs(hi), 1.0)
    a, b = lo - pad, hi + pad
    coeffs = npcheb.chebinterpolate(
        lambda u: np.asarray(symbol((np.asarray(u) + 1.0) * 0.5 * (b - a) + a), float),
        degree,
    )
    alpha = 2.0 / (b - a)
    beta = (a + b) / (b - a)
    mat = op.matrix

    def amap(x: np.ndarray) -> np.ndarray:
        return alpha * (mat @ x) - beta * x

    t_prev = vec
    acc = coeffs[0] * t_prev
    if len(coeffs) > 1:
        t_cur = amap(vec)
        acc = acc + coeffs[1] * t_cur
        for c in coeffs[2:]:
            t_prev, t_cur = t_cur, 2.0 * amap(t_cur) - t_prev
            acc = acc + c * t_cur
    return acc


def _bench_rows(cfg: RunConfig, stages: Sequence[Stage]):
    for st in stages:
        n = st.grid.num_nodes
        vec = np.random.default_rng([cfg.seed, 77]).standard_normal(n)
        vec /= np.linalg.norm(vec)
        for name, symbol in suite_symbols(st.op, st.sys):
            t0 = time.perf_counter()
            dense = apply_symbol(st.op, symbol, vec, path="dense")
            dense_ms = (time.perf_counter() - t0) * 1e3
            # vec is unit length, so when the symbol annihilates the whole
            # spectrum the error reads in units of eps rather than blowing up
            ref = max(float(np.linalg.norm(dense)), float(np.finfo(float).eps))
            for degree in _BENCH_DEGREES:
                t0 = time.perf_counter()
                approx = _cheb_apply_fixed(st.op, symbol, vec, degree)
                cheb_ms = (time.perf_counter() - t0) * 1e3
                rel = float(np.linalg.norm(approx - dense)) / ref
                yield (name, st.h, n, degree, dense_ms, cheb_ms, rel)


def _write_bench(cfg: RunConfig, stages: Sequence[Stage], out_dir: Path) -> None:
    header = ("symbol", "h", "N", "degree", "dense_ms", "cheb_ms", "rel_err")
    _write_csv(out_dir / "bench.csv", header, _bench_rows(cfg, stages))


def _write_kernels(cfg: RunConfig, stages: Sequence[Stage], out_dir: Path) -> None:
    """Dump the finest-stage kernels that downstream plots typically want:
    the low cap, one mid shell, and a spectrum-scaled heat kernel."""
    kdir = out_dir / "kernels"
    kdir.mkdir(parents=True, exist_ok=True)
    st = stages[-1]
    sys_ = st.sys
    np.save(kdir / "psi.npy", kernel(psi_block(st.op, sys_)).values)
    t_heat = 4.0 / max(float(st.op.lam_max), 1.0)
    np.save(kdir / "heat.npy", heat_kernel(st.op, t_heat).values)
    mid = max((sys_.j_min + sys_.j_max) // 2, sys_.inhom_window.start)
    np.save(kdir / f"phi_{mid}.npy", kernel(dyadic_block(st.op, sys_, mid)).values)


def _dispatch(
    command: str,
    cfg: RunConfig,
    out_dir: Path,
    manifest: dict,
    report_only: bool,
) -> list[str]:
    timings = manifest["timings_ms"]
    t0 = time.perf_counter()
    stages = _build_stages(cfg, out_dir)
    timings["stages"] = round((time.perf_counter() - t0) * 1e3, 3)
    manifest["num_nodes"] = {repr(st.h): st.grid.num_nodes for st in stages}

    failed: list[str] = []

    def _timed(label: str, fn, *args) -> None:
        t = time.perf_counter()
        fn(*args)
        timings[label] = round((time.perf_counter() - t) * 1e3, 3)

    if command == "spectrum":
        _timed("spectrum", _write_spectrum, stages, out_dir)
    elif command == "norms":
        _timed("norms", _write_norms, cfg, stages, out_dir)
    elif command == "profiles":
        _timed("profiles", _write_profiles, stages, out_dir)
    elif command == "bench":
        _timed("bench", _write_bench, cfg, stages, out_dir)
    elif command == "verify":
        t = time.perf_counter()
        failed = _write_verify(cfg, stages, out_dir, manifest, report_only)
        timings["verify"] = round((time.perf_counter() - t) * 1e3, 3)
    else:  # run
        _timed("norms", _write_norms, cfg, stages, out_dir)
        t = time.perf_counter()
        failed = _write_verify(cfg, stages, out_dir, manifest, report_only)
        timings["verify"] = round((time.perf_counter() - t) * 1e3, 3)
        _timed("profiles", _write_profiles, stages, out_dir)
        if cfg.kernels:
            _timed("kernels", _write_kernels, cfg, stages, out_dir)
    return failed


def _u64(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("expected a positive integer")
    return value


def _parse_args(argv: Sequence[str] | None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        prog="besovlab",
        description="Spectral-toolbox runs driven by a JSON config.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "run": "norms + verify + profiles (+ kernels) in one output dir",
        "spectrum": "dump eigenvalues per resolution",
        "norms": "evaluate the configured norm requests on the test family",
        "verify": "run the configured checks and write the constants table",
        "bench": "time dense vs Chebyshev applies over a degree ladder",
        "profiles": "dump the dyadic profile functions on a lambda grid",
    }
    for name, help_text in helps.items():
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", required=True, metavar="PATH", help="JSON config")
        sp.add_argument("--out", metavar="DIR", help="output directory override")
        sp.add_argument("--seed", type=_u64, help="seed override (u64)")
        sp.add_argument(
            "--dense-cap",
            dest="dense_cap",
            type=_positive_int,
            help="max node count for dense eigendecomposition",
        )
        sp.add_argument(
            "--jobs",
            type=_positive_int,
            default=1,
            help="BLAS thread cap (recorded in the manifest)",
        )
        mode = sp.add_mutually_exclusive_group()
        mode.add_argument(
            "--assert",
            dest="report_only",
            action="store_false",
            help="nonzero exit when a check fails (default)",
        )
        mode.add_argument(
            "--report-only",
            dest="report_only",
            action="store_true",
            help="record failures in verify.csv but exit 0",
        )
        sp.set_defaults(report_only=False)
    return parser.parse_args(argv)


def _apply_jobs(jobs: int) -> None:
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        return
    threadpool_limits(limits=jobs)


def _fallback_out(config_path: str, out_flag: str | None) -> Path:
    """Where the manifest goes when the config itself is rejected: the
    --out flag if given, else the config's own out key if readable, else
    the default output directory."""
    if out_flag:
        return Path(out_flag)
    try:
        data = json.loads(Path(config_path).read_text())
        if isinstance(data, dict) and isinstance(data.get("out"), str):
            return Path(data["out"])
    except (OSError, json.JSONDecodeError):
        pass
    return Path("results")


def main(argv: Sequence[str] | None = None) -> int:
    args = _parse_args(argv)
    t_start = time.perf_counter()
    manifest: dict = {
        "tool": "besovlab",
        "version": __version__,
        "command": args.command,
        "status": "error",
        "failure": None,
        "config_hash": None,
        "seed": None,
        "jobs": args.jobs,
        "assert_mode": not args.report_only,
        "versions": {
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "timings_ms": {},
    }
    out_dir = _fallback_out(args.config, args.out)
    code = 0
    try:
        _apply_jobs(args.jobs)
        cfg = load_config(
            args.config,
            overrides={"out": args.out, "seed": args.seed, "dense_cap": args.dense_cap},
        )
        prevalidate_windows(cfg, assert_mode=not args.report_only)
        out_dir = Path(cfg.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        manifest["config_hash"] = cfg.config_hash
        manifest["seed"] = cfg.seed
        manifest["config"] = cfg.canonical()
        failed = _dispatch(args.command, cfg, out_dir, manifest, args.report_only)
        if failed and not args.report_only:
            raise CheckFailed("failing checks: " + ", ".join(failed))
        manifest["status"] = "ok"
    except ConfigInvalid as exc:
        manifest["failure"] = f"ConfigInvalid: {exc}"
        print(f"config error: {exc}", file=sys.stderr)
        code = 2
    except (BudgetExceeded, DenseCapExceeded) as exc:
        manifest["failure"] = f"{type(exc).__name__}: {exc}"
        print(f"budget error: {exc}", file=sys.stderr)
        code = 3
    except CheckFailed as exc:
        manifest["status"] = "checks-failed"
        manifest["failure"] = f"CheckFailed: {exc}"
        print(f"check failure: {exc}", file=sys.stderr)
        code = 1
    except BesovLabError as exc:
        # everything else traces back to what the config asked for
        # (index constraints, violated assumptions, spectra incompatible
        # with the requested variant), so it is reported as a config error
        manifest["failure"] = f"{type(exc).__name__}: {exc}"
        print(f"config error: {type(exc).__name__}: {exc}", file=sys.stderr)
        code = 2
    finally:
        manifest["timings_ms"]["total"] = round((time.perf_counter() - t_start) * 1e3, 3)
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
            path = out_dir / "manifest.json"
            path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        except OSError:
            print(f"warning: could not write manifest under {out_dir}", file=sys.stderr)
    return code


if __name__ == "__main__":
    raise SystemExit(main())
