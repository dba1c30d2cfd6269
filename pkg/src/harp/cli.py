"""Command-line entry point.

Subcommands: schedule, equiv-check, gen, fit, diag, pack, unpack, bench,
sweep.  All outputs are plain text or CSV; CSV begins with a single
"# generated <iso>" line unless --no-timestamp is passed, and with that
flag every command is byte-for-byte deterministic given its inputs.

Exit codes: 0 success, 2 configuration or usage error, 3 numeric or
runtime failure, 4 file-format error.

Config files are flat key=value lines ('#' starts a comment).  Known keys:

    problem    d_in d_out outlier_channels outlier_scale rho samples seed
               problem_w problem_h  (HTN1 paths; override the synthetic spec)
    schedule   b_base b_max mode (mixed-radix|kronecker) passes
    fitting    steps lr lambda_bd reg_block refresh_period
    quantizer  quantizer (spec string, see parse_quantizer)
    output     out_prefix
    sweep      suite_size

Quantizer spec strings are KIND[:key=value,...], e.g.
"scalar-rtn:bits=2,group=32" or "codebook-vq:bits=2,block=2,seed=0".
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .diagnostics import DiagnosticsReport, run_battery
from .errors import FormatError, HarpError, InvalidInputError
from .fitting import FitConfig, LayerProblem, evaluate_losses, fit_layer
from .numerics import SeededRng
from .packing import pack_int8, overhead_bpp, unpack
from .problems import SyntheticSpec, gen_problem, read_tensor, write_tensor
from .procfile import load_processor, save_processor
from .quantizers import QuantizerSpec, spec_from_string
from .schedule import Schedule, greedy_schedule, multiply_count, param_count
from .transform import (
    MODES,
    MultiplyCounter,
    HarpProcessor,
    ProcessorPair,
    apply,
    init_zero,
    rht_equivalence_check,
    select_kron_factorization,
)
from .mixers import identity_mixer, mixer_for_radix

EQUIV_TOL = 1e-12


class ConfigError(HarpError):
    """Bad config file or option value; maps to exit code 2."""


# ============================================================================
# config parsing
# ============================================================================

_CONFIG_TYPES: dict[str, type] = {
    "d_in": int,
    "d_out": int,
    "outlier_channels": int,
    "outlier_scale": float,
    "rho": float,
    "samples": int,
    "seed": int,
    "problem_w": str,
    "problem_h": str,
    "b_base": int,
    "b_max": int,
    "mode": str,
    "passes": int,
    "steps": int,
    "lr": float,
    "lambda_bd": float,
    "reg_block": int,
    "refresh_period": int,
    "quantizer": str,
    "out_prefix": str,
    "suite_size": int,
}

_CONFIG_DEFAULTS: dict[str, object] = {
    "d_in": 32,
    "d_out": 32,
    "outlier_channels": 2,
    "outlier_scale": 30.0,
    "rho": 0.2,
    "samples": None,
    "seed": 0,
    "problem_w": None,
    "problem_h": None,
    "b_base": 8,
    "b_max": 8,
    "mode": "mixed-radix",
    "passes": 1,
    "steps": 1200,
    "lr": 3e-2,
    "lambda_bd": 0.1,
    "reg_block": 8,
    "refresh_period": 1,
    "quantizer": "scalar-rtn:bits=4,group=128",
    "out_prefix": "fit",
    "suite_size": 4,
}


def parse_config(path: str | Path | None) -> dict[str, object]:
    """Defaults overlaid with a key=value file; rejects unknown keys by line."""
    cfg = dict(_CONFIG_DEFAULTS)
    if path is None:
        return cfg
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    seen: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _CONFIG_TYPES:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r} (first at line {seen[key]})")
        seen[key] = lineno
        caster = _CONFIG_TYPES[key]
        try:
            cfg[key] = caster(value)
        except ValueError as e:
            raise ConfigError(
                f"{path}:{lineno}: {key} expects {caster.__name__}, got {value!r}"
            ) from e
    return cfg


def parse_quantizer(text: str) -> QuantizerSpec:
    """Parse a quantizer spec string, mapping failures to exit code 2."""
    try:
        return spec_from_string(text)
    except HarpError as e:
        raise ConfigError(f"bad quantizer spec {text!r}: {e}") from e


def synthetic_from_config(cfg: dict, seed_override: int | None = None) -> SyntheticSpec:
    try:
        return SyntheticSpec(
            d_in=cfg["d_in"],
            d_out=cfg["d_out"],
            outlier_channels=cfg["outlier_channels"],
            outlier_scale=cfg["outlier_scale"],
            rho=cfg["rho"],
            seed=cfg["seed"] if seed_override is None else seed_override,
            samples=cfg["samples"],
        )
    except InvalidInputError as e:
        raise ConfigError(str(e)) from e


def problem_from_config(cfg: dict) -> LayerProblem:
    w_path, h_path = cfg["problem_w"], cfg["problem_h"]
    if (w_path is None) != (h_path is None):
        raise ConfigError("problem_w and problem_h must be given together")
    if w_path is not None:
        w = read_tensor(w_path).astype(np.float64)
        h = read_tensor(h_path).astype(np.float64)
        return LayerProblem(w=w, h=h)
    return gen_problem(synthetic_from_config(cfg))


def fitcfg_from_config(cfg: dict) -> FitConfig:
    try:
        return FitConfig(
            steps=cfg["steps"],
            lr=cfg["lr"],
            lambda_bd=cfg["lambda_bd"],
            reg_block=cfg["reg_block"],
            refresh_period=cfg["refresh_period"],
            quantizer=parse_quantizer(cfg["quantizer"]),
        )
    except InvalidInputError as e:
        raise ConfigError(str(e)) from e


def zero_pair_from_config(cfg: dict, d_out: int, d_in: int, seed: int) -> ProcessorPair:
    """RHT-initialized pair (zero angles, seeded random signs) for a layer."""
    if cfg["mode"] not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {cfg['mode']!r}")

    def side(d: int, label: str) -> HarpProcessor:
        rng = SeededRng(seed).derive(f"signs-{label}")
        if cfg["mode"] == "kronecker":
            k, log2n = select_kron_factorization(d)
            sched = greedy_schedule(2**log2n, cfg["b_base"], cfg["b_max"])
            return init_zero(sched, passes=cfg["passes"], mode="kronecker", kron_k=k, sign_rng=rng)
        sched = greedy_schedule(d, cfg["b_base"], cfg["b_max"])
        return init_zero(sched, passes=cfg["passes"], sign_rng=rng)

    try:
        return ProcessorPair(u=side(d_out, "u"), v=side(d_in, "v"))
    except HarpError as e:
        raise ConfigError(f"cannot build processors for {d_out}x{d_in}: {e}") from e


# ============================================================================
# output helpers
# ============================================================================


def _timestamp_lines(args) -> list[str]:
    if getattr(args, "no_timestamp", False):
        return []
    return [f"# generated {datetime.now(timezone.utc).isoformat(timespec='seconds')}"]


def emit_csv(args, header: str, rows: list[str], path: Path | None = None) -> None:
    lines = _timestamp_lines(args) + [header] + rows
    text = "\n".join(lines) + "\n"
    if path is None and getattr(args, "out", None):
        path = Path(args.out)
    if path is None:
        sys.stdout.write(text)
    else:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)


def out_dir(args) -> Path:
    d = Path(getattr(args, "out_dir", ".") or ".")
    d.mkdir(parents=True, exist_ok=True)
    return d


def default_threads() -> int:
    raw = os.environ.get("HARP_DEFAULT_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _map_maybe_parallel(fn, items, threads: int):
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# ============================================================================
# subcommands
# ============================================================================


def cmd_schedule(args) -> int:
    sched = greedy_schedule(args.dim, args.b_base, args.b_max)
    radices = ",".join(str(b) for b in sched.radices)
    print(
        f"dim={sched.dim} radices={radices} stages={sched.stages} "
        f"params_per_pass={param_count(sched)} multiplies={multiply_count(sched)}"
    )
    return 0


def _parse_schedule_arg(dim: int, text: str | None, b_base: int, b_max: int) -> Schedule:
    if text is None:
        return greedy_schedule(dim, b_base, b_max)
    try:
        radices = tuple(int(part) for part in text.split(","))
    except ValueError as e:
        raise ConfigError(f"--schedule expects comma-separated integers, got {text!r}") from e
    return Schedule(dim, radices)


def cmd_equiv_check(args) -> int:
    if args.kron:
        k, log2n = select_kron_factorization(args.dim) if args.kron_k is None else (
            args.kron_k,
            (args.dim // max(args.kron_k, 1)).bit_length() - 1,
        )
        inner = args.dim // k if k else 0
        if k * (2**log2n) != args.dim or inner != 2**log2n:
            raise ConfigError(f"--kron-k {k} does not factor {args.dim} as K * 2^L")
        sched = _parse_schedule_arg(inner, args.schedule, args.b_base, args.b_max)
        rng = SeededRng(args.seed).derive("signs") if args.seed is not None else None
        p = init_zero(sched, passes=args.passes, mode="kronecker", kron_k=k, sign_rng=rng)
    else:
        sched = _parse_schedule_arg(args.dim, args.schedule, args.b_base, args.b_max)
        rng = SeededRng(args.seed).derive("signs") if args.seed is not None else None
        p = init_zero(sched, passes=args.passes, sign_rng=rng)
    report = rht_equivalence_check(p)
    for key in ("dim", "mode", "passes", "permutation", "max_abs_error", "target_norm"):
        print(f"{key}={report[key]}")
    if report["max_abs_error"] > EQUIV_TOL:
        print(f"FAIL: error above {EQUIV_TOL}", file=sys.stderr)
        return 3
    return 0


def cmd_gen(args) -> int:
    cfg = parse_config(args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    spec = synthetic_from_config(cfg)
    prob = gen_problem(spec)
    base = out_dir(args)
    w_path = Path(args.out_w) if args.out_w else base / f"{args.out_prefix}.w.htn"
    h_path = Path(args.out_h) if args.out_h else base / f"{args.out_prefix}.h.htn"
    write_tensor(w_path, prob.w)
    write_tensor(h_path, prob.h)
    print(f"wrote {w_path} ({prob.w.shape[0]}x{prob.w.shape[1]}) and {h_path} (order {prob.h.shape[0]})")
    return 0


def _load_pair(text: str) -> ProcessorPair:
    parts = text.split(",")
    if len(parts) != 2:
        raise ConfigError(f"--processor expects U_FILE,V_FILE, got {text!r}")
    loaded = []
    for part in parts:
        obj = load_processor(part.strip())
        loaded.append(unpack(obj) if not isinstance(obj, HarpProcessor) else obj)
    return ProcessorPair(u=loaded[0], v=loaded[1])


def cmd_fit(args) -> int:
    cfg = parse_config(args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    prob = problem_from_config(cfg)
    fit_cfg = fitcfg_from_config(cfg)
    pair0 = zero_pair_from_config(cfg, prob.d_out, prob.d_in, cfg["seed"])
    try:
        fitted, trace = fit_layer(prob, pair0, fit_cfg)
    except (ConfigError, FormatError, InvalidInputError):
        raise
    except HarpError as e:
        raise type(e)(f"layer {prob.d_out}x{prob.d_in}: {e}") from e

    base = out_dir(args)
    prefix = cfg["out_prefix"]
    save_processor(base / f"{prefix}.u.hrp", fitted.u)
    save_processor(base / f"{prefix}.v.hrp", fitted.v)
    emit_csv(args, trace.CSV_HEADER, trace.csv_lines(), base / f"{prefix}.trace.csv")
    before = run_battery(prob, pair0, fit_cfg.quantizer, reg_block=cfg["reg_block"])
    after = run_battery(prob, fitted, fit_cfg.quantizer, reg_block=cfg["reg_block"])
    emit_csv(
        args,
        DiagnosticsReport.CSV_HEADER,
        [before.csv_row(), after.csv_row()],
        base / f"{prefix}.report.csv",
    )
    first, last = trace.rows[0], trace.rows[-1]
    print(f"fitted {prob.d_out}x{prob.d_in} in {trace.wall_time:.2f}s ({fit_cfg.steps} steps)")
    print(f"l_fit {first.l_fit:.6e} -> {last.l_fit:.6e}  (quantizer calls: {trace.quantizer_calls})")
    print(f"wrote {prefix}.u.hrp {prefix}.v.hrp {prefix}.trace.csv {prefix}.report.csv in {base}")
    return 0


def _diag_problem(args, cfg: dict, seed: int | None = None) -> LayerProblem:
    if args.problem:
        w = read_tensor(f"{args.problem}.w.htn").astype(np.float64)
        h = read_tensor(f"{args.problem}.h.htn").astype(np.float64)
        return LayerProblem(w=w, h=h)
    if seed is not None:
        cfg = dict(cfg, seed=seed)
    return problem_from_config(cfg)


def cmd_diag(args) -> int:
    cfg = parse_config(args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    quantizer = parse_quantizer(args.quantizer if args.quantizer else cfg["quantizer"])

    if args.sweep is not None:
        if args.problem:
            raise ConfigError("--sweep generates synthetic problems; drop --problem")
        seeds = list(range(cfg["seed"], cfg["seed"] + args.sweep))

        def one(seed: int) -> DiagnosticsReport:
            prob = _diag_problem(args, cfg, seed=seed)
            pair = (
                _load_pair(args.processor)
                if args.processor
                else zero_pair_from_config(cfg, prob.d_out, prob.d_in, seed)
            )
            return run_battery(prob, pair, quantizer, reg_block=cfg["reg_block"])

        reports = _map_maybe_parallel(one, seeds, args.threads)
        rows = [f"{seed},{rep.csv_row()}" for seed, rep in zip(seeds, reports)]
        numeric = np.array(
            [
                [r.mu_w_pre, r.mu_w_post, r.mu_h_pre, r.mu_h_post, r.offblock_fraction, r.l_diag, r.proxy_loss]
                for r in reports
            ]
        ).mean(axis=0)
        degenerate = int(any(r.mu_h_degenerate for r in reports))
        rows.append(
            "mean,"
            + f"{numeric[0]:.17g},{numeric[1]:.17g},{numeric[2]:.17g},{numeric[3]:.17g},"
            + f"{degenerate},{numeric[4]:.17g},{numeric[5]:.17g},{numeric[6]:.17g},,"
        )
        emit_csv(args, "seed," + DiagnosticsReport.CSV_HEADER, rows)
        return 0

    prob = _diag_problem(args, cfg)
    pair = (
        _load_pair(args.processor)
        if args.processor
        else zero_pair_from_config(cfg, prob.d_out, prob.d_in, cfg["seed"])
    )
    report = run_battery(prob, pair, quantizer, reg_block=cfg["reg_block"])
    if args.pretty:
        print(report.pretty())
    else:
        emit_csv(args, DiagnosticsReport.CSV_HEADER, [report.csv_row()])
    return 0


def _layer_dims(args, p) -> tuple[int, int]:
    if args.layer:
        try:
            d_out, d_in = (int(part) for part in args.layer.split(","))
        except ValueError as e:
            raise ConfigError(f"--layer expects D_OUT,D_IN, got {args.layer!r}") from e
        return d_out, d_in
    return p.dim, p.dim


def cmd_pack(args) -> int:
    obj = load_processor(args.infile)
    if not isinstance(obj, HarpProcessor):
        raise ConfigError(f"{args.infile} is already packed")
    packed = pack_int8(obj)
    save_processor(args.outfile, packed)
    d_out, d_in = _layer_dims(args, obj)
    f32 = overhead_bpp(obj, d_out, d_in)
    i8 = overhead_bpp(packed, d_out, d_in)
    print(f"packed {args.infile} -> {args.outfile}")
    print(f"overhead_bpp over {d_out}x{d_in}: float32={f32:.6g} int8={i8:.6g}")
    return 0


def cmd_unpack(args) -> int:
    obj = load_processor(args.infile)
    if isinstance(obj, HarpProcessor):
        raise ConfigError(f"{args.infile} holds float32 angles already")
    save_processor(args.outfile, unpack(obj))
    print(f"unpacked {args.infile} -> {args.outfile}")
    return 0


def cmd_bench(args) -> int:
    try:
        dims = [int(part) for part in args.dims.split(",")]
    except ValueError as e:
        raise ConfigError(f"--dims expects comma-separated integers, got {args.dims!r}") from e
    rows = []
    rng = SeededRng(args.seed if args.seed is not None else 0)
    for d in dims:
        sched = greedy_schedule(d, args.b_base, args.b_max)
        p = init_zero(sched, passes=args.passes)
        x = rng.derive(f"bench-{d}").gaussians(args.batch * d).reshape(args.batch, d)
        counter = MultiplyCounter()
        apply(p, x, counter=counter)
        measured = counter.count // args.batch
        best = float("inf")
        for _ in range(args.repeats):
            t0 = time.perf_counter()
            apply(p, x)
            best = min(best, time.perf_counter() - t0)
        radices = "x".join(str(b) for b in sched.radices)
        rows.append(
            f"{d},{radices},{param_count(sched, args.passes)},"
            f"{multiply_count(sched, args.passes)},{measured},{best:.6e}"
        )
    emit_csv(
        args,
        "dim,radices,params,multiplies_predicted,multiplies_measured,seconds_per_apply",
        rows,
    )
    return 0


def _fit_suite_mean(cfg: dict, fit_cfg: FitConfig, pair_builder, threads: int) -> tuple[float, float]:
    """Mean (zero, fitted) l_diag over the config's synthetic suite."""
    seeds = list(range(cfg["seed"], cfg["seed"] + cfg["suite_size"]))

    def one(seed: int) -> tuple[float, float]:
        prob = gen_problem(synthetic_from_config(cfg, seed_override=seed))
        pair0 = pair_builder(prob, seed)
        zero = evaluate_losses(pair0, prob, fit_cfg)["l_diag"]
        fitted, _ = fit_layer(prob, pair0, fit_cfg)
        post = evaluate_losses(fitted, prob, fit_cfg)["l_diag"]
        return zero, post

    results = _map_maybe_parallel(one, seeds, threads)
    arr = np.array(results)
    return float(arr[:, 0].mean()), float(arr[:, 1].mean())


def cmd_sweep(args) -> int:
    cfg = parse_config(args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    fit_cfg = fitcfg_from_config(cfg)
    d_in, d_out = cfg["d_in"], cfg["d_out"]

    if args.kind == "radix":
        rows = []
        for b in (2, 4, 8, 16):
            try:
                sched_v = greedy_schedule(d_in, b, b)
                sched_u = greedy_schedule(d_out, b, b)
            except HarpError as e:
                raise ConfigError(f"radix {b} cannot schedule {d_out}x{d_in}: {e}") from e

            def builder(prob, seed, su=sched_u, sv=sched_v):
                return ProcessorPair(
                    u=init_zero(su, passes=cfg["passes"], sign_rng=SeededRng(seed).derive("signs-u")),
                    v=init_zero(sv, passes=cfg["passes"], sign_rng=SeededRng(seed).derive("signs-v")),
                )

            zero, fitted = _fit_suite_mean(cfg, fit_cfg, builder, args.threads)
            radices = "x".join(str(r) for r in sched_v.radices)
            rows.append(
                f"{b},{radices},{sched_v.stages},{param_count(sched_v, cfg['passes'])},"
                f"{zero:.17g},{fitted:.17g}"
            )
        emit_csv(args, "b,radices_v,stages_v,params_v,l_diag_zero,l_diag_fitted", rows)
        return 0

    # mixer ablation: identity vs hadamard-family mixers on the same schedules
    sched_v = greedy_schedule(d_in, cfg["b_base"], cfg["b_max"])
    sched_u = greedy_schedule(d_out, cfg["b_base"], cfg["b_max"])
    rows = []
    for label in ("identity", "hadamard"):

        def builder(prob, seed, label=label):
            def mixers_for(sched):
                if label == "identity":
                    return tuple(identity_mixer(b) for b in sched.radices)
                return tuple(mixer_for_radix(b) for b in sched.radices)

            return ProcessorPair(
                u=init_zero(
                    sched_u,
                    mixers=mixers_for(sched_u),
                    passes=cfg["passes"],
                    sign_rng=SeededRng(seed).derive("signs-u"),
                ),
                v=init_zero(
                    sched_v,
                    mixers=mixers_for(sched_v),
                    passes=cfg["passes"],
                    sign_rng=SeededRng(seed).derive("signs-v"),
                ),
            )

        zero, fitted = _fit_suite_mean(cfg, fit_cfg, builder, args.threads)
        rows.append(f"{label},{zero:.17g},{fitted:.17g}")
    emit_csv(args, "mixer,l_diag_zero,l_diag_fitted", rows)
    return 0


# ============================================================================
# parser
# ============================================================================


def _add_common(sub, *, config=False, out=False) -> None:
    sub.add_argument("--seed", type=int, default=None, help="override the stream seed")
    sub.add_argument("--out-dir", default=".", help="directory for output files")
    sub.add_argument("--no-timestamp", action="store_true", help="omit the generated-at CSV line")
    sub.add_argument("--threads", type=int, default=default_threads(),
                     help="parallelism across independent problems (env HARP_DEFAULT_THREADS)")
    if config:
        sub.add_argument("--config", default=None, help="key=value config file")
    if out:
        sub.add_argument("--out", default=None, help="write CSV here instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="harp",
        description="Structured orthogonal processors for low-bit quantization.",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    s = subs.add_parser("schedule", help="print the greedy radix schedule for a dimension")
    s.add_argument("--dim", type=int, required=True)
    s.add_argument("--b-base", type=int, default=8)
    s.add_argument("--b-max", type=int, default=8)
    s.set_defaults(func=cmd_schedule)

    s = subs.add_parser("equiv-check", help="verify the zero-angle transform matches the signed Hadamard")
    s.add_argument("--dim", type=int, required=True)
    s.add_argument("--schedule", default=None, help="comma-separated radices (default: greedy)")
    s.add_argument("--kron", action="store_true", help="use the Kronecker factorization")
    s.add_argument("--kron-k", type=int, default=None, help="explicit sign-table order")
    s.add_argument("--b-base", type=int, default=2)
    s.add_argument("--b-max", type=int, default=8)
    s.add_argument("--passes", type=int, default=1)
    _add_common(s)
    s.set_defaults(func=cmd_equiv_check)

    s = subs.add_parser("gen", help="generate a synthetic layer problem as HTN1 tensors")
    s.add_argument("--spec", dest="config", default=None, help="key=value config file")
    s.add_argument("--out-w", default=None)
    s.add_argument("--out-h", default=None)
    s.add_argument("--out-prefix", default="problem")
    _add_common(s)
    s.set_defaults(func=cmd_gen)

    s = subs.add_parser("fit", help="fit a processor pair to a layer problem")
    _add_common(s, config=True)
    s.set_defaults(func=cmd_fit)

    s = subs.add_parser("diag", help="run the diagnostics battery, emitting CSV")
    s.add_argument("--problem", default=None, help="tensor prefix (reads PREFIX.w.htn and PREFIX.h.htn)")
    s.add_argument("--processor", default=None, help="U_FILE,V_FILE (default: zero pair)")
    s.add_argument("--quantizer", default=None, help="quantizer spec string")
    s.add_argument("--pretty", action="store_true", help="human-readable table instead of CSV")
    s.add_argument("--sweep", type=int, default=None, metavar="N", help="N-seed sweep with a mean row")
    _add_common(s, config=True, out=True)
    s.set_defaults(func=cmd_diag)

    s = subs.add_parser("pack", help="quantize a processor's angles to int8")
    s.add_argument("infile")
    s.add_argument("outfile")
    s.add_argument("--layer", default=None, help="D_OUT,D_IN for overhead accounting")
    s.set_defaults(func=cmd_pack)

    s = subs.add_parser("unpack", help="expand an int8 processor back to float angles")
    s.add_argument("infile")
    s.add_argument("outfile")
    s.set_defaults(func=cmd_unpack)

    s = subs.add_parser("bench", help="count multiplies and time applies across dimensions")
    s.add_argument("--dims", default="512,1024,2048,4096")
    s.add_argument("--b-base", type=int, default=8)
    s.add_argument("--b-max", type=int, default=8)
    s.add_argument("--passes", type=int, default=1)
    s.add_argument("--batch", type=int, default=4)
    s.add_argument("--repeats", type=int, default=3)
    _add_common(s, out=True)
    s.set_defaults(func=cmd_bench)

    s = subs.add_parser("sweep", help="radix or mixer ablation over a synthetic suite")
    s.add_argument("--kind", choices=("radix", "mixer"), required=True)
    _add_common(s, config=True, out=True)
    s.set_defaults(func=cmd_sweep)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except FormatError as e:
        print(f"format error: {e}", file=sys.stderr)
        return 4
    except InvalidInputError as e:
        print(f"input error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"file error: {e}", file=sys.stderr)
        return 2
    except HarpError as e:
        print(f"runtime error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
