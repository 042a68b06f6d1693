"""``hydefuse`` command line: simulate, fuse, denoise, contraction, metrics.

Parameters resolve in three layers: built-in defaults, then a JSON
``--config`` file, then explicit flags.  Every command that writes a report
echoes the resolved configuration.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from contextlib import nullcontext
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .core import DimensionError, HsbFormatError, HsiImage, SpatialDims, read_hsb, write_hsb
from .denoiser import CapacityError as DenoiserCapacityError
from .denoiser import DenoiserParams, denoise_image
from .forward import ForwardModel, NoiseSpec, UndefinedSnrError, generate_scene, parse_response, simulate_observations
from .fusion import DivergenceError, FusionOptions, NumericFailure, default_step_size, run, _step_from_fraction
from .metrics import compute_metrics
from .pipeline import bicubic_baseline, build_problem
from .spectral import CapacityError, DENSE_UNKNOWN_LIMIT, p_handle, power_method_mu, verify_contraction_suite

logger = logging.getLogger("hydefuse")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_IO = 4

DEFAULTS = {
    "blur": "starck",
    "radius": 7,
    "std": 2.0,
    "decimation": 4,
    "lam": 1.0,
    "response": None,
    "subspace_dim": None,
    "patch": 3,
    "window": 5,
    "sigma1": 0.039,
    "sigma2": 0.039,
    "clusters": 32,
    "denoiser": "caskd",
    "gamma_frac": 1.8,
    "max_iters": 1000,
    "tol": 1e-8,
    "init": "surrogate",
    "seed": 0,
    "snr_h": 20.0,
    "snr_m": 20.0,
    "threads": None,
    "mu": False,
    "gamma_grid": "0.1,0.5,1.0,1.5,1.8,1.9",
    "sigma_grid": "0.039:0.039",
    "dense_checks": 0,
    "scale": 1,
    "global_psnr": False,
    "kind": "caskd",
}

_KEY_ALIASES = {"lambda": "lam"}


class ConfigError(ValueError):
    pass


def _snr(text) -> float:
    try:
        return float(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad SNR {text!r}") from exc


def _float_list(text: str) -> list:
    return [float(t) for t in str(text).split(",") if t.strip()]


def _sigma_pairs(text: str) -> list:
    pairs = []
    for item in str(text).split(","):
        if not item.strip():
            continue
        a, _, b = item.partition(":")
        pairs.append((float(a), float(b or a)))
    return pairs


# -- parser -------------------------------------------------------------------

def _add_model_flags(p):
    g = p.add_argument_group("forward model")
    g.add_argument("--blur", choices=["starck", "gauss"], default=None)
    g.add_argument("--radius", type=int, default=None)
    g.add_argument("--std", type=float, default=None)
    g.add_argument("--decimation", type=int, default=None)
    g.add_argument("--lambda", dest="lam", type=float, default=None)
    g.add_argument("--response", default=None,
                   help="'box:K' or a JSON file holding an L_h x L_m matrix")


def _add_denoiser_flags(p):
    g = p.add_argument_group("denoiser")
    g.add_argument("--patch", type=int, default=None)
    g.add_argument("--window", type=int, default=None)
    g.add_argument("--sigma1", type=float, default=None, help="RBF bandwidth of W")
    g.add_argument("--sigma2", type=float, default=None, help="RBF bandwidth of V")
    g.add_argument("--clusters", type=int, default=None)


def _add_common(p):
    p.add_argument("--config", default=None, help="JSON file of parameter defaults")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hydefuse", description="Hyperspectral/multispectral fusion with kernel denoisers")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate HS/MS observations of a scene")
    _add_common(p)
    _add_model_flags(p)
    src = p.add_mutually_exclusive_group()
    src.add_argument("--input", default=None, help="ground-truth scene (.hsb)")
    src.add_argument("--synthetic", nargs=5, type=int, metavar=("ROWS", "COLS", "BANDS", "RANK", "SEED"))
    p.add_argument("--snr-h", dest="snr_h", type=_snr, default=None)
    p.add_argument("--snr-m", dest="snr_m", type=_snr, default=None)
    p.add_argument("--snr", type=_snr, default=None, help="set both SNRs (dB, 'inf' for none)")

    p = sub.add_parser("fuse", help="run the plug-and-play fusion")
    _add_common(p)
    _add_model_flags(p)
    _add_denoiser_flags(p)
    p.add_argument("--hs", required=True)
    p.add_argument("--ms", required=True)
    p.add_argument("--gt", default=None)
    p.add_argument("--model", default=None, help="model.json written by 'simulate'")
    p.add_argument("--subspace-dim", dest="subspace_dim", type=int, default=None)
    p.add_argument("--denoiser", choices=["caskd", "w", "v", "none"], default=None)
    p.add_argument("--gamma-frac", dest="gamma_frac", type=float, default=None)
    p.add_argument("--max-iters", dest="max_iters", type=int, default=None)
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--init", choices=["zeros", "ones", "noise", "surrogate"], default=None)
    p.add_argument("--trace", default=None, help="trace CSV path (default OUT/trace.csv)")
    p.add_argument("--mu", action="store_const", const=True, default=None,
                   help="also estimate the contraction factor")

    p = sub.add_parser("denoise", help="denoise an HSB image with W, V or CasKD")
    _add_common(p)
    _add_denoiser_flags(p)
    p.add_argument("--input", required=True)
    p.add_argument("--guide", default=None)
    p.add_argument("--gt", default=None)
    p.add_argument("--kind", choices=["caskd", "w", "v"], default=None)

    p = sub.add_parser("contraction", help="tabulate contraction factors on a small problem")
    _add_common(p)
    _add_model_flags(p)
    _add_denoiser_flags(p)
    p.add_argument("--hs", default=None)
    p.add_argument("--ms", default=None)
    p.add_argument("--model", default=None)
    p.add_argument("--synthetic", nargs=5, type=int, metavar=("ROWS", "COLS", "BANDS", "RANK", "SEED"))
    p.add_argument("--snr-h", dest="snr_h", type=_snr, default=None)
    p.add_argument("--snr-m", dest="snr_m", type=_snr, default=None)
    p.add_argument("--subspace-dim", dest="subspace_dim", type=int, default=None)
    p.add_argument("--gamma-grid", dest="gamma_grid", default=None, help="comma list of gamma*beta values")
    p.add_argument("--sigma-grid", dest="sigma_grid", default=None, help="comma list of sigma1:sigma2 pairs")
    p.add_argument("--dense-checks", dest="dense_checks", type=int, default=None)

    p = sub.add_parser("metrics", help="quality metrics between two HSB images")
    p.add_argument("--gt", required=True, help="reference image")
    p.add_argument("--input", required=True, help="estimate")
    p.add_argument("--scale", type=int, default=None, help="resolution ratio for ERGAS")
    p.add_argument("--global-psnr", dest="global_psnr", action="store_const", const=True, default=None)
    p.add_argument("--config", default=None)
    p.add_argument("-v", "--verbose", action="store_true")
    return parser


# -- config resolution --------------------------------------------------------

def _load_config_file(path) -> dict:
    if path is None:
        return {}
    with open(path) as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise ConfigError("config file must hold a JSON object")
    return {_KEY_ALIASES.get(k.replace("-", "_"), k.replace("-", "_")): v for k, v in raw.items()}


def resolve(args, base: dict | None = None) -> dict:
    """Defaults, then ``base`` (e.g. a saved model), then the config file, then flags."""
    cfg = dict(DEFAULTS)
    cfg.update(base or {})
    cfg.update(_load_config_file(getattr(args, "config", None)))
    for k, v in vars(args).items():
        if v is not None and k not in ("config", "command", "verbose"):
            cfg[k] = v
    if cfg.get("snr") is not None:
        cfg["snr_h"] = cfg["snr_m"] = cfg["snr"]
    return cfg


def _model_base(path) -> dict:
    if path is None:
        return {}
    with open(path) as fh:
        m = json.load(fh)
    return {_KEY_ALIASES.get(k, k): v for k, v in m.items() if k not in ("rows", "cols", "noise")}


def _response(cfg: dict, hs_bands: int, ms_bands: int | None) -> np.ndarray:
    spec = cfg.get("response")
    if spec is None:
        if ms_bands is None:
            spec = "box:4"
        else:
            spec = f"box:{ms_bands}"
    if isinstance(spec, str) and not spec.startswith("box:"):
        with open(spec) as fh:
            spec = json.load(fh)
    R = parse_response(spec, hs_bands)
    if R.ndim != 2 or R.shape[0] != hs_bands or (ms_bands is not None and R.shape[1] != ms_bands):
        raise ConfigError(f"response of shape {R.shape} does not fit {hs_bands} HS bands")
    return R


def _model(cfg: dict, dims: SpatialDims, hs_bands: int, ms_bands: int | None) -> ForwardModel:
    return ForwardModel(
        ms_dims=dims,
        response=_response(cfg, hs_bands, ms_bands),
        decimation=int(cfg["decimation"]),
        blur=cfg["blur"],
        radius=int(cfg["radius"]),
        std=float(cfg["std"]),
        lam=float(cfg["lam"]),
    )


def _params(cfg: dict) -> DenoiserParams:
    return DenoiserParams(
        patch_size=int(cfg["patch"]),
        window=int(cfg["window"]),
        sigma_w=float(cfg["sigma1"]),
        sigma_v=float(cfg["sigma2"]),
        clusters=int(cfg["clusters"]),
        seed=int(cfg["seed"]),
    )


def _jsonable(cfg: dict) -> dict:
    out = {}
    for k, v in cfg.items():
        if isinstance(v, float) and not math.isfinite(v):
            v = str(v)
        elif isinstance(v, np.ndarray):
            v = v.tolist()
        elif isinstance(v, tuple):
            v = list(v)
        out[k] = v
    return out


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# -- commands -----------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = resolve(args)
    out = Path(cfg["out"])
    if cfg.get("input"):
        truth = read_hsb(cfg["input"])
    elif cfg.get("synthetic"):
        rows, cols, bands, rank, seed = cfg["synthetic"]
        truth = generate_scene(SpatialDims(rows, cols), bands, rank, seed)
    else:
        raise ConfigError("simulate needs --input or --synthetic")
    model = _model(cfg, truth.dims, truth.bands, None)
    noise = NoiseSpec(float(cfg["snr_h"]), float(cfg["snr_m"]), int(cfg["seed"]))
    y_h, y_m = simulate_observations(truth, model, noise)
    out.mkdir(parents=True, exist_ok=True)
    write_hsb(out / "Y_h.hsb", y_h)
    write_hsb(out / "Y_m.hsb", y_m)
    write_hsb(out / "gt.hsb", truth)
    model_cfg = model.to_config()
    model_cfg["noise"] = _jsonable(asdict(noise))
    _write_json(out / "model.json", model_cfg)
    print(f"Y_h {y_h.rows}x{y_h.cols}x{y_h.bands}, Y_m {y_m.rows}x{y_m.cols}x{y_m.bands} -> {out}")
    return EXIT_OK


def cmd_fuse(args) -> int:
    cfg = resolve(args, _model_base(args.model))
    out = Path(cfg["out"])
    y_h, y_m = read_hsb(cfg["hs"]), read_hsb(cfg["ms"])
    gt = read_hsb(cfg["gt"]) if cfg.get("gt") else None
    model = _model(cfg, y_m.dims, y_h.bands, y_m.bands)
    kind = None if cfg["denoiser"] == "none" else cfg["denoiser"]
    prob = build_problem(y_h, y_m, model, _params(cfg), cfg["subspace_dim"], kind)

    frac = float(cfg["gamma_frac"])
    if 0 < frac < 2:
        gamma, beta, bound = default_step_size(prob, frac)
    else:
        gamma, beta, bound = _step_from_fraction(prob, frac)
    opts = FusionOptions(
        gamma=gamma,
        max_iters=int(cfg["max_iters"]),
        tol=float(cfg["tol"]),
        init=cfg["init"],
        init_seed=int(cfg["seed"]),
        ground_truth=gt,
    )
    report = {
        "config": _jsonable({**cfg, "response": model.response.tolist()}),
        "beta": beta,
        "beta_bound": bound,
        "gamma": gamma,
        "mu": None,
        "subspace_dim": prob.sub.dim,
    }
    if cfg["mu"]:
        report["mu"] = power_method_mu(p_handle(prob, gamma), iters=10000, tol=1e-9)

    out.mkdir(parents=True, exist_ok=True)
    trace_path = Path(cfg["trace"]) if cfg.get("trace") else out / "trace.csv"
    try:
        result = run(prob, opts)
    except (DivergenceError, NumericFailure) as exc:
        exc.trace.write_csv(trace_path)
        report.update(status="diverged", message=str(exc), iterations=exc.trace.iterations_run,
                      converged=False)
        _write_json(out / "report.json", report)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED

    result.trace.write_csv(trace_path)
    write_hsb(out / "Z_hat.hsb", result.Z)
    report.update(
        status="ok",
        iterations=result.trace.iterations_run,
        converged=result.trace.converged,
        empirical_rate=_finite_or_none(result.trace.empirical_rate()),
    )
    if gt is not None:
        d = model.decimation
        report["metrics"] = asdict(compute_metrics(gt, result.Z, d))
        report["bicubic"] = asdict(compute_metrics(gt, bicubic_baseline(y_h, d), d))
        print(f"PSNR fused {report['metrics']['psnr']:.2f} dB, bicubic {report['bicubic']['psnr']:.2f} dB")
    _write_json(out / "report.json", report)
    print(f"{result.trace.iterations_run} iterations, converged={result.trace.converged}, "
          f"beta={beta:.6g}, gamma={gamma:.6g} -> {out}")
    return EXIT_OK


def _finite_or_none(x):
    return float(x) if x is not None and math.isfinite(x) else None


def cmd_denoise(args) -> int:
    cfg = resolve(args)
    out = Path(cfg["out"])
    noisy = read_hsb(cfg["input"])
    guide = read_hsb(cfg["guide"]) if cfg.get("guide") else None
    result = denoise_image(noisy, _params(cfg), cfg["kind"], guide)
    out.mkdir(parents=True, exist_ok=True)
    write_hsb(out / "denoised.hsb", result)
    if cfg.get("gt"):
        gt = read_hsb(cfg["gt"])
        rep = compute_metrics(gt, result)
        print(rep.table())
        _write_json(out / "report.json", {"config": _jsonable(cfg), "metrics": asdict(rep)})
    return EXIT_OK


def cmd_contraction(args) -> int:
    cfg = resolve(args, _model_base(getattr(args, "model", None)))
    out = Path(cfg["out"])
    if cfg.get("hs") and cfg.get("ms"):
        y_h, y_m = read_hsb(cfg["hs"]), read_hsb(cfg["ms"])
    elif cfg.get("synthetic"):
        rows, cols, bands, rank, seed = cfg["synthetic"]
        truth = generate_scene(SpatialDims(rows, cols), bands, rank, seed)
        sim_model = _model(cfg, truth.dims, bands, None)
        y_h, y_m = simulate_observations(
            truth, sim_model, NoiseSpec(float(cfg["snr_h"]), float(cfg["snr_m"]), int(cfg["seed"])))
    else:
        raise ConfigError("contraction needs --hs/--ms or --synthetic")
    model = _model(cfg, y_m.dims, y_h.bands, y_m.bands)
    params = _params(cfg)
    prob = build_problem(y_h, y_m, model, params, cfg["subspace_dim"], None)
    n = prob.latent_shape[0] * prob.latent_shape[1]
    if n > DENSE_UNKNOWN_LIMIT:
        raise CapacityError(f"{n} unknowns exceed the contraction-analysis limit of {DENSE_UNKNOWN_LIMIT}")
    guide = HsiImage.from_matrix(prob.surrogate(), model.ms_dims)
    report = verify_contraction_suite(prob, guide, _float_list(cfg["gamma_grid"]),
                                      _sigma_pairs(cfg["sigma_grid"]), params,
                                      dense_checks=int(cfg["dense_checks"]))
    out.mkdir(parents=True, exist_ok=True)
    report.write_csv(out / "mu_table.csv")
    for r in report.rows:
        extra = "" if r.mu_dense is None else f"  dense {r.mu_dense:.6f}"
        print(f"gamma={r.gamma_frac:g}/beta sigma=({r.sigma1:g},{r.sigma2:g})  mu={r.mu:.6f}{extra}")
    print(f"beta={report.beta:.6g}; all contractive: {report.all_contractive}")
    return EXIT_OK


def cmd_metrics(args) -> int:
    cfg = resolve(args)
    rep = compute_metrics(read_hsb(cfg["gt"]), read_hsb(cfg["input"]), int(cfg["scale"]),
                          bool(cfg["global_psnr"]))
    print(rep.table())
    print(rep.to_json())
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "fuse": cmd_fuse,
    "denoise": cmd_denoise,
    "contraction": cmd_contraction,
    "metrics": cmd_metrics,
}


def _thread_limit(n):
    if not n:
        return nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=int(n))


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with _thread_limit(getattr(args, "threads", None)):
            return COMMANDS[args.command](args)
    except (HsbFormatError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, DimensionError, CapacityError, DenoiserCapacityError, UndefinedSnrError,
            ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
