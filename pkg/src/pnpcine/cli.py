"""Command-line interface.

Subcommands: phantom, mask, simulate, recon, denoise, eval, run, certify.
Every parameter can come from flags or a JSON config file (--config;
explicit flags win). Exit codes are distinct per error class:

    0 success                 6 certification failure
    1 unexpected error        7 divergence / numerical failure
    2 usage error             8 undefined metric / SNR
    3 dimension error         9 denoiser error
    4 parameter error        10 missing file / I/O error
    5 format error           11 empty mask
                             12 infeasible mask spec
"""

from __future__ import annotations

import argparse
import json
import sys

from . import io as cio
from .core import SensitivityMaps
from .errors import (
    CertificationError,
    DenoiserError,
    DimensionError,
    DivergenceError,
    EmptyMaskError,
    FormatError,
    InfeasibleMaskError,
    ParameterError,
    PnpCineError,
    UndefinedMetricError,
    UndefinedSnrError,
)
from .harness import ExperimentConfig, format_results_table, rsnr, run_experiment
from .operators import SenseModel, sense_forward
from .phantom import PhantomSpec, add_noise, generate_cine_phantom, generate_coil_maps
from .sampling import MaskSpec, acceleration_of, generate_mask
from .solvers import AdmmConfig, admm_pnp, admm_tv, fista_uwt, lps

EXIT_CODES = [
    (InfeasibleMaskError, 12),
    (EmptyMaskError, 11),
    (DenoiserError, 9),
    (UndefinedMetricError, 8),
    (UndefinedSnrError, 8),
    (DivergenceError, 7),
    (CertificationError, 6),
    (FormatError, 5),
    (ParameterError, 4),
    (DimensionError, 3),
    (PnpCineError, 1),
    (FileNotFoundError, 10),
    (OSError, 10),
]

# flags that must be present (via flag or config file) per subcommand
_REQUIRED = {
    "phantom": ["out"],
    "mask": ["out"],
    "simulate": ["image", "mask", "out"],
    "recon": ["kspace", "mask", "maps", "solver", "out"],
    "denoise": ["weights", "infile", "out"],
    "eval": ["reference", "estimate"],
    "run": ["config"],
    "certify": ["weights"],
}


def _exit_code(exc: BaseException) -> int:
    for cls, code in EXIT_CODES:
        if isinstance(exc, cls):
            return code
    return 1


def _cmd_phantom(args) -> int:
    spec = PhantomSpec(
        nx=args.nx, ny=args.ny, nt=args.nt,
        n_ellipses=args.n_ellipses, motion_amplitude=args.motion, seed=args.seed,
    )
    img = generate_cine_phantom(spec)
    if args.snr_db is not None:
        img = add_noise(img, args.snr_db, seed=args.seed + 2)
    cio.write_cplx(args.out, img)
    if args.png:
        cio.magnitude_png(args.png, img)
    print(f"wrote {args.out} ({spec.nt}x{spec.ny}x{spec.nx})")
    return 0


def _cmd_mask(args) -> int:
    spec = MaskSpec(
        nkx=args.nkx, nky=args.nky, nt=args.nt, R=args.R,
        calib_lines=args.calib_lines, asym_echo_fraction=args.asym_echo, seed=args.seed,
    )
    mask = generate_mask(spec)
    cio.write_mask(args.out, mask)
    if args.png:
        cio.mask_png(args.png, mask)
    print(f"wrote {args.out} (R_nominal={mask.r_nominal:g}, realized={acceleration_of(mask):.3f})")
    return 0


def _cmd_simulate(args) -> int:
    img = cio.read_image(args.image)
    mask = cio.read_mask(args.mask)
    if args.maps:
        maps = SensitivityMaps(cio.read_cplx(args.maps))
    else:
        if args.nc is None:
            raise ParameterError("provide --maps FILE or --nc N")
        maps = generate_coil_maps(args.nc, img.nx, img.ny, seed=args.seed)
        if args.save_maps:
            cio.write_cplx(args.save_maps, maps.maps)
    model = SenseModel(maps, mask)
    k = sense_forward(img, model)
    cio.write_cplx(args.out, k)
    print(f"wrote {args.out} ({k.nc} coils)")
    return 0


def _run_one_solver(args, d, model):
    if args.solver == "admm-pnp":
        handle = args.denoiser
        if handle == "uwt":
            handle = ("uwt", args.tau)
        elif handle == "cnn":
            if not args.weights:
                raise ParameterError("--denoiser cnn requires --weights")
            handle = "cnn:" + args.weights
        cfg = AdmmConfig(
            nu=args.nu, outer_iters=args.iters, cg_iters=args.cg_iters,
            cg_tol=args.cg_tol, denoiser=handle,
        )
        return admm_pnp(d, model, cfg)
    if args.solver == "cs-uwt":
        return fista_uwt(d, model, args.reg_lambda, args.iters)
    if args.solver == "cs-tv":
        return admm_tv(
            d, model, args.reg_lambda, nu=args.nu,
            outer_iters=args.iters, cg_iters=args.cg_iters, cg_tol=args.cg_tol,
        )
    if args.solver == "lps":
        return lps(d, model, args.lambda_l, args.lambda_s, args.iters)
    raise ParameterError(f"unknown solver {args.solver!r}")


def _cmd_recon(args) -> int:
    mask = cio.read_mask(args.mask)
    d = cio.read_kspace(args.kspace, mask=mask)
    maps = SensitivityMaps(cio.read_cplx(args.maps))
    model = SenseModel(maps, mask)
    rep = _run_one_solver(args, d, model)
    cio.write_cplx(args.out, rep.image)
    if args.trace:
        with open(args.trace, "w", encoding="utf-8") as fh:
            fh.write(rep.to_json())
    line = f"wrote {args.out} solver={rep.solver} fidelity={rep.fidelity[-1]:.6e}"
    if args.ref:
        ref = cio.read_image(args.ref)
        line += f" rSNR={rsnr(ref, rep.image):.3f} dB"
    print(line)
    return 0


def _cmd_denoise(args) -> int:
    from .denoiser import denoise_cnn, load_weights

    net = load_weights(args.weights, certify=not args.no_certify)
    img = cio.read_image(args.infile)
    tile = tuple(int(t) for t in args.tile.split(",")) if args.tile else None
    out = denoise_cnn(net, img, tile=tile)
    cio.write_cplx(args.out, out)
    print(f"wrote {args.out}")
    return 0


def _cmd_eval(args) -> int:
    ref = cio.read_image(args.reference)
    est = cio.read_image(args.estimate)
    print(f"{rsnr(ref, est):.6f}")
    return 0


def _cmd_run(args) -> int:
    cfg = ExperimentConfig.from_json_file(args.config)
    if args.seed is not None:
        cfg = ExperimentConfig.from_dict({**cfg.to_dict(), "seed": args.seed})
    report = run_experiment(cfg, args.outdir or "experiment_out")
    print(format_results_table(report["table"]), end="")
    return 0


def _cmd_certify(args) -> int:
    from .denoiser import certify_net, load_weights

    net = load_weights(args.weights, certify=False)
    shape = tuple(int(s) for s in args.shape.split(","))
    estimates = certify_net(net, shape, args.power_iters, args.tol)
    for li, (lay, est) in enumerate(zip(net.layers, estimates)):
        print(f"layer {li}: declared={lay.declared_spectral_norm:.6f} estimated={est:.6f} ok")
    print(f"certified {len(net.layers)} layers on grid {shape}")
    return 0


def build_parser() -> tuple[argparse.ArgumentParser, dict]:
    ap = argparse.ArgumentParser(prog="pnpcine", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)
    subparsers = {}

    p = subparsers["phantom"] = sub.add_parser("phantom", help="generate a cine phantom CPLX file")
    p.add_argument("--nx", type=int, default=64)
    p.add_argument("--ny", type=int, default=64)
    p.add_argument("--nt", type=int, default=16)
    p.add_argument("--n-ellipses", type=int, default=6)
    p.add_argument("--motion", type=float, default=0.15)
    p.add_argument("--snr-db", type=float, default=None, help="add exact-SNR noise")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--png", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_phantom)

    p = subparsers["mask"] = sub.add_parser("mask", help="generate a sampling mask (+ PNG)")
    p.add_argument("--nkx", type=int, default=64)
    p.add_argument("--nky", type=int, default=64)
    p.add_argument("--nt", type=int, default=16)
    p.add_argument("--R", type=float, default=8.0)
    p.add_argument("--calib-lines", type=int, default=4)
    p.add_argument("--asym-echo", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--png", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_mask)

    p = subparsers["simulate"] = sub.add_parser("simulate", help="SENSE simulation to k-space")
    p.add_argument("--image", default=None)
    p.add_argument("--mask", default=None)
    p.add_argument("--maps", default=None, help="coil maps CPLX file")
    p.add_argument("--nc", type=int, default=None, help="generate this many synthetic coils")
    p.add_argument("--save-maps", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_simulate)

    p = subparsers["recon"] = sub.add_parser("recon", help="run one solver on one dataset")
    p.add_argument("--kspace", default=None)
    p.add_argument("--mask", default=None)
    p.add_argument("--maps", default=None)
    p.add_argument("--solver", default=None, choices=["admm-pnp", "cs-uwt", "cs-tv", "lps"])
    p.add_argument("--denoiser", default="identity", choices=["identity", "uwt", "cnn"])
    p.add_argument("--weights", default=None)
    p.add_argument("--tau", type=float, default=0.01, help="uwt denoiser threshold")
    p.add_argument("--nu", type=float, default=1.0)
    p.add_argument("--lambda", dest="reg_lambda", type=float, default=0.01)
    p.add_argument("--lambda-l", dest="lambda_l", type=float, default=0.01)
    p.add_argument("--lambda-s", dest="lambda_s", type=float, default=0.01)
    p.add_argument("--iters", type=int, default=30)
    p.add_argument("--cg-iters", type=int, default=5)
    p.add_argument("--cg-tol", type=float, default=1e-5)
    p.add_argument("--ref", default=None, help="reference image for an rSNR line")
    p.add_argument("--trace", default=None, help="write per-iteration JSON trace here")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_recon)

    p = subparsers["denoise"] = sub.add_parser("denoise", help="apply a weight file to a CPLX image")
    p.add_argument("--weights", default=None)
    p.add_argument("--in", dest="infile", default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--tile", default=None, help="nt,ny,nx tile extents for large inputs")
    p.add_argument("--no-certify", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_denoise)

    p = subparsers["eval"] = sub.add_parser("eval", help="rSNR of estimate against reference")
    p.add_argument("reference", nargs="?", default=None)
    p.add_argument("estimate", nargs="?", default=None)
    p.set_defaults(func=_cmd_eval)

    p = subparsers["run"] = sub.add_parser("run", help="run a full experiment config")
    p.add_argument("--outdir", default=None)
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.set_defaults(func=_cmd_run)

    p = subparsers["certify"] = sub.add_parser("certify", help="check a weight file's norms")
    p.add_argument("--weights", default=None)
    p.add_argument("--shape", default="8,8,8")
    p.add_argument("--power-iters", type=int, default=100)
    p.add_argument("--tol", type=float, default=1e-3)
    p.set_defaults(func=_cmd_certify)

    for name, sp in subparsers.items():
        sp.add_argument("--config", default=None,
                        help="JSON file of defaults for this subcommand's parameters")

    return ap, subparsers


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, subparsers = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.config and args.command != "run":
            with open(args.config, "r", encoding="utf-8") as fh:
                defaults = json.load(fh)
            sp = subparsers[args.command]
            valid = {a.dest for a in sp._actions if a.dest != "help"}
            unknown = set(defaults) - valid
            if unknown:
                raise ParameterError(
                    f"config keys {sorted(unknown)} are not parameters of '{args.command}'"
                )
            sp.set_defaults(**defaults)
            args = parser.parse_args(argv)  # explicit flags still win
        missing = [k for k in _REQUIRED[args.command] if getattr(args, k, None) in (None, "")]
        if missing:
            parser.error(f"{args.command}: missing required parameters: {', '.join(missing)}")
        return args.func(args)
    except PnpCineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code(exc)
    except (FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
