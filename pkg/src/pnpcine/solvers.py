"""Reconstruction solvers.

* admm_pnp  - plug-and-play ADMM with a conjugate-gradient data step and a
              pluggable denoiser (identity, UWT soft-threshold prox, CNN)
* fista_uwt - FISTA on the UWT-l1 objective with a monotone safeguard
* admm_tv   - ADMM split z = Dx for spatiotemporal total variation
* lps       - low-rank plus sparse alternating scheme

All solvers are deterministic given their config and inputs. Per-iteration
diagnostics are collected in a SolveReport; wall times are kept out of the
JSON serialization so reports are bit-identical across reruns.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import ComplexImage, MultiCoilKSpace, l2_norm
from .errors import DenoiserError, DivergenceError, ParameterError
from .operators import SenseModel
from .regularizers import (
    detail_l1_array,
    finite_diff_adjoint_array,
    finite_diff_array,
    prox_uwt_l1_array,
    soft_threshold,
)

__all__ = [
    "AdmmConfig",
    "SolveReport",
    "CgResult",
    "cg_solve",
    "admm_pnp",
    "fista_uwt",
    "admm_tv",
    "lps",
    "svt",
    "resolve_denoiser",
]


@dataclass(frozen=True)
class AdmmConfig:
    """Knobs of the plug-and-play ADMM iteration."""

    nu: float = 1.0
    outer_iters: int = 30
    cg_iters: int = 5
    cg_tol: float = 1e-5
    denoiser: object = "identity"

    def __post_init__(self):
        if self.nu <= 0:
            raise ParameterError("nu must be positive")
        if self.outer_iters < 1 or self.cg_iters < 1:
            raise ParameterError("iteration counts must be >= 1")


@dataclass
class SolveReport:
    """Per-iteration diagnostics plus the final image.

    ``primal_residual`` is ||v_t - x_t|| for admm_pnp, ||Dx - z|| for
    admm_tv, and the iterate-change norm for fista_uwt and lps.
    ``objective`` is None when the solver has no defined objective (CNN
    denoiser). ``wall_time`` is excluded from JSON output so serialized
    reports are pure functions of (config, data).
    """

    solver: str
    params: dict
    image: ComplexImage
    fidelity: list = field(default_factory=list)
    primal_residual: list = field(default_factory=list)
    objective: list | None = None
    wall_time: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)
    iterates: dict | None = None

    def to_json_dict(self, include_timing: bool = False) -> dict:
        doc = {
            "solver": self.solver,
            "params": self.params,
            "iterations": len(self.fidelity),
            "fidelity": self.fidelity,
            "primal_residual": self.primal_residual,
            "objective": self.objective,
        }
        for key, val in sorted(self.extra.items()):
            doc[key] = val
        if include_timing:
            doc["wall_time_s"] = self.wall_time
        return doc

    def to_json(self, include_timing: bool = False) -> str:
        return json.dumps(self.to_json_dict(include_timing), indent=2)

    def format_table(self) -> str:
        lines = [f"# {self.solver}  {self.params}"]
        header = f"{'iter':>4}  {'fidelity':>14}  {'primal_res':>12}"
        if self.objective is not None:
            header += f"  {'objective':>14}"
        header += f"  {'wall_s':>8}"
        lines.append(header)
        for i, (fv, pr, wt) in enumerate(zip(self.fidelity, self.primal_residual, self.wall_time)):
            row = f"{i + 1:>4}  {fv:>14.6e}  {pr:>12.4e}"
            if self.objective is not None:
                row += f"  {self.objective[i]:>14.6e}"
            row += f"  {wt:>8.3f}"
            lines.append(row)
        return "\n".join(lines)


@dataclass(frozen=True)
class CgResult:
    x: np.ndarray
    relres: float
    iters: int
    converged: bool


def _check_finite(a: np.ndarray) -> None:
    if not np.isfinite(a).all():
        raise DivergenceError("non-finite values in CG iterate (non-PSD operator or bad nu?)")


def cg_solve(
    gram_apply: Callable[[np.ndarray], np.ndarray],
    b,
    tol: float = 1e-5,
    max_iters: int = 50,
    x0=None,
) -> CgResult:
    """Conjugate gradients for a Hermitian positive definite gram_apply.

    Stops when ||gram_apply(x) - b|| / ||b|| <= tol or after max_iters.
    Accepts arrays or ComplexImage for b/x0; CgResult.x is always an array.
    """
    b_arr = b.data if isinstance(b, ComplexImage) else np.asarray(b)
    bnorm = np.linalg.norm(b_arr.ravel())
    if bnorm == 0.0:
        return CgResult(np.zeros_like(b_arr), 0.0, 0, True)

    if x0 is None:
        x = np.zeros_like(b_arr)
        r = b_arr.copy()
    else:
        x = np.array(x0.data if isinstance(x0, ComplexImage) else x0, copy=True)
        r = b_arr - gram_apply(x)
    p = r.copy()
    rs = float(np.real(np.vdot(r, r)))

    iters = 0
    for _ in range(max_iters):
        if np.sqrt(rs) / bnorm <= tol:
            break
        q = gram_apply(p)
        pq = float(np.real(np.vdot(p, q)))
        if not np.isfinite(pq) or pq <= 0.0:
            raise DivergenceError("CG curvature <= 0 or non-finite: operator is not PD")
        alpha = rs / pq
        x += alpha * p
        r -= alpha * q
        _check_finite(r)
        rs_new = float(np.real(np.vdot(r, r)))
        p = r + (rs_new / rs) * p
        rs = rs_new
        iters += 1
    relres = float(np.sqrt(rs) / bnorm)
    return CgResult(x, relres, iters, relres <= tol)


def resolve_denoiser(handle) -> tuple[str, Callable[[np.ndarray], np.ndarray], float | None]:
    """Turn a denoiser handle into (name, array callable, uwt tau or None).

    Accepted handles: "identity", "uwt:<tau>", "cnn:<weight-file>", the
    tuples ("uwt", tau) / ("cnn", path_or_net), a DenoiserNet, or any
    callable on (nt, ny, nx) complex arrays.
    """
    from . import denoiser as dn  # local import: denoiser does not import solvers

    if isinstance(handle, str):
        if handle == "identity":
            return "identity", lambda z: z, None
        if handle.startswith("uwt:"):
            handle = ("uwt", float(handle[4:]))
        elif handle.startswith("cnn:"):
            handle = ("cnn", handle[4:])
        else:
            raise DenoiserError(f"unknown denoiser handle {handle!r}")
    if isinstance(handle, tuple) and len(handle) == 2 and handle[0] == "uwt":
        tau = float(handle[1])
        if tau < 0:
            raise ParameterError("uwt threshold must be nonnegative")
        return f"uwt:{tau:g}", lambda z, t=tau: prox_uwt_l1_array(z, t), tau
    if isinstance(handle, tuple) and len(handle) == 2 and handle[0] == "cnn":
        net = handle[1]
        if not isinstance(net, dn.DenoiserNet):
            net = dn.load_weights(net)
        return "cnn", lambda z, n=net: dn.denoise_array(n, z), None
    if isinstance(handle, dn.DenoiserNet):
        return "cnn", lambda z, n=handle: dn.denoise_array(n, z), None
    if callable(handle):
        name = getattr(handle, "__name__", "custom")
        return name, handle, None
    raise DenoiserError(f"cannot resolve denoiser handle {handle!r}")


def _fidelity(model: SenseModel, d: np.ndarray, x: np.ndarray) -> float:
    r = model.forward_array(x) - d
    return 0.5 * float(np.real(np.vdot(r, r)))


def admm_pnp(
    d: MultiCoilKSpace,
    model: SenseModel,
    cfg: AdmmConfig,
    x0: ComplexImage | None = None,
    u0: ComplexImage | None = None,
    record_iterates: bool = False,
) -> SolveReport:
    """Plug-and-play ADMM.

    Per outer iteration t:

        v_t = argmin_x { 0.5 ||Ax - d||^2 + (1/2 nu) ||x - (x_{t-1} - u_{t-1})||^2 }
        x_t = g(v_t + u_{t-1})
        u_t = u_{t-1} + (v_t - x_t)

    The denoiser argument v_t + u_{t-1} is the scaled-dual convention
    consistent with the v-step's penalty target x_{t-1} - u_{t-1}: with
    g = prox, the fixed points then satisfy grad f + d(phi) = 0. (Feeding
    v_t - u_{t-1} instead flips the subgradient sign at fixed points and
    the iteration does not minimize f + phi.)

    The v-step is the normal-equation solve (A^H A + (1/nu) I) v = A^H d +
    (1/nu)(x_{t-1} - u_{t-1}), run through CG warm-started at the previous
    v. Defaults start from x_0 = A^H d, u_0 = 0.
    """
    if d.shape != (model.nc,) + model.shape:
        raise ParameterError(f"k-space shape {d.shape} does not match model")
    name, g, tau = resolve_denoiser(cfg.denoiser)

    dd = d.data
    ahd = model.adjoint_array(dd)
    c = 1.0 / cfg.nu
    gram = lambda v: model.adjoint_array(model.forward_array(v)) + c * v

    x = np.array(x0.data if x0 is not None else ahd, copy=True)
    u = np.array(u0.data if u0 is not None else np.zeros_like(x), copy=True)
    v = x.copy()

    track_objective = name == "identity" or tau is not None
    report = SolveReport(
        solver="admm-pnp",
        params={
            "nu": cfg.nu,
            "outer_iters": cfg.outer_iters,
            "cg_iters": cfg.cg_iters,
            "cg_tol": cfg.cg_tol,
            "denoiser": name,
        },
        image=ComplexImage(x),
        objective=[] if track_objective else None,
    )
    report.extra["cg_relres"] = []
    if record_iterates:
        report.iterates = {"v": [], "x": [], "u": []}

    for _ in range(cfg.outer_iters):
        t0 = time.perf_counter()
        rhs = ahd + c * (x - u)
        res = cg_solve(gram, rhs, tol=cfg.cg_tol, max_iters=cfg.cg_iters, x0=v)
        v = res.x
        z = v + u
        x = g(z)
        if x.shape != z.shape:
            raise DenoiserError(f"denoiser returned shape {x.shape}, expected {z.shape}")
        u = u + (v - x)

        report.wall_time.append(time.perf_counter() - t0)
        report.fidelity.append(_fidelity(model, dd, x))
        report.primal_residual.append(float(np.linalg.norm((v - x).ravel())))
        report.extra["cg_relres"].append(res.relres)
        if track_objective:
            phi = 0.0 if tau is None else (tau / cfg.nu) * detail_l1_array(x)
            report.objective.append(report.fidelity[-1] + phi)
        if record_iterates:
            report.iterates["v"].append(v.copy())
            report.iterates["x"].append(x.copy())
            report.iterates["u"].append(u.copy())

    report.image = ComplexImage(x)
    return report


def fista_uwt(
    d: MultiCoilKSpace,
    model: SenseModel,
    lam: float,
    iters: int = 50,
) -> SolveReport:
    """FISTA on 0.5 ||Ax - d||^2 + lam * ||W_detail x||_1.

    Unit step (||A^H A|| <= 1 under the orthonormal FFT and unit-norm
    maps). A monotone safeguard rejects any candidate that increases the
    objective and restarts the momentum, so the recorded objective trace
    is non-increasing.
    """
    if lam < 0:
        raise ParameterError("lam must be nonnegative")
    dd = d.data
    ahd = model.adjoint_array(dd)

    x = ahd.copy()
    y = x.copy()
    t_mom = 1.0

    def objective(arr):
        return _fidelity(model, dd, arr) + lam * detail_l1_array(arr)

    f_x = objective(x)
    report = SolveReport(
        solver="cs-uwt",
        params={"lambda": lam, "iters": iters},
        image=ComplexImage(x),
        objective=[],
    )
    report.extra["restarts"] = 0

    for _ in range(iters):
        t0 = time.perf_counter()
        grad = model.adjoint_array(model.forward_array(y)) - ahd
        cand = prox_uwt_l1_array(y - grad, lam)
        f_cand = objective(cand)
        if f_cand > f_x:
            # monotone safeguard: keep x, restart momentum at x
            x_new = x
            f_x_new = f_x
            t_new = 1.0
            y = x.copy()
            report.extra["restarts"] += 1
        else:
            t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_mom**2))
            y = cand + ((t_mom - 1.0) / t_new) * (cand - x)
            x_new, f_x_new = cand, f_cand

        report.wall_time.append(time.perf_counter() - t0)
        report.fidelity.append(_fidelity(model, dd, x_new))
        report.primal_residual.append(float(np.linalg.norm((x_new - x).ravel())))
        report.objective.append(f_x_new)
        x, f_x, t_mom = x_new, f_x_new, t_new

    report.image = ComplexImage(x)
    return report


def admm_tv(
    d: MultiCoilKSpace,
    model: SenseModel,
    lam: float,
    nu: float = 1.0,
    outer_iters: int = 30,
    cg_iters: int = 5,
    cg_tol: float = 1e-5,
) -> SolveReport:
    """ADMM on 0.5 ||Ax - d||^2 + lam * ||Dx||_1 with the split z = Dx.

    x-update by CG on (A^H A + (1/nu) D^H D), z-update by soft
    thresholding at lam * nu, scaled dual ascent on u.
    """
    if lam < 0 or nu <= 0:
        raise ParameterError("lam must be >= 0 and nu > 0")
    dd = d.data
    ahd = model.adjoint_array(dd)
    c = 1.0 / nu

    def gram(v):
        return model.adjoint_array(model.forward_array(v)) + c * finite_diff_adjoint_array(
            finite_diff_array(v)
        )

    x = ahd.copy()
    z = finite_diff_array(x)
    u = np.zeros_like(z)

    report = SolveReport(
        solver="cs-tv",
        params={
            "lambda": lam,
            "nu": nu,
            "outer_iters": outer_iters,
            "cg_iters": cg_iters,
            "cg_tol": cg_tol,
        },
        image=ComplexImage(x),
        objective=[],
    )
    report.extra["cg_relres"] = []

    v_warm = x.copy()
    for _ in range(outer_iters):
        t0 = time.perf_counter()
        rhs = ahd + c * finite_diff_adjoint_array(z - u)
        res = cg_solve(gram, rhs, tol=cg_tol, max_iters=cg_iters, x0=v_warm)
        x = res.x
        v_warm = x
        dx = finite_diff_array(x)
        z = soft_threshold(dx + u, lam * nu)
        u = u + dx - z

        report.wall_time.append(time.perf_counter() - t0)
        report.fidelity.append(_fidelity(model, dd, x))
        report.primal_residual.append(float(np.linalg.norm((dx - z).ravel())))
        report.objective.append(report.fidelity[-1] + lam * float(np.abs(dx).sum()))
        report.extra["cg_relres"].append(res.relres)

    report.image = ComplexImage(x)
    return report


def svt(M: np.ndarray, tau: float) -> np.ndarray:
    """Singular-value soft thresholding of a matrix."""
    if tau < 0:
        raise ParameterError("threshold must be nonnegative")
    U, s, Vh = np.linalg.svd(M, full_matrices=False)
    s = np.maximum(s - tau, 0.0)
    return (U * s) @ Vh


def _casorati(a: np.ndarray) -> np.ndarray:
    # (nt, ny, nx) -> (space, time)
    return a.reshape(a.shape[0], -1).T


def _from_casorati(M: np.ndarray, shape) -> np.ndarray:
    return M.T.reshape(shape)


def lps(
    d: MultiCoilKSpace,
    model: SenseModel,
    lambda_l: float,
    lambda_s: float,
    iters: int = 50,
) -> SolveReport:
    """Low-rank plus sparse reconstruction.

    Alternates a data-consistency gradient step with singular-value
    thresholding of the space x time casorati matrix (threshold lambda_l
    scaled by the largest singular value of the initial casorati matrix)
    and soft thresholding of the temporal-FFT coefficients of S (threshold
    lambda_s scaled by the peak initial coefficient magnitude):

        M = L + S - A^H (A(L + S) - d)
        L <- SVT(M - S)
        S <- T^H soft(T(M - L))
    """
    if lambda_l < 0 or lambda_s < 0:
        raise ParameterError("thresholds must be nonnegative")
    dd = d.data
    x0 = model.adjoint_array(dd)
    shape = x0.shape

    sig1 = float(np.linalg.svd(_casorati(x0), compute_uv=False)[0])
    tfft = lambda a: np.fft.fft(a, axis=0, norm="ortho")
    tfft_h = lambda a: np.fft.ifft(a, axis=0, norm="ortho")
    tau_l = lambda_l * sig1
    tau_s = lambda_s * float(np.abs(tfft(x0)).max())

    L = x0.copy()
    S = np.zeros_like(x0)

    report = SolveReport(
        solver="lps",
        params={"lambda_l": lambda_l, "lambda_s": lambda_s, "iters": iters},
        image=ComplexImage(L),
        objective=[],
    )
    report.extra["thresholds"] = {"svt": tau_l, "sparse": tau_s}

    x_prev = L + S
    for _ in range(iters):
        t0 = time.perf_counter()
        x = L + S
        M = x - model.adjoint_array(model.forward_array(x) - dd)
        Lmat = svt(_casorati(M - S), tau_l)
        L = _from_casorati(Lmat, shape)
        S = tfft_h(soft_threshold(tfft(M - L), tau_s))
        x = L + S

        report.wall_time.append(time.perf_counter() - t0)
        report.fidelity.append(_fidelity(model, dd, x))
        report.primal_residual.append(float(np.linalg.norm((x - x_prev).ravel())))
        nuc = float(np.linalg.svd(_casorati(L), compute_uv=False).sum())
        report.objective.append(
            report.fidelity[-1] + tau_l * nuc + tau_s * float(np.abs(tfft(S)).sum())
        )
        x_prev = x

    report.image = ComplexImage(x_prev)
    return report
