"""Ground states of the long-wave effective equation.

The stationary divided-form equation for the wave profile w reads, in
Fourier variables,

    A(xi) w_hat = -(gamma/2) * dealias(w^2)_hat,
    A(xi) = (1 + xi1^2)/cs^2 + |xiperp|^2 / xi1^2,

with the xi1 = 0 plane excluded (w must have zero line means along the
first axis in dimensions >= 2).  In 1D the transverse term is absent and
the profile is an explicit sech^2 pulse.

Cubic integrals are evaluated through the 2/3-projected product so the
discrete pairing identity of a converged fixed point closes exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.sparse.linalg import LinearOperator, minres

from .errors import (
    DegenerateGamma,
    DivergedIteration,
    DivisionByZero,
    NotConverged,
    NotZeroMean,
    UnsupportedDimension,
    ZeroInitialGuess,
)
from .spectral import Grid, fftn, ifftn

_GAMMA_FLOOR = 1e-8
_LINE_MEAN_TOL = 1e-10


@dataclass
class GroundState:
    """Converged (or best-effort) ground-state profile with diagnostics."""

    w: np.ndarray
    grid: Grid
    cs: float
    gamma: float
    action: float
    residual: float
    converged: bool
    method: str
    iterations: int
    diagnostics: dict = field(default_factory=dict)


@dataclass
class ActionReport:
    """Minimal-action estimate with its variational consistency gaps."""

    s_min: float
    mu: float
    mu_gap: float
    ratio_devs: tuple
    transverse: float


def _divided_symbol(grid: Grid, cs: float):
    """A(xi) as a full array; the xi1 = 0 plane is set to 1 and must be
    handled by zeroing that plane of every spectral iterate."""
    ks = grid.wavenumber_meshes
    k1sq = ks[0] ** 2
    a = (1.0 + k1sq) / cs**2
    if grid.ndim > 1:
        kpsq = sum(k**2 for k in ks[1:])
        safe = np.where(k1sq > 0, k1sq, 1.0)
        a = a + np.where(k1sq > 0, kpsq / safe, 0.0)
    a = np.ascontiguousarray(np.broadcast_to(a, grid.sizes)).astype(float)
    if grid.ndim > 1:
        a[0] = 1.0
    return a


def _zero_plane(wh: np.ndarray, ndim: int):
    if ndim > 1:
        wh[0] = 0.0
    return wh


def _check_line_means(w: np.ndarray, grid: Grid):
    if grid.ndim < 2:
        return
    scale = max(float(np.max(np.abs(w))), 1.0)
    worst = float(np.max(np.abs(np.mean(w, axis=0))))
    if worst > _LINE_MEAN_TOL * scale:
        raise NotZeroMean(
            f"line mean {worst:.3e} exceeds {_LINE_MEAN_TOL:.1e} * scale")


def _quad_sum(sym, wh: np.ndarray, grid: Grid) -> float:
    """Physical-space integral of a quadratic symbol via Parseval."""
    return float(np.sum(sym * np.abs(wh) ** 2).real
                 * grid.cell_volume / wh.size)


def _integrals(w: np.ndarray, grid: Grid, cs: float, gamma: float) -> dict:
    wh = fftn(w)
    ks = grid.wavenumber_meshes
    k1sq = ks[0] ** 2
    out = {
        "mass": _quad_sum(1.0, wh, grid),
        "deriv1": _quad_sum(k1sq, wh, grid),
    }
    if grid.ndim > 1:
        kpsq = sum(k**2 for k in ks[1:])
        safe = np.where(k1sq > 0, k1sq, 1.0)
        sym = np.where(k1sq > 0, kpsq / safe, 0.0)
        out["transverse"] = _quad_sum(sym, wh, grid)
    w2h = _zero_plane(fftn(w * w) * grid.dealias_mask, grid.ndim)
    out["cubic"] = float(np.sum(w2h * np.conj(wh)).real
                         * grid.cell_volume / w.size)
    return out


def kpi_energy(w: np.ndarray, grid: Grid, cs: float, gamma: float) -> float:
    """Energy of the profile: first-axis gradient term, transverse term
    through the antiderivative, and the cubic term."""
    _check_line_means(w, grid)
    ints = _integrals(w, grid, cs, gamma)
    e = ints["deriv1"] / cs**2 + (gamma / 3.0) * ints["cubic"]
    if grid.ndim > 1:
        e += ints["transverse"]
    return float(e)


def action(w: np.ndarray, grid: Grid, cs: float, gamma: float) -> float:
    """Action: energy plus the momentum-type quadratic term."""
    ints = _integrals(w, grid, cs, gamma)
    e = ints["deriv1"] / cs**2 + (gamma / 3.0) * ints["cubic"]
    if grid.ndim > 1:
        e += ints["transverse"]
    return float(e + ints["mass"] / cs**2)


def sw_residual(w: np.ndarray, grid: Grid, cs: float, gamma: float) -> float:
    """Sup norm of the divided-form defect, scaled by max(1, sup|w|)."""
    _check_line_means(w, grid)
    a = _divided_symbol(grid, cs)
    eqh = a * fftn(w) + (gamma / 2.0) * fftn(w * w) * grid.dealias_mask
    _zero_plane(eqh, grid.ndim)
    resid = float(np.max(np.abs(ifftn(eqh).real)))
    return resid / max(float(np.max(np.abs(w))), 1.0)


def pohozaev_ratios(w: np.ndarray, grid: Grid, cs: float, gamma: float) -> tuple:
    """Stretching-identity ratios, each equal to 1 at a true ground state.

    In 2D and 3D the three identities normalize the first-axis gradient,
    cubic, and mass integrals against the transverse term.  In 1D only the
    pairing balance exists and its ratio is returned in all three slots.
    """
    n = grid.ndim
    if n >= 4:
        raise UnsupportedDimension(f"stretching identities implemented for 1-3D, got {n}")
    ints = _integrals(w, grid, cs, gamma)
    if n == 1:
        quad = (ints["deriv1"] + ints["mass"]) / cs**2
        if abs(quad) < 1e-14:
            raise DivisionByZero("quadratic part is numerically zero")
        r = -(gamma / 2.0) * ints["cubic"] / quad
        return (r, r, r)
    pp = ints["transverse"]
    if pp < 1e-14:
        raise DivisionByZero("transverse energy is numerically zero")
    r_deriv = (ints["deriv1"] / cs**2) / ((n / (n - 1.0)) * pp)
    r_cubic = ((gamma / 6.0) * ints["cubic"]) / (-(2.0 / (n - 1.0)) * pp)
    r_mass = (ints["mass"] / cs**2) / (((7.0 - 2.0 * n) / (n - 1.0)) * pp)
    return (float(r_deriv), float(r_cubic), float(r_mass))


def kdv_soliton(grid: Grid, cs: float, gamma: float) -> GroundState:
    """Closed-form 1D pulse w(z) = -3/(cs^2 gamma) sech^2(z/2)."""
    if abs(gamma) <= _GAMMA_FLOOR:
        raise DegenerateGamma(f"cubic coefficient {gamma} too close to zero")
    if grid.ndim != 1:
        raise UnsupportedDimension("closed-form pulse is one dimensional")
    z = grid.axis_coords(0)
    w = -3.0 / (cs**2 * gamma) / np.cosh(z / 2.0) ** 2
    return GroundState(
        w=w, grid=grid, cs=cs, gamma=gamma,
        action=action(w, grid, cs, gamma),
        residual=sw_residual(w, grid, cs, gamma),
        converged=True, method="closed-form", iterations=0,
        diagnostics={"action_exact": 48.0 / (5.0 * cs**6 * gamma**2)})


def _default_seed(grid: Grid, gamma: float) -> np.ndarray:
    xs = grid.coord_meshes
    arg = xs[0] ** 2 / 4.0
    for x in xs[1:]:
        arg = arg + x**2 / 16.0
    return -np.sign(gamma) * np.exp(-arg)


def petviashvili_ground_state(grid: Grid, cs: float, gamma: float,
                              w0: np.ndarray | None = None,
                              tol: float = 1e-10, res_tol: float = 1e-8,
                              max_iter: int = 2000) -> GroundState:
    """Ground state of the divided-form equation on a periodic box.

    1D and 2D use the normalized fixed-point iteration
        w  <-  M^2 * L^{-1} N(w),   M = <Lw, w> / <N(w), w>,
    stopping when the relative update drops below tol and the residual
    below res_tol.  The stabilizing power 2 matches the quadratic
    nonlinearity.  If the loop exhausts max_iter with M more than 10%
    from 1 the iteration has left the basin and DivergedIteration is
    raised; otherwise the best iterate is returned unconverged.

    3D: the transverse width of the true profile sits near the grid scale
    of affordable boxes and the plain iteration develops spurious
    grid-scale fixed points there, so the 3D branch seeds a revolved,
    rescaled section of the 2D profile and polishes it with a
    preconditioned Newton-Krylov solve of the same discrete equation.
    """
    if abs(gamma) <= _GAMMA_FLOOR:
        raise DegenerateGamma(f"cubic coefficient {gamma} too close to zero")
    n = grid.ndim
    if n >= 4:
        raise UnsupportedDimension(f"ground states implemented for 1-3D, got {n}")
    if w0 is not None:
        w0 = np.asarray(w0, dtype=float)
        grid.check(w0)
        if float(np.linalg.norm(w0)) == 0.0:
            raise ZeroInitialGuess("initial guess has zero norm")
    if n <= 2:
        return _petviashvili_loop(grid, cs, gamma, w0, tol, res_tol, max_iter)
    return _newton_ground_state_3d(grid, cs, gamma, w0, res_tol)


def _petviashvili_loop(grid: Grid, cs: float, gamma: float,
                       w0, tol, res_tol, max_iter) -> GroundState:
    a = _divided_symbol(grid, cs)
    mask = grid.dealias_mask
    w = _default_seed(grid, gamma) if w0 is None else w0.copy()
    wh = _zero_plane(fftn(w), grid.ndim)
    w = ifftn(wh).real
    m = np.inf
    du = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        nh = _zero_plane(-(gamma / 2.0) * fftn(w * w) * mask, grid.ndim)
        num = float(np.sum(a * np.abs(wh) ** 2).real)
        den = float(np.sum(nh * np.conj(wh)).real)
        if den == 0.0:
            raise DivergedIteration("nonlinear pairing vanished")
        m = num / den
        wh_new = m**2 * nh / a
        _zero_plane(wh_new, grid.ndim)
        w_new = ifftn(wh_new).real
        du = float(np.linalg.norm(w_new - w) / max(np.linalg.norm(w), 1e-300))
        w, wh = w_new, wh_new
        if du < tol:
            res = sw_residual(w, grid, cs, gamma)
            if res < res_tol:
                return GroundState(
                    w=w, grid=grid, cs=cs, gamma=gamma,
                    action=action(w, grid, cs, gamma),
                    residual=res, converged=True,
                    method="petviashvili", iterations=it,
                    diagnostics={"m_final": m, "rel_update": du})
    if abs(m - 1.0) > 0.1:
        raise DivergedIteration(
            f"normalization drifted to {m:.4f} after {max_iter} iterations")
    res = sw_residual(w, grid, cs, gamma)
    return GroundState(
        w=w, grid=grid, cs=cs, gamma=gamma,
        action=action(w, grid, cs, gamma), residual=res, converged=False,
        method="petviashvili", iterations=it,
        diagnostics={"m_final": m, "rel_update": du})


def _revolved_seed(grid: Grid, cs: float, gamma: float):
    """Scaled rotation of the 2D profile about the propagation axis.

    The 2D ground state is solved on its own comfortable box, its section
    is revolved to 3D, and a coarse scan over amplitude and the two
    stretch factors picks the combination with the smallest defect.
    """
    aux_grid = Grid((256, 256), (60.0, 120.0))
    flat = petviashvili_ground_state(aux_grid, cs, gamma, tol=1e-12)
    x1 = aux_grid.axis_coords(0)
    x2 = aux_grid.axis_coords(1)
    half = x2 >= 0.0
    itp = RegularGridInterpolator(
        (x1, x2[half]), flat.w[:, half], bounds_error=False, fill_value=0.0)

    z1, z2, z3 = grid.coord_meshes
    rad = np.sqrt(np.broadcast_to(z2, grid.sizes) ** 2
                  + np.broadcast_to(z3, grid.sizes) ** 2)
    z1f = np.broadcast_to(z1, grid.sizes)

    a_sym = _divided_symbol(grid, cs)
    mask = grid.dealias_mask

    def defect(w):
        eqh = a_sym * fftn(w) + (gamma / 2.0) * fftn(w * w) * mask
        _zero_plane(eqh, 3)
        return float(np.linalg.norm(eqh)) / max(float(np.linalg.norm(fftn(w))), 1e-300)

    best = None
    for amp in (1.5, 2.0, 2.5):
        for p in (1.3, 1.6, 1.9):
            for q in (1.2, 1.5, 1.9):
                pts = np.stack([np.clip(p * z1f, x1[0], x1[-1]),
                                np.clip(q * rad, 0.0, x2[-1])], axis=-1)
                w = amp * itp(pts)
                w -= np.mean(w, axis=0, keepdims=True)
                d = defect(w)
                if best is None or d < best[0]:
                    best = (d, w, (amp, p, q))
    return best[1], best[2], flat.residual


def _newton_ground_state_3d(grid: Grid, cs: float, gamma: float,
                            w0, res_tol, max_newton: int = 30) -> GroundState:
    a = _divided_symbol(grid, cs)
    sqa_inv = 1.0 / np.sqrt(a)
    mask = grid.dealias_mask
    size = int(np.prod(grid.sizes))

    def half_op(v):
        vh = fftn(v) * sqa_inv
        vh[0] = 0.0
        return ifftn(vh).real

    def eq_resid(w):
        eqh = a * fftn(w) + (gamma / 2.0) * fftn(w * w) * mask
        eqh[0] = 0.0
        return ifftn(eqh).real

    if w0 is None:
        w, seed_params, aux_res = _revolved_seed(grid, cs, gamma)
        seed_info = {"seed_scale": seed_params, "aux_residual": aux_res}
    else:
        w = w0 - np.mean(w0, axis=0, keepdims=True)
        seed_info = {"seed_scale": None, "aux_residual": None}

    res_vec = eq_resid(w)
    sup = float(np.max(np.abs(res_vec)))
    newton_it = 0
    for newton_it in range(1, max_newton + 1):
        scale = max(float(np.max(np.abs(w))), 1.0)
        if sup / scale < res_tol:
            break

        w_cur = w

        def matvec(y):
            u = half_op(y.reshape(grid.sizes))
            th = fftn(w_cur * u) * mask
            th[0] = 0.0
            t = ifftn(th).real
            return (y.reshape(grid.sizes) + gamma * half_op(t)).ravel()

        op = LinearOperator((size, size), matvec=matvec, dtype=float)
        rhs = -half_op(res_vec).ravel()
        y, _ = minres(op, rhs, rtol=1e-4, maxiter=200)
        delta = half_op(y.reshape(grid.sizes))

        alpha = 1.0
        improved = False
        for _ in range(10):
            trial = w + alpha * delta
            trial_res = eq_resid(trial)
            trial_sup = float(np.max(np.abs(trial_res)))
            if trial_sup < (1.0 - 1e-4 * alpha) * sup:
                w, res_vec, sup = trial, trial_res, trial_sup
                improved = True
                break
            alpha *= 0.5
        if not improved:
            break

    scale = max(float(np.max(np.abs(w))), 1.0)
    res = sup / scale
    converged = res < res_tol
    if not converged and res > 0.1:
        raise DivergedIteration(
            f"Newton polish stalled at relative defect {res:.3e}")
    return GroundState(
        w=w, grid=grid, cs=cs, gamma=gamma,
        action=action(w, grid, cs, gamma), residual=res,
        converged=converged, method="newton-minres", iterations=newton_it,
        diagnostics=seed_info)


def s_min_estimate(state: GroundState, ratio_tol: float = 1e-3) -> ActionReport:
    """Minimal action from a converged ground state.

    Precondition: all stretching-identity ratios within ratio_tol of 1,
    otherwise the state does not certify a minimizer and NotConverged is
    raised.  Reports the action, the variational multiplier mu (action
    over its transverse-term characterization, 2*Pp in 2D and Pp in 3D),
    and mu's deviation from 1.
    """
    w, grid = state.w, state.grid
    ratios = pohozaev_ratios(w, grid, state.cs, state.gamma)
    devs = tuple(abs(r - 1.0) for r in ratios)
    if max(devs) > ratio_tol:
        raise NotConverged(
            f"stretching ratios deviate by {max(devs):.3e} > {ratio_tol:.1e}")
    s = action(w, grid, state.cs, state.gamma)
    n = grid.ndim
    if n == 1:
        ints = _integrals(w, grid, state.cs, state.gamma)
        quad = (ints["deriv1"] + ints["mass"]) / state.cs**2
        mu = -(3.0 / 2.0) * (state.gamma / 3.0) * ints["cubic"] / quad
        pp = 0.0
    else:
        ints = _integrals(w, grid, state.cs, state.gamma)
        pp = ints["transverse"]
        kappa = 2.0 if n == 2 else 1.0
        mu = s / (kappa * pp)
    return ActionReport(s_min=float(s), mu=float(mu), mu_gap=abs(mu - 1.0),
                        ratio_devs=devs, transverse=float(pp))
