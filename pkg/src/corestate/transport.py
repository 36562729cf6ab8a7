"""Two-group discrete-ordinates transport criticality solver.

Angular discretization is a product quadrature (Gauss in the polar
cosine, equally weighted azimuthal angles per polar level) on the upper
hemisphere, folded for planar z-symmetry so the weights carry the full
4*pi solid angle.  Spatially each direction is swept with the fully
upwinded step scheme, written as a sparse triangular solve per
direction and factorized once per problem; an optional diamond
difference variant trades the positivity guarantee for second-order
accuracy.

The eigenpair is found by power iteration on the fission source with a
source iteration per group inside each outer step.  Vacuum sides impose
zero inflow, reflective sides mirror the outgoing face flux of the
opposite direction; quadrants are swept in an order that reuses freshly
computed outgoing fluxes on the reflective sides.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .diffusion import ToleranceConfig, _save_solution
from .errors import (ConfigurationError, DegenerateProblemError,
                     IterationLimitError)
from .geometry import Field, Mesh
from .materials import CrossSectionSet, cell_arrays

#: Minimum transport total accepted anywhere on the mesh (1/cm); void
#: regions must carry at least this much to keep the sweeps well posed.
MIN_SIGMA_T = 1e-4

FOUR_PI = 4.0 * np.pi

SCHEMES = ("step", "diamond")

#: Quadrant sign patterns (sign_x, sign_y) in storage order.
_QUADRANTS = ((1, 1), (-1, 1), (-1, -1), (1, -1))
#: Sweep order chosen so reflective xmin/ymin inflows are fresh.
_SWEEP_ORDER = (2, 1, 3, 0)
_MIRROR_X_QUAD = (1, 0, 3, 2)
_MIRROR_Y_QUAD = (3, 2, 1, 0)

_INNER_TOL = 1e-9
_MAX_INNER = 500


@dataclass(frozen=True)
class AngularQuadrature:
    order: int
    omega_x: np.ndarray
    omega_y: np.ndarray
    weight: np.ndarray
    quadrant: np.ndarray   # quadrant id per direction
    mirror_x: np.ndarray   # direction index with omega_x negated
    mirror_y: np.ndarray

    @property
    def n_directions(self) -> int:
        return self.omega_x.size


def build_quadrature(order: int) -> AngularQuadrature:
    """Product quadrature with order*(order+2)/2 directions.

    Polar level l (l = 1 nearest the pole) carries 4*l azimuthal angles
    offset by half a step, so no direction is axis-aligned and the set
    is exactly symmetric under sign flips of either component.
    """
    if order < 2 or order % 2 != 0:
        raise ValueError(f"quadrature order must be even and >= 2, got {order}")
    npolar = order // 2
    nodes, wts = np.polynomial.legendre.leggauss(npolar)
    mu = (nodes + 1.0) / 2.0          # polar cosine on (0, 1)
    wpol = wts / 2.0                  # weights summing to 1
    # Most polar point first: level l gets 4*l azimuthal angles.
    sort = np.argsort(-mu)
    mu, wpol = mu[sort], wpol[sort]

    base_x, base_y, base_w = [], [], []
    for level, (m, wp) in enumerate(zip(mu, wpol), start=1):
        sin_theta = np.sqrt(1.0 - m * m)
        phi = (np.arange(level) + 0.5) * (np.pi / 2.0) / level
        base_x.append(sin_theta * np.cos(phi))
        base_y.append(sin_theta * np.sin(phi))
        base_w.append(np.full(level, FOUR_PI * wp / (4.0 * level)))
    bx = np.concatenate(base_x)
    by = np.concatenate(base_y)
    bw = np.concatenate(base_w)
    nb = bx.size

    ox = np.concatenate([sx * bx for sx, _ in _QUADRANTS])
    oy = np.concatenate([sy * by for _, sy in _QUADRANTS])
    w = np.tile(bw, 4)
    quadrant = np.repeat(np.arange(4), nb)
    mirror_x = np.concatenate(
        [_MIRROR_X_QUAD[q] * nb + np.arange(nb) for q in range(4)])
    mirror_y = np.concatenate(
        [_MIRROR_Y_QUAD[q] * nb + np.arange(nb) for q in range(4)])

    quad = AngularQuadrature(order=order, omega_x=ox, omega_y=oy, weight=w,
                             quadrant=quadrant, mirror_x=mirror_x,
                             mirror_y=mirror_y)
    assert abs(w.sum() - FOUR_PI) < 1e-12 * FOUR_PI
    assert abs(np.dot(w, ox)) < 1e-12 and abs(np.dot(w, oy)) < 1e-12
    assert abs(np.dot(w, ox**2) - np.dot(w, oy**2)) < 1e-12
    return quad


@dataclass(frozen=True)
class TransportSolution:
    k_eff: float
    scalar_flux: tuple[Field, Field]
    iterations: int
    residual: float
    balance_residual: float
    angular_flux: tuple[np.ndarray, np.ndarray] | None = None

    def save(self, directory):
        """Persist group scalar fluxes as CSV plus a JSON manifest."""
        _save_solution(directory, self.scalar_flux, self.k_eff,
                       self.iterations)


def _direction_system(mesh: Mesh, sigt2d: np.ndarray, ox: float, oy: float):
    """Sparse step-scheme system for one direction.

    Returns (matrix, x_in_cells, x_in_coef, y_in_cells, y_in_coef) where
    the *_in_* arrays describe how boundary inflow enters the RHS.
    """
    nx, ny, dx, dy = mesh.nx, mesh.ny, mesh.dx, mesh.dy
    area = mesh.cell_area
    a = abs(ox) * dy
    b = abs(oy) * dx
    idx = np.arange(nx * ny).reshape(ny, nx)

    n = nx * ny
    diag = sigt2d.ravel() * area + a + b
    rows = [np.arange(n)]
    cols = [np.arange(n)]
    vals = [diag]
    if ox > 0:
        rows.append(idx[:, 1:].ravel()); cols.append(idx[:, :-1].ravel())
        x_in_cells = idx[:, 0]
    else:
        rows.append(idx[:, :-1].ravel()); cols.append(idx[:, 1:].ravel())
        x_in_cells = idx[:, -1]
    vals.append(np.full(ny * (nx - 1), -a))
    if oy > 0:
        rows.append(idx[1:, :].ravel()); cols.append(idx[:-1, :].ravel())
        y_in_cells = idx[0, :]
    else:
        rows.append(idx[:-1, :].ravel()); cols.append(idx[1:, :].ravel())
        y_in_cells = idx[-1, :]
    vals.append(np.full((ny - 1) * nx, -b))

    mat = sp.coo_matrix((np.concatenate(vals),
                         (np.concatenate(rows), np.concatenate(cols))),
                        shape=(n, n)).tocsc()
    return mat, x_in_cells, a, y_in_cells, b


def sweep_direction(mesh: Mesh, sigma_t2d: np.ndarray, omega, emission2d,
                    inflow_x=None, inflow_y=None) -> np.ndarray:
    """Solve one direction's step-scheme transport with a fixed angular
    source density `emission2d` and prescribed boundary inflows.

    `inflow_x` is the incoming face flux along the upstream x side (one
    value per row j), `inflow_y` along the upstream y side (per column
    i); both default to zero (vacuum).  Returns the cell flux (ny, nx).
    """
    ox, oy = float(omega[0]), float(omega[1])
    if ox == 0.0 or oy == 0.0:
        raise ValueError("sweep directions must have nonzero components")
    mat, x_cells, a, y_cells, b = _direction_system(mesh, sigma_t2d, ox, oy)
    rhs = (np.asarray(emission2d, dtype=float) * mesh.cell_area).ravel().copy()
    if inflow_x is not None:
        rhs[x_cells] += a * np.asarray(inflow_x, dtype=float)
    if inflow_y is not None:
        rhs[y_cells] += b * np.asarray(inflow_y, dtype=float)
    psi = spla.splu(mat).solve(rhs)
    return psi.reshape(mesh.ny, mesh.nx)


class _GroupSweeper:
    """Per-group sweep machinery: factorized direction systems plus the
    current angular flux and outgoing boundary face fluxes."""

    def __init__(self, mesh: Mesh, quad: AngularQuadrature,
                 sigt2d: np.ndarray, scheme: str):
        self.mesh = mesh
        self.quad = quad
        self.scheme = scheme
        self.sigt2d = sigt2d
        nd = quad.n_directions
        self.psi = np.full((nd, mesh.ny, mesh.nx), 1.0 / FOUR_PI)
        # Outgoing face flux per direction on its exit sides.
        self.out_x = np.full((nd, mesh.ny), 1.0 / FOUR_PI)
        self.out_y = np.full((nd, mesh.nx), 1.0 / FOUR_PI)
        if scheme == "step":
            self._systems = [
                _direction_system(mesh, sigt2d, quad.omega_x[d],
                                  quad.omega_y[d])
                for d in range(nd)]
            self._lu = [spla.splu(sys[0]) for sys in self._systems]

    def _inflows(self, d: int):
        """(inflow_x, inflow_y) for direction d, honoring boundary tags."""
        quad, mesh = self.quad, self.mesh
        side_x = "xmin" if quad.omega_x[d] > 0 else "xmax"
        side_y = "ymin" if quad.omega_y[d] > 0 else "ymax"
        if getattr(mesh.bc, side_x) == "reflective":
            inflow_x = self.out_x[quad.mirror_x[d]]
        else:
            inflow_x = None
        if getattr(mesh.bc, side_y) == "reflective":
            inflow_y = self.out_y[quad.mirror_y[d]]
        else:
            inflow_y = None
        return inflow_x, inflow_y

    def _solve_direction_step(self, d: int, emission_area: np.ndarray):
        _, x_cells, a, y_cells, b = self._systems[d]
        rhs = emission_area.copy()
        inflow_x, inflow_y = self._inflows(d)
        if inflow_x is not None:
            rhs[x_cells] += a * inflow_x
        if inflow_y is not None:
            rhs[y_cells] += b * inflow_y
        psi = self._lu[d].solve(rhs).reshape(self.mesh.ny, self.mesh.nx)
        out_x = psi[:, -1] if self.quad.omega_x[d] > 0 else psi[:, 0]
        out_y = psi[-1, :] if self.quad.omega_y[d] > 0 else psi[0, :]
        return psi, out_x, out_y

    def _solve_direction_diamond(self, d: int, emission_area: np.ndarray):
        mesh, quad = self.mesh, self.quad
        nx, ny = mesh.nx, mesh.ny
        ox, oy = quad.omega_x[d], quad.omega_y[d]
        a = abs(ox) * mesh.dy
        b = abs(oy) * mesh.dx
        inflow_x, inflow_y = self._inflows(d)
        # Work in the flipped frame where the direction moves +x, +y.
        flip_x, flip_y = ox < 0, oy < 0
        q = emission_area.reshape(ny, nx)
        sig = self.sigt2d * mesh.cell_area
        if flip_x:
            q, sig = q[:, ::-1], sig[:, ::-1]
        if flip_y:
            q, sig = q[::-1, :], sig[::-1, :]
        fin_x = np.zeros(ny) if inflow_x is None else np.array(inflow_x)
        fin_y = np.zeros(nx) if inflow_y is None else np.array(inflow_y)
        if flip_y:
            fin_x = fin_x[::-1]
        if flip_x:
            fin_y = fin_y[::-1]
        fx = np.zeros((ny, nx + 1)); fx[:, 0] = fin_x
        fy = np.zeros((ny + 1, nx)); fy[0, :] = fin_y
        psi = np.zeros((ny, nx))
        den = sig + 2.0 * a + 2.0 * b
        for diag in range(nx + ny - 1):
            jj = np.arange(max(0, diag - nx + 1), min(diag, ny - 1) + 1)
            ii = diag - jj
            val = (q[jj, ii] + 2.0 * a * fx[jj, ii] + 2.0 * b * fy[jj, ii]) \
                / den[jj, ii]
            psi[jj, ii] = val
            fx[jj, ii + 1] = 2.0 * val - fx[jj, ii]
            fy[jj + 1, ii] = 2.0 * val - fy[jj, ii]
        out_x = fx[:, -1]
        out_y = fy[-1, :]
        if flip_y:
            psi, out_x = psi[::-1, :], out_x[::-1]
        if flip_x:
            psi, out_y = psi[:, ::-1], out_y[::-1]
        return psi, out_x, out_y

    def sweep(self, emission2d: np.ndarray, commit: bool = True):
        """One full sweep over all directions with the isotropic angular
        emission density `emission2d`.

        Returns (scalar_flux, psi, out_x, out_y) where the out arrays
        hold each direction's outgoing boundary face flux on its exit
        sides.  With commit=False the sweeper state is left untouched.
        """
        emission_area = (emission2d * self.mesh.cell_area).ravel()
        psi_new = self.psi if commit else self.psi.copy()
        out_x = self.out_x if commit else self.out_x.copy()
        out_y = self.out_y if commit else self.out_y.copy()
        nb = self.quad.n_directions // 4
        saved = (self.psi, self.out_x, self.out_y)
        if not commit:
            self.psi, self.out_x, self.out_y = psi_new, out_x, out_y
        try:
            for q in _SWEEP_ORDER:
                for d in range(q * nb, (q + 1) * nb):
                    if self.scheme == "step":
                        psi, ox_out, oy_out = self._solve_direction_step(
                            d, emission_area)
                    else:
                        psi, ox_out, oy_out = self._solve_direction_diamond(
                            d, emission_area)
                    psi_new[d] = psi
                    out_x[d] = ox_out
                    out_y[d] = oy_out
        finally:
            if not commit:
                self.psi, self.out_x, self.out_y = saved
        phi = np.tensordot(self.quad.weight, psi_new, axes=(0, 0))
        return phi, psi_new, out_x, out_y

    def scale(self, factor: float):
        self.psi *= factor
        self.out_x *= factor
        self.out_y *= factor


def _vacuum_leakage(mesh: Mesh, quad: AngularQuadrature, out_x: np.ndarray,
                    out_y: np.ndarray) -> float:
    """Net outflow through the sides tagged vacuum (inflow there is zero),
    from the per-direction outgoing boundary face fluxes."""
    leak = 0.0
    ox, oy, w = quad.omega_x, quad.omega_y, quad.weight
    if mesh.bc.xmax == "vacuum":
        m = ox > 0
        leak += mesh.dy * np.sum((w[m] * ox[m])[:, None] * out_x[m])
    if mesh.bc.xmin == "vacuum":
        m = ox < 0
        leak += mesh.dy * np.sum((w[m] * -ox[m])[:, None] * out_x[m])
    if mesh.bc.ymax == "vacuum":
        m = oy > 0
        leak += mesh.dx * np.sum((w[m] * oy[m])[:, None] * out_y[m])
    if mesh.bc.ymin == "vacuum":
        m = oy < 0
        leak += mesh.dx * np.sum((w[m] * -oy[m])[:, None] * out_y[m])
    return float(leak)


def solve_transport(xs: CrossSectionSet, mesh: Mesh,
                    quad: AngularQuadrature | None = None,
                    tol: ToleranceConfig | None = None,
                    scheme: str = "step",
                    retain_angular: bool = False) -> TransportSolution:
    """Power iteration on the fission source; see the module docstring.

    Each outer step runs, per group, a source iteration on the
    within-group scattering source (relative change below 1e-9, at most
    500 inner sweeps), with the freshly updated group-1 flux feeding the
    group-2 downscatter source.
    """
    quad = quad or build_quadrature(4)
    tol = tol or ToleranceConfig()
    if scheme not in SCHEMES:
        raise ConfigurationError(f"scheme must be one of {SCHEMES}")
    cx = cell_arrays(xs, mesh)
    if (cx.sigma_t < MIN_SIGMA_T).any():
        raise ConfigurationError(
            f"transport requires sigma_t >= {MIN_SIGMA_T} /cm everywhere; "
            "give void regions a small positive total")
    if not (cx.nu_sigma_f > 0).any():
        raise DegenerateProblemError("no fissile cell: not an eigenproblem")

    area = mesh.cell_area
    nusf = [cx.nu_sigma_f[g] for g in range(2)]
    chi = [cx.chi[g] for g in range(2)]
    sig_within = [cx.sigma_s[g, g] for g in range(2)]
    sweepers = [_GroupSweeper(mesh, quad, cx.sigma_t[g], scheme)
                for g in range(2)]
    upscatter = bool((cx.sigma_s[1, 0] > 0).any())
    group_tol = max(0.01 * tol.flux_tol, 1e-13)

    phi = [np.ones((mesh.ny, mesh.nx)), np.ones((mesh.ny, mesh.nx))]
    fint = float((nusf[0] * phi[0] + nusf[1] * phi[1]).sum() * area)
    if fint <= 0:
        raise DegenerateProblemError("initial fission source vanished")
    for g in range(2):
        phi[g] /= fint
        sweepers[g].scale(1.0 / fint)

    def source_iteration(g: int, q_fixed: np.ndarray):
        s_old = sig_within[g] * phi[g]
        for _ in range(_MAX_INNER):
            emission = q_fixed + s_old / FOUR_PI
            phi[g], _, _, _ = sweepers[g].sweep(emission)
            s_new = sig_within[g] * phi[g]
            denom = max(float(np.max(np.abs(s_new))), 1e-300)
            change = float(np.max(np.abs(s_new - s_old))) / denom
            s_old = s_new
            if change < _INNER_TOL:
                break

    k = 1.0
    dk = np.inf
    for it in range(1, tol.max_outer + 1):
        fission = nusf[0] * phi[0] + nusf[1] * phi[1]
        phi_old = (phi[0].copy(), phi[1].copy())
        for _ in range(50):
            phi2_before = phi[1].copy()
            for g in range(2):
                other = 1 - g
                q_fixed = (chi[g] * fission / k
                           + cx.sigma_s[other, g] * phi[other]) / FOUR_PI
                source_iteration(g, q_fixed)
            if not upscatter:
                break
            change = np.max(np.abs(phi[1] - phi2_before)) \
                / max(float(np.max(np.abs(phi[1]))), 1e-300)
            if change < group_tol:
                break

        fint = float((nusf[0] * phi[0] + nusf[1] * phi[1]).sum() * area)
        if fint <= 0:
            raise DegenerateProblemError("fission source vanished")
        k_new = k * fint
        for g in range(2):
            phi[g] /= fint
            sweepers[g].scale(1.0 / fint)
        flux_change = max(
            float(np.max(np.abs(phi[g] - phi_old[g]))
                  / max(np.max(np.abs(phi[g])), 1e-300))
            for g in range(2))
        dk = abs(k_new - k)
        k = k_new
        if dk < tol.k_tol and flux_change < tol.flux_tol:
            break
    else:
        raise IterationLimitError(
            f"transport eigensolve: no convergence in {tol.max_outer} "
            f"outer iterations (|dk| = {dk:.3e})",
            last_solution=TransportSolution(
                k_eff=k,
                scalar_flux=(Field(mesh, phi[0].ravel()),
                             Field(mesh, phi[1].ravel())),
                iterations=tol.max_outer, residual=dk,
                balance_residual=np.nan))

    # Per-group neutron balance of the converged state: production
    # (fission/k + inter-group in-scatter) against removal plus vacuum
    # leakage, using one non-committing sweep with frozen sources.
    balance = 0.0
    fission = nusf[0] * phi[0] + nusf[1] * phi[1]
    for g in range(2):
        other = 1 - g
        q_fixed = (chi[g] * fission / k
                   + cx.sigma_s[other, g] * phi[other]) / FOUR_PI
        emission = q_fixed + sig_within[g] * phi[g] / FOUR_PI
        phi_bal, _, bal_out_x, bal_out_y = sweepers[g].sweep(
            emission, commit=False)
        prod = float((chi[g] * fission / k
                      + cx.sigma_s[other, g] * phi[other]
                      + sig_within[g] * phi[g]).sum() * area)
        loss = float((cx.sigma_t[g] * phi_bal).sum() * area) \
            + _vacuum_leakage(mesh, quad, bal_out_x, bal_out_y)
        balance = max(balance, abs(prod - loss) / prod)

    return TransportSolution(
        k_eff=k,
        scalar_flux=(Field(mesh, phi[0].ravel()), Field(mesh, phi[1].ravel())),
        iterations=it, residual=dk, balance_residual=balance,
        angular_flux=(sweepers[0].psi.copy(), sweepers[1].psi.copy())
        if retain_angular else None)


def power_map_transport(sol: TransportSolution,
                        xs: CrossSectionSet) -> Field:
    """Energy-production map from the group scalar fluxes, unit L2 norm."""
    mesh = sol.scalar_flux[0].mesh
    cx = cell_arrays(xs, mesh)
    values = (cx.kappa_sigma_f[0].ravel() * sol.scalar_flux[0].values
              + cx.kappa_sigma_f[1].ravel() * sol.scalar_flux[1].values)
    if not (values != 0).any():
        raise DegenerateProblemError("power map is identically zero")
    return Field(mesh, values).normalized()
