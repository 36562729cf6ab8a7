"""Two-group diffusion criticality solver (cell-centered finite volumes).

Solves the generalized eigenproblem

    -div(D1 grad phi1) + Sa1 phi1 - Ss21 phi2 = (chi1/k) (nuSf1 phi1 + nuSf2 phi2)
    -div(D2 grad phi2) + Sa2 phi2 - Ss12 phi1 = (chi2/k) (nuSf1 phi1 + nuSf2 phi2)

for the fundamental pair (k_eff, phi) by power iteration on the fission
source.  Interface diffusion coefficients are harmonic means, vacuum
sides carry the Robin condition D grad(phi).n + phi/2 = 0 (a zero-flux
Dirichlet variant is available behind `vacuum_model`), reflective sides
are natural zero-current boundaries.

The group-1 equation is discretized exactly as written above: there is
no implicit outscatter removal, so configurations wanting removal-style
group-1 absorption should fold the 1->2 outscatter into sigma_a of
group 1.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (ConfigurationError, DegenerateProblemError,
                     IterationLimitError)
from .geometry import Field, Mesh
from .materials import CellXS, CrossSectionSet, cell_arrays

VACUUM_MODELS = ("robin", "zero_flux")


def _save_solution(directory, fluxes, k_eff, iterations):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for g, flux in enumerate(fluxes, start=1):
        flux.save(directory / f"flux_g{g}.csv")
    mesh = fluxes[0].mesh
    manifest = {"k_eff": k_eff, "iterations": iterations,
                "nx": mesh.nx, "ny": mesh.ny,
                "extent_x": mesh.extent_x, "extent_y": mesh.extent_y}
    (directory / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n")


@dataclass(frozen=True)
class ToleranceConfig:
    """Outer-iteration tolerances of both eigensolvers."""

    k_tol: float = 1e-8
    flux_tol: float = 1e-7
    max_outer: int = 2000

    def __post_init__(self):
        if self.k_tol <= 0 or self.flux_tol <= 0 or self.max_outer < 1:
            raise ConfigurationError("tolerances must be positive")

    @staticmethod
    def from_dict(d: dict) -> "ToleranceConfig":
        return ToleranceConfig(
            k_tol=float(d.get("k_tol", 1e-8)),
            flux_tol=float(d.get("flux_tol", 1e-7)),
            max_outer=int(d.get("max_outer", 2000)))

    def to_dict(self) -> dict:
        return {"k_tol": self.k_tol, "flux_tol": self.flux_tol,
                "max_outer": self.max_outer}


@dataclass(frozen=True)
class DiffusionSolution:
    k_eff: float
    phi: tuple[Field, Field]
    iterations: int
    residual: float

    def save(self, directory):
        """Persist group fluxes as CSV plus a JSON manifest."""
        _save_solution(directory, self.phi, self.k_eff, self.iterations)


def _group_matrix(mesh: Mesh, d2d: np.ndarray, sigma_a2d: np.ndarray,
                  vacuum_model: str) -> sp.csc_matrix:
    """5-point finite-volume matrix for one group: face transmissibilities
    with harmonic-mean interface D, boundary losses, and Sa * area."""
    nx, ny, dx, dy = mesh.nx, mesh.ny, mesh.dx, mesh.dy
    area = mesh.cell_area
    idx = np.arange(nx * ny).reshape(ny, nx)

    diag = sigma_a2d.ravel() * area

    rows, cols, vals = [], [], []

    def couple(r, c, t):
        rows.append(r.ravel()); cols.append(c.ravel()); vals.append(-t.ravel())
        rows.append(c.ravel()); cols.append(r.ravel()); vals.append(-t.ravel())
        np.add.at(diag, r.ravel(), t.ravel())
        np.add.at(diag, c.ravel(), t.ravel())

    dl, dr = d2d[:, :-1], d2d[:, 1:]
    tx = dy * 2.0 * dl * dr / ((dl + dr) * dx)
    couple(idx[:, :-1], idx[:, 1:], tx)

    db, dt = d2d[:-1, :], d2d[1:, :]
    ty = dx * 2.0 * db * dt / ((db + dt) * dy)
    couple(idx[:-1, :], idx[1:, :], ty)

    def boundary(side, cells, dvals, delta, face_len):
        if getattr(mesh.bc, side) != "vacuum":
            return
        if vacuum_model == "robin":
            coef = face_len * 2.0 * dvals / (4.0 * dvals + delta)
        else:  # zero-flux Dirichlet at the boundary face
            coef = face_len * 2.0 * dvals / delta
        np.add.at(diag, cells, coef)

    boundary("xmin", idx[:, 0], d2d[:, 0], dx, dy)
    boundary("xmax", idx[:, -1], d2d[:, -1], dx, dy)
    boundary("ymin", idx[0, :], d2d[0, :], dy, dx)
    boundary("ymax", idx[-1, :], d2d[-1, :], dy, dx)

    n = nx * ny
    mat = sp.coo_matrix(
        (np.concatenate(vals + [diag]),
         (np.concatenate(rows + [np.arange(n)]),
          np.concatenate(cols + [np.arange(n)]))),
        shape=(n, n))
    return mat.tocsc()


def assemble_diffusion_system(xs: CrossSectionSet, mesh: Mesh,
                              vacuum_model: str = "robin"):
    """Group matrices plus coupling/fission vectors (all area-scaled).

    Returns (M1, M2, s21, s12, nusf1, nusf2, chi1, chi2) where the
    vectors are flat per-cell arrays; the two-group operator acts as

        M1 phi1 - diag(s21) phi2 = (chi1/k) (nusf1 phi1 + nusf2 phi2)
        M2 phi2 - diag(s12) phi1 = (chi2/k) (nusf1 phi1 + nusf2 phi2)
    """
    if vacuum_model not in VACUUM_MODELS:
        raise ConfigurationError(f"vacuum_model must be one of {VACUUM_MODELS}")
    cx = cell_arrays(xs, mesh)
    if (cx.d <= 0).any():
        raise ConfigurationError("diffusion needs D > 0 in every region")
    area = mesh.cell_area
    m1 = _group_matrix(mesh, cx.d[0], cx.sigma_a[0], vacuum_model)
    m2 = _group_matrix(mesh, cx.d[1], cx.sigma_a[1], vacuum_model)
    s12 = cx.sigma_s[0, 1].ravel() * area
    s21 = cx.sigma_s[1, 0].ravel() * area
    nusf1 = cx.nu_sigma_f[0].ravel() * area
    nusf2 = cx.nu_sigma_f[1].ravel() * area
    return m1, m2, s21, s12, nusf1, nusf2, cx.chi[0].ravel(), cx.chi[1].ravel()


def solve_diffusion(xs: CrossSectionSet, mesh: Mesh,
                    tol: ToleranceConfig | None = None,
                    vacuum_model: str = "robin") -> DiffusionSolution:
    """Power iteration on the fission source.

    Each outer step solves group 1 then group 2 with the fission source
    frozen (repeating the group pass when upscatter couples them), then
    rescales k by the fission-integral ratio.  Converged when both the
    k increment and the max-relative flux change drop below tolerance.
    """
    tol = tol or ToleranceConfig()
    m1, m2, s21, s12, nusf1, nusf2, chi1, chi2 = assemble_diffusion_system(
        xs, mesh, vacuum_model)
    if not (nusf1 > 0).any() and not (nusf2 > 0).any():
        raise DegenerateProblemError("no fissile cell: not an eigenproblem")

    lu = [spla.splu(m1), spla.splu(m2)]
    upscatter = bool((s21 > 0).any())
    group_tol = max(0.01 * tol.flux_tol, 1e-13)

    n = mesh.n_cells
    phi = [np.ones(n), np.ones(n)]
    fint = float(nusf1 @ phi[0] + nusf2 @ phi[1])
    if fint <= 0:
        raise DegenerateProblemError("initial fission source vanished")
    phi[0] /= fint
    phi[1] /= fint

    k = 1.0
    dk = np.inf
    for it in range(1, tol.max_outer + 1):
        fission = (nusf1 * phi[0] + nusf2 * phi[1]) / k
        phi_old = (phi[0], phi[1])
        for _ in range(200):
            phi1 = lu[0].solve(chi1 * fission + s21 * phi[1])
            phi2 = lu[1].solve(chi2 * fission + s12 * phi1)
            change = np.max(np.abs(phi2 - phi[1])) / max(np.max(np.abs(phi2)),
                                                         1e-300)
            phi = [phi1, phi2]
            if not upscatter or change < group_tol:
                break

        fint = float(nusf1 @ phi[0] + nusf2 @ phi[1])
        if fint <= 0:
            raise DegenerateProblemError("fission source vanished")
        k_new = k * fint
        phi[0] /= fint
        phi[1] /= fint
        flux_change = max(
            np.max(np.abs(phi[g] - phi_old[g]))
            / max(np.max(np.abs(phi[g])), 1e-300)
            for g in range(2))
        dk = abs(k_new - k)
        k = k_new
        if dk < tol.k_tol and flux_change < tol.flux_tol:
            break
    else:
        raise IterationLimitError(
            f"diffusion eigensolve: no convergence in {tol.max_outer} "
            f"outer iterations (|dk| = {dk:.3e})",
            last_solution=DiffusionSolution(
                k_eff=k, phi=(Field(mesh, phi[0]), Field(mesh, phi[1])),
                iterations=tol.max_outer, residual=dk))

    return DiffusionSolution(
        k_eff=k, phi=(Field(mesh, phi[0]), Field(mesh, phi[1])),
        iterations=it, residual=dk)


def eigen_residual(sol: DiffusionSolution, xs: CrossSectionSet,
                   vacuum_model: str = "robin") -> float:
    """||A phi - (1/k) F phi|| / ||F phi|| of the converged discrete pair."""
    mesh = sol.phi[0].mesh
    m1, m2, s21, s12, nusf1, nusf2, chi1, chi2 = assemble_diffusion_system(
        xs, mesh, vacuum_model)
    p1, p2 = sol.phi[0].values, sol.phi[1].values
    fission = nusf1 * p1 + nusf2 * p2
    r1 = m1 @ p1 - s21 * p2 - chi1 * fission / sol.k_eff
    r2 = m2 @ p2 - s12 * p1 - chi2 * fission / sol.k_eff
    fnorm = np.sqrt(np.sum((chi1 * fission) ** 2 + (chi2 * fission) ** 2))
    return float(np.sqrt(np.sum(r1**2 + r2**2)) / fnorm)


def power_map_diffusion(sol: DiffusionSolution,
                        xs: CrossSectionSet) -> Field:
    """Energy-production map kappaSf1 phi1 + kappaSf2 phi2, unit L2 norm."""
    mesh = sol.phi[0].mesh
    cx = cell_arrays(xs, mesh)
    values = (cx.kappa_sigma_f[0].ravel() * sol.phi[0].values
              + cx.kappa_sigma_f[1].ravel() * sol.phi[1].values)
    if not (values != 0).any():
        raise DegenerateProblemError("power map is identically zero")
    return Field(mesh, values).normalized()
