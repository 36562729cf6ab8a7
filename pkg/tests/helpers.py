"""Shared builders for the test suite."""

import numpy as np

from corestate.geometry import (BoundaryTags, Field, GeometryConfig,
                                RegionBox, build_mesh)
from corestate.materials import CrossSectionSet, RegionXS


def uniform_config(nx, ny, lx=10.0, ly=10.0, region="Fuel",
                   bc=None) -> GeometryConfig:
    """Single-region rectangle."""
    bc = bc or BoundaryTags()
    return GeometryConfig(
        extent_x=lx, extent_y=ly, nx=nx, ny=ny,
        regions=(RegionBox(region, (0.0, lx, 0.0, ly)),), bc=bc)


def reflective_bc() -> BoundaryTags:
    return BoundaryTags(xmin="reflective", xmax="reflective",
                        ymin="reflective", ymax="reflective")


def make_region_xs(sigma_a=(0.012, 0.10), sigma_s_within=(0.10, 0.20),
                   sigma_s_12=0.016, sigma_s_21=0.0,
                   nu_sigma_f=(0.008, 0.18), chi=(1.0, 0.0),
                   d=(1.3, 0.45), kappa_sigma_f=(0.0035, 0.075)) -> RegionXS:
    """Region coefficients with totals balanced against the scatter rows."""
    sigma_s = np.array([[sigma_s_within[0], sigma_s_12],
                        [sigma_s_21, sigma_s_within[1]]])
    return RegionXS(
        d=np.array(d), sigma_a=np.array(sigma_a), sigma_s=sigma_s,
        nu_sigma_f=np.array(nu_sigma_f), chi=np.array(chi),
        kappa_sigma_f=np.array(kappa_sigma_f),
        sigma_t=np.array(sigma_a) + sigma_s.sum(axis=1))


def fuel_xs(**kwargs) -> CrossSectionSet:
    return CrossSectionSet({"Fuel": make_region_xs(**kwargs)})


def homogeneous_problem(nx=6, ny=4, **xs_kwargs):
    """Homogeneous all-reflective problem (infinite-medium analog)."""
    mesh = build_mesh(uniform_config(nx, ny, bc=reflective_bc()))
    return mesh, fuel_xs(**xs_kwargs)


def random_field(mesh, rng, positive=False) -> Field:
    values = rng.standard_normal(mesh.n_cells)
    if positive:
        values = np.abs(values) + 0.1
    return Field(mesh, values)


def orthonormal_fields(mesh, count, rng):
    """Random L2-orthonormal fields via Gram-Schmidt."""
    area = mesh.cell_area
    vectors = []
    while len(vectors) < count:
        v = rng.standard_normal(mesh.n_cells)
        for q in vectors:
            v = v - (q @ v) * area * q
        norm = np.sqrt((v @ v) * area)
        if norm > 1e-8:
            vectors.append(v / norm)
    return [Field(mesh, v) for v in vectors]
