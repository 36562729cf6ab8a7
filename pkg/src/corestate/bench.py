"""Experiment driver: snapshot generation, the two reconstruction
studies, and the measurement-noise sweep.

Case 1 reconstructs transport-model truths with a reduced basis built
from transport training snapshots (perfect model); Case 2 builds the
basis from diffusion training snapshots instead, so the reconstruction
carries an irreducible model-bias floor.  Truth states always come from
the transport model on the test lattice.

All reports are deterministic: identical config and seed produce
byte-identical CSV files.  Wall-clock timings and other run metadata
live in a separate run_info JSON, outside the determinism contract.
"""

from __future__ import annotations

import hashlib
import json
import sys
import time
import warnings
from dataclasses import dataclass, field, replace
from multiprocessing import Pool
from pathlib import Path

import numpy as np

from .diffusion import ToleranceConfig, power_map_diffusion, solve_diffusion
from .errors import ConfigurationError
from .geometry import Field, GeometryConfig, Mesh, build_mesh
from .materials import (CrossSectionSet, default_cross_sections,
                        map_alpha_to_mu, test_lattice, training_lattice)
from .pbdw import assemble, error_bound, reconstruct_batch
from .rom import ReducedBasis, SnapshotSet, delta_curves, pod
from .sensing import (build_sensors, observe, perturb_observations,
                      save_observations)
from .transport import (build_quadrature, power_map_transport,
                        solve_transport)

REPORT_COLUMNS = ("n", "beta", "delta_wc", "delta_ms", "err_wc", "bound",
                  "eta_norm_mean")
NOISE_COLUMNS = ("n", "eps", "seed", "beta", "err_wc", "bound")

#: Rows where the stability constant falls below this are flagged and
#: the report is truncated rather than filled with garbage.
BETA_FLOOR = 1e-8

MODELS = ("transport", "diffusion")
LATTICES = ("training", "test")


def _default_bench_geometry() -> GeometryConfig:
    # 45 x 30 is the coarsest grid on which both the region edges
    # (multiples of 5 cm) and the 9 x 6 sensor tiling land on cell
    # boundaries; the 50 x 50 display default does not divide by 9.
    base = GeometryConfig.default()
    return replace(base, nx=45, ny=30)


@dataclass(frozen=True)
class ExperimentConfig:
    geometry: GeometryConfig
    cross_sections: CrossSectionSet
    tolerances: ToleranceConfig = field(default_factory=ToleranceConfig)
    sn_order: int = 4
    scheme: str = "step"
    sensor_grid: tuple[int, int] = (9, 6)
    n_range: tuple[int, int] = (1, 54)
    model_for_rom: str = "transport"
    model_for_truth: str = "transport"
    output_dir: Path = Path("bench_out")
    seed: int = 0
    threads: int = 1
    progress: bool = False

    def __post_init__(self):
        m = self.sensor_grid[0] * self.sensor_grid[1]
        lo, hi = self.n_range
        if not (1 <= lo <= hi <= m):
            raise ConfigurationError(
                f"n_range {self.n_range} must lie inside [1, m = {m}]")
        if self.model_for_rom not in MODELS or self.model_for_truth not in MODELS:
            raise ConfigurationError(f"models must be one of {MODELS}")

    @staticmethod
    def default(output_dir: str | Path = "bench_out",
                threads: int = 1) -> "ExperimentConfig":
        return ExperimentConfig(
            geometry=_default_bench_geometry(),
            cross_sections=default_cross_sections(),
            output_dir=Path(output_dir), threads=threads)

    @staticmethod
    def from_dict(d: dict, base_dir: Path = Path(".")) -> "ExperimentConfig":
        geometry = (GeometryConfig.from_dict(d["geometry"])
                    if "geometry" in d else _default_bench_geometry())
        if "cross_sections" in d and d["cross_sections"]:
            xs = CrossSectionSet.load(base_dir / d["cross_sections"])
        else:
            xs = default_cross_sections()
        sensors = d.get("sensors", {})
        return ExperimentConfig(
            geometry=geometry,
            cross_sections=xs,
            tolerances=ToleranceConfig.from_dict(d.get("tolerances", {})),
            sn_order=int(d.get("sn_order", 4)),
            scheme=d.get("scheme", "step"),
            sensor_grid=(int(sensors.get("sx", 9)), int(sensors.get("sy", 6))),
            n_range=tuple(int(v) for v in d.get("n_range", (1, 54))),
            model_for_rom=d.get("model_for_rom", "transport"),
            model_for_truth=d.get("model_for_truth", "transport"),
            output_dir=Path(d.get("output_dir", "bench_out")),
            seed=int(d.get("seed", 0)),
            threads=int(d.get("threads", 1)),
        )

    @staticmethod
    def from_json(path: str | Path) -> "ExperimentConfig":
        path = Path(path)
        with open(path) as fh:
            return ExperimentConfig.from_dict(json.load(fh), path.parent)

    def snapshot_signature(self, model: str, lattice: str) -> dict:
        """Everything a snapshot set depends on, for cache validation."""
        sig = {
            "model": model,
            "lattice": lattice,
            "geometry": self.geometry.to_dict(),
            "cross_sections": self.cross_sections.to_dict(),
            "tolerances": self.tolerances.to_dict(),
        }
        if model == "transport":
            sig["sn_order"] = self.sn_order
            sig["scheme"] = self.scheme
        return sig


def _fmt(x) -> str:
    return repr(float(x))


def _log(cfg: ExperimentConfig, msg: str):
    if cfg.progress:
        print(msg, file=sys.stderr, flush=True)


def solve_power_map(model: str, xs: CrossSectionSet, mesh: Mesh,
                    tol: ToleranceConfig, sn_order: int = 4,
                    scheme: str = "step"):
    """Solve one criticality problem and return (k_eff, unit-norm power)."""
    if model == "diffusion":
        sol = solve_diffusion(xs, mesh, tol)
        return sol.k_eff, power_map_diffusion(sol, xs)
    sol = solve_transport(xs, mesh, build_quadrature(sn_order), tol,
                          scheme=scheme)
    return sol.k_eff, power_map_transport(sol, xs)


def _snapshot_worker(task):
    index, model, alpha, base_xs, mesh, tol, sn_order, scheme = task
    try:
        xs = map_alpha_to_mu(alpha, base_xs)
        k_eff, power = solve_power_map(model, xs, mesh, tol, sn_order, scheme)
        return index, k_eff, power.values, None
    except Exception as exc:  # surfaced with the failing alpha by the caller
        return index, None, None, f"{type(exc).__name__}: {exc}"


def generate_snapshots(cfg: ExperimentConfig, model: str, lattice: str,
                       force: bool = False) -> tuple[SnapshotSet, dict]:
    """Solve the chosen model over a parameter lattice and persist the
    power maps with a manifest; reuse an existing set when its manifest
    matches the current configuration.

    Returns (snapshots, manifest).
    """
    if model not in MODELS:
        raise ConfigurationError(f"model must be one of {MODELS}")
    if lattice not in LATTICES:
        raise ConfigurationError(f"lattice must be one of {LATTICES}")
    alphas = training_lattice() if lattice == "training" else test_lattice()
    mesh = build_mesh(cfg.geometry)
    directory = Path(cfg.output_dir) / "snapshots" / f"{model}_{lattice}"
    manifest_path = directory / "manifest.json"
    signature = cfg.snapshot_signature(model, lattice)

    if manifest_path.exists() and not force:
        manifest = json.loads(manifest_path.read_text())
        if manifest.get("signature") == signature:
            hasher = hashlib.sha256()
            fields = []
            for i in range(manifest["count"]):
                text = (directory / f"snapshot_{i:03d}.csv").read_text()
                hasher.update(text.encode())
                fields.append(Field(
                    mesh, np.array([float(v) for v in text.split()])))
            if hasher.hexdigest() != manifest["content_hash"]:
                raise RuntimeError(
                    f"snapshot files under {directory} do not match their "
                    "manifest content hash; regenerate with force=True")
            _log(cfg, f"[snapshots] reusing {model}/{lattice} "
                      f"({manifest['count']} files)")
            return SnapshotSet(fields=tuple(fields), alphas=tuple(alphas),
                               model_tag=model), manifest

    _log(cfg, f"[snapshots] solving {model}/{lattice}: {len(alphas)} "
              f"problems on {cfg.threads} worker(s)")
    t0 = time.perf_counter()
    tasks = [(i, model, alpha, cfg.cross_sections, mesh, cfg.tolerances,
              cfg.sn_order, cfg.scheme) for i, alpha in enumerate(alphas)]
    if cfg.threads > 1:
        with Pool(cfg.threads) as pool:
            results = pool.map(_snapshot_worker, tasks)
    else:
        results = [_snapshot_worker(t) for t in tasks]

    fields, keffs = [], []
    for (index, k_eff, values, error), alpha in zip(results, alphas):
        if error is not None:
            raise RuntimeError(
                f"{model} solve failed at alpha = {alpha}: {error}")
        fields.append(Field(mesh, values))
        keffs.append(k_eff)

    directory.mkdir(parents=True, exist_ok=True)
    hasher = hashlib.sha256()
    for i, f in enumerate(fields):
        text = "\n".join(_fmt(v) for v in f.values) + "\n"
        hasher.update(text.encode())
        (directory / f"snapshot_{i:03d}.csv").write_text(text)
    manifest = {
        "signature": signature,
        "count": len(fields),
        "alphas": [list(a) for a in alphas],
        "k_eff": keffs,
        "content_hash": hasher.hexdigest(),
        "field_manifest": {"nx": mesh.nx, "ny": mesh.ny,
                           "extent_x": mesh.extent_x,
                           "extent_y": mesh.extent_y},
    }
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True)
                             + "\n")
    _log(cfg, f"[snapshots] {model}/{lattice} done in "
              f"{time.perf_counter() - t0:.1f} s")
    return SnapshotSet(fields=tuple(fields), alphas=tuple(alphas),
                       model_tag=model), manifest


@dataclass(frozen=True, eq=False)
class CaseContext:
    """Shared artifacts of one case run."""

    case: int
    mesh: Mesh
    basis: ReducedBasis
    sensors: object
    testset: SnapshotSet
    delta_wc: np.ndarray
    delta_ms: np.ndarray
    y_psi: np.ndarray          # (K_test, m) noiseless observations
    eps_model: float           # max test distance to the full-rank span
    train_manifest: dict
    test_manifest: dict


def prepare_case(cfg: ExperimentConfig, case: int,
                 force: bool = False) -> CaseContext:
    if case not in (1, 2):
        raise ValueError("case must be 1 or 2")
    rom_model = "transport" if case == 1 else "diffusion"
    train, train_manifest = generate_snapshots(cfg, rom_model, "training",
                                               force=force)
    test, test_manifest = generate_snapshots(cfg, cfg.model_for_truth,
                                             "test", force=force)
    mesh = train.mesh
    n_hi = min(cfg.n_range[1], len(train))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # rank truncation recorded below
        basis = pod(train, n_max=n_hi, lattice_tag="training")
    sensors = build_sensors(mesh, cfg.sensor_grid)
    delta_wc, delta_ms = delta_curves(basis, test)
    y_psi = np.stack([
        sensors.to_psi_coordinates(observe(u, sensors))
        for u in test.fields])
    return CaseContext(case=case, mesh=mesh, basis=basis, sensors=sensors,
                       testset=test, delta_wc=delta_wc, delta_ms=delta_ms,
                       y_psi=y_psi, eps_model=float(delta_wc[-1]),
                       train_manifest=train_manifest,
                       test_manifest=test_manifest)


@dataclass(frozen=True, eq=False)
class ExperimentReport:
    case: int
    rows: tuple[dict, ...]
    csv_path: Path
    run_info: dict

    def column(self, name: str) -> np.ndarray:
        return np.array([row[name] for row in self.rows])


def _keff_stats(manifest: dict) -> dict:
    k = np.array(manifest["k_eff"], dtype=float)
    return {"min": float(k.min()), "max": float(k.max()),
            "mean": float(k.mean())}


def _write_csv(path: Path, columns, rows):
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(
            str(row[c]) if isinstance(row[c], int) else _fmt(row[c])
            for c in columns))
    path.write_text("\n".join(lines) + "\n")


def run_case(cfg: ExperimentConfig, case: int,
             force: bool = False) -> ExperimentReport:
    """Run one reconstruction study and write its CSV report.

    Per reduced dimension n the report records the stability constant,
    the manifold approximation errors, the measured worst-case relative
    reconstruction error over the test set, the a priori bound, and the
    mean norm of the observation-space correction component.
    """
    t_start = time.perf_counter()
    ctx = prepare_case(cfg, case, force=force)
    t_setup = time.perf_counter()

    area = ctx.mesh.cell_area
    test_values = ctx.testset.matrix
    test_norms = np.sqrt(np.sum(test_values**2, axis=1) * area)
    psi_t = ctx.sensors.psi_matrix.T * area

    rows = []
    flags = []
    interp_max = 0.0
    n_lo = cfg.n_range[0]
    n_hi = min(cfg.n_range[1], ctx.basis.n_max)
    for n in range(n_lo, n_hi + 1):
        op = assemble(ctx.basis, n, ctx.sensors)
        b = op.beta
        if b < BETA_FLOOR:
            flags.append({"n": n, "beta": b,
                          "reason": f"beta below {BETA_FLOOR:g}"})
            break
        estimates, _, eta = reconstruct_batch(op, ctx.y_psi)
        errs = np.sqrt(np.sum((test_values - estimates)**2, axis=1) * area) \
            / test_norms
        obs_back = estimates @ psi_t
        interp_max = max(interp_max, float(
            np.max(np.linalg.norm(obs_back - ctx.y_psi, axis=1))))
        rows.append({
            "n": n,
            "beta": b,
            "delta_wc": float(ctx.delta_wc[n - 1]),
            "delta_ms": float(ctx.delta_ms[n - 1]),
            "err_wc": float(errs.max()),
            "bound": error_bound(b, float(ctx.delta_wc[n - 1])),
            "eta_norm_mean": float(np.mean(np.linalg.norm(eta, axis=1))),
        })

    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"case{case}_report.csv"
    _write_csv(csv_path, REPORT_COLUMNS, rows)
    save_observations(out_dir / f"case{case}_observations.csv", ctx.y_psi)

    run_info = {
        "case": case,
        "model_for_rom": "transport" if case == 1 else "diffusion",
        "model_for_truth": cfg.model_for_truth,
        "basis_rank": ctx.basis.n_max,
        "n_rows": len(rows),
        "flags": flags,
        "eps_model": ctx.eps_model,
        "interpolation_residual_max": interp_max,
        "k_eff": {"training": _keff_stats(ctx.train_manifest),
                  "test": _keff_stats(ctx.test_manifest)},
        "timings_s": {"setup": t_setup - t_start,
                      "reconstruction": time.perf_counter() - t_setup,
                      "total": time.perf_counter() - t_start},
        "n_range": list(cfg.n_range),
        "sensors": {"sx": cfg.sensor_grid[0], "sy": cfg.sensor_grid[1],
                    "m": cfg.sensor_grid[0] * cfg.sensor_grid[1]},
    }
    (out_dir / f"case{case}_run_info.json").write_text(
        json.dumps(run_info, indent=2, sort_keys=True) + "\n")
    _log(cfg, f"[case {case}] {len(rows)} rows -> {csv_path}")
    return ExperimentReport(case=case, rows=tuple(rows), csv_path=csv_path,
                            run_info=run_info)


def _noise_seed(base_seed: int, eps_idx: int, seed_idx: int,
                sample_idx: int) -> int:
    seq = np.random.SeedSequence([base_seed, eps_idx, seed_idx, sample_idx])
    return int(seq.generate_state(1)[0])


def sweep_noise(cfg: ExperimentConfig, eps_list, n_seeds: int = 10,
                force: bool = False) -> ExperimentReport:
    """Repeat the Case-2 reconstruction with perturbed observations.

    For every (n, eps, seed) the measured worst-case error is reported
    against the extended bound beta^-1 (delta_wc + eps + eps_model),
    with eps_model the measured distance of the test truths to the
    full-rank diffusion span.  eps = 0 rows reproduce the Case-2 report.
    """
    eps_list = [float(e) for e in eps_list]
    if any(e < 0 for e in eps_list):
        raise ValueError("noise levels must be nonnegative")
    ctx = prepare_case(cfg, 2, force=force)

    area = ctx.mesh.cell_area
    test_values = ctx.testset.matrix
    test_norms = np.sqrt(np.sum(test_values**2, axis=1) * area)
    k_test = len(ctx.testset)

    rows = []
    n_lo = cfg.n_range[0]
    n_hi = min(cfg.n_range[1], ctx.basis.n_max)
    for n in range(n_lo, n_hi + 1):
        op = assemble(ctx.basis, n, ctx.sensors)
        b = op.beta
        if b < BETA_FLOOR:
            break
        for eps_idx, eps in enumerate(eps_list):
            for seed_idx in range(n_seeds):
                if eps == 0.0:
                    y = ctx.y_psi
                else:
                    y = np.stack([
                        perturb_observations(
                            ctx.y_psi[t], eps,
                            _noise_seed(cfg.seed, eps_idx, seed_idx, t))
                        for t in range(k_test)])
                estimates, _, _ = reconstruct_batch(op, y)
                errs = np.sqrt(np.sum((test_values - estimates)**2, axis=1)
                               * area) / test_norms
                rows.append({
                    "n": n, "eps": eps, "seed": seed_idx, "beta": b,
                    "err_wc": float(errs.max()),
                    "bound": error_bound(b, float(ctx.delta_wc[n - 1]),
                                         eps_noise=eps,
                                         eps_model=ctx.eps_model),
                })

    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "noise_sweep.csv"
    _write_csv(csv_path, NOISE_COLUMNS, rows)
    run_info = {
        "eps_list": eps_list, "n_seeds": n_seeds,
        "eps_model": ctx.eps_model, "basis_rank": ctx.basis.n_max,
    }
    (out_dir / "noise_sweep_run_info.json").write_text(
        json.dumps(run_info, indent=2, sort_keys=True) + "\n")
    _log(cfg, f"[noise] {len(rows)} rows -> {csv_path}")
    return ExperimentReport(case=2, rows=tuple(rows), csv_path=csv_path,
                            run_info=run_info)
