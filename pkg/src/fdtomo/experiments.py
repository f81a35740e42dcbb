"""Experiment drivers behind the command-line subcommands.

Each runner is a plain function from (config, paths, threads) to a report
dict, writing its outputs through the deterministic storage helpers so
repeated runs with the same seed produce byte-identical files.
"""
from __future__ import annotations

import math
import os

import numpy as np

from .config import (ExperimentConfig, build_phantom, build_phase,
                     build_sigma, config_digest)
from .errors import DivergenceError
from .fields import PhaseFunction, ScalarField, make_phantom
from .forward import DataSet, leading_single, scattering_density, synthesize_data
from .geometry import DiskDomain, GeometryError, SinogramGrid
from .inversion import InversionConfig, apply_inverse, iterate
from .oscphase import (Phase1Model, Phase2Model, gaussian_quadratic_model,
                       gaussian_quadratic_oracle, lemma_S_margins,
                       phi1_curvature_range, phi2_curvature_range, s2_profile,
                       s2_second_derivative_aligned, stationary_phase_1d)
from .storage import (read_sinogram, write_csv, write_grid, write_json,
                      write_sinogram)
from .xray import FilterSpec, lowpass_reference

_REL_SLACK = 1.0 + 1e-9


def _zero_phantom(cfg: ExperimentConfig) -> ScalarField:
    n = cfg.n_x
    return ScalarField(values=np.zeros((n, n)), extent=cfg.domain.r,
                       support_center=(0.0, 0.0),
                       support_radius=cfg.domain.support_radius)


def _phantom_or_zero(cfg: ExperimentConfig) -> ScalarField:
    k = build_phantom(cfg)
    return k if k is not None else _zero_phantom(cfg)


def _inversion_config(cfg: ExperimentConfig, omega: float, b: int | None = None
                      ) -> InversionConfig:
    return InversionConfig(omega=omega, filter=FilterSpec(b=b or cfg.inv_b),
                           max_iters=cfg.max_iters, stop_tol=cfg.stop_tol,
                           K0=cfg.k0, forward_budget=cfg.budget,
                           quad=cfg.quad, n_x=cfg.n_x)


def truth_band(cfg: ExperimentConfig, b: int) -> ScalarField | None:
    """Band-limited rho*k on the reconstruction lattice, if a phantom exists.

    The phantom is evaluated directly on the n_x lattice (no resampling)
    so the comparison target carries no interpolation bias.
    """
    k = build_phantom(cfg, n=cfg.n_x)
    if k is None:
        return None
    return lowpass_reference(scattering_density(k, cfg.domain),
                             FilterSpec(b=b))


def _omega_tag(omega: float) -> str:
    return f"{omega:g}".replace(".", "p")


def _file_meta(cfg: ExperimentConfig, omega: float, component: str,
               extra: dict | None = None) -> dict:
    meta = {"component": component, "omega": omega,
            "config": config_digest(cfg), "seed": cfg.seed,
            "n_paths": cfg.budget.n_paths, "max_order": cfg.budget.max_order,
            "noise": cfg.noise}
    if extra:
        meta.update(extra)
    return meta


def run_synth(cfg: ExperimentConfig, out_dir: str, threads: int = 1) -> dict:
    """Synthesize and store data plus component sinograms for every omega."""
    os.makedirs(out_dir, exist_ok=True)
    k = _phantom_or_zero(cfg)
    sigma = build_sigma(cfg)
    phi = build_phase(cfg)
    grid = SinogramGrid(cfg.n_s, cfg.n_theta, cfg.domain)
    files = []
    for omega in cfg.omega_list:
        ds = synthesize_data(grid, omega, sigma, k, phi, budget=cfg.budget,
                             quad=cfg.quad, noise=cfg.noise, threads=threads)
        tag = _omega_tag(omega)
        name = f"data_w{tag}.hrts"
        write_sinogram(os.path.join(out_dir, name), ds.data, grid, omega,
                       _file_meta(cfg, omega, "data",
                                  {"subcritical": ds.meta["subcritical"]}))
        files.append(name)
        for comp, arr in sorted(ds.components.items()):
            extra = {}
            if comp in ds.stderr:
                extra["stderr_max"] = float(np.max(ds.stderr[comp]))
            cname = f"comp_{comp}_w{tag}.hrts"
            write_sinogram(os.path.join(out_dir, cname), arr, grid, omega,
                           _file_meta(cfg, omega, comp, extra))
            files.append(cname)
    manifest = {"config": config_digest(cfg), "seed": cfg.seed,
                "omega_list": list(cfg.omega_list),
                "mc": {"n_paths": cfg.budget.n_paths,
                       "max_order": cfg.budget.max_order},
                "noise": cfg.noise, "files": files}
    write_json(os.path.join(out_dir, "manifest.json"), manifest)
    return manifest


def _load_dataset(cfg: ExperimentConfig, sinogram_path: str) -> DataSet:
    rec = read_sinogram(sinogram_path)
    if not (math.isclose(rec.r, cfg.domain.r) and math.isclose(rec.D, cfg.domain.D)):
        raise ValueError(
            f"sinogram domain (r={rec.r}, D={rec.D}) does not match config "
            f"(r={cfg.domain.r}, D={cfg.domain.D})")
    if not any(math.isclose(rec.omega, w) for w in cfg.omega_list):
        raise ValueError(
            f"sinogram frequency {rec.omega} is not in the configured "
            f"omega_list {list(cfg.omega_list)}")
    return DataSet(grid=rec.grid(), omega=rec.omega, data=rec.data,
                   meta=dict(rec.meta))


def run_invert(cfg: ExperimentConfig, sinogram_path: str, out_dir: str,
               threads: int = 1) -> dict:
    """Direct reconstruction of one stored sinogram."""
    os.makedirs(out_dir, exist_ok=True)
    ds = _load_dataset(cfg, sinogram_path)
    inv = _inversion_config(cfg, ds.omega)
    sigma = build_sigma(cfg)
    phi = build_phase(cfg)
    q0 = apply_inverse(ds, inv, sigma, phi)
    meta = {"config": config_digest(cfg), "omega": ds.omega, "b": cfg.inv_b,
            "kind": "q0"}
    write_grid(os.path.join(out_dir, "q0.hrtg"), q0.values, q0.extent,
               ds.omega, meta)
    rows = [(i, j, q0.coords[i], q0.coords[j], q0.values[i, j])
            for i in range(q0.n) for j in range(q0.n)]
    write_csv(os.path.join(out_dir, "q0.csv"),
              ["i", "j", "x", "y", "value"], rows)
    report = {"omega": ds.omega, "b": cfg.inv_b, "config": config_digest(cfg),
              "sup_q0": q0.sup_norm(), "error_sup": None}
    tb = truth_band(cfg, cfg.inv_b)
    if tb is not None:
        report["error_sup"] = float(np.max(np.abs(q0.values - tb.values)))
    write_json(os.path.join(out_dir, "invert_report.json"), report)
    return report


def run_iterate(cfg: ExperimentConfig, sinogram_path: str, out_dir: str,
                threads: int = 1) -> dict:
    """Fixed-point refinement of one stored sinogram, with per-step table.

    On divergence the partial table is still written before the error is
    re-raised for the caller's exit-code mapping.
    """
    os.makedirs(out_dir, exist_ok=True)
    ds = _load_dataset(cfg, sinogram_path)
    inv = _inversion_config(cfg, ds.omega)
    sigma = build_sigma(cfg)
    phi = build_phase(cfg)
    truth = build_phantom(cfg, n=cfg.n_x)
    try:
        state = iterate(ds, inv, sigma, phi, truth=truth, threads=threads)
    except DivergenceError as err:
        if err.state is not None:
            _write_iterate_outputs(cfg, ds, err.state, out_dir)
        raise
    return _write_iterate_outputs(cfg, ds, state, out_dir)


def _write_iterate_outputs(cfg, ds, state, out_dir: str) -> dict:
    meta = {"config": config_digest(cfg), "omega": ds.omega, "b": cfg.inv_b}
    write_grid(os.path.join(out_dir, "q0.hrtg"), state.q0.values,
               state.q0.extent, ds.omega, dict(meta, kind="q0"))
    write_grid(os.path.join(out_dir, "q_final.hrtg"), state.q.values,
               state.q.extent, ds.omega, dict(meta, kind="q_final"))
    rows = []
    n_rows = len(state.diffs) + 1
    for n in range(n_rows):
        diff = "" if n == 0 else state.diffs[n - 1]
        err = "" if state.errors is None else state.errors[n]
        rows.append((n, diff, err))
    write_csv(os.path.join(out_dir, "iterations.csv"),
              ["n", "diff_sup", "error_sup"], rows)
    report = {"config": config_digest(cfg), "omega": ds.omega, "b": cfg.inv_b,
              "iterations": len(state.diffs), "converged": state.converged,
              "diverged": state.diverged, "K0": state.K0,
              "final_error_sup": None if state.errors is None
              else state.errors[-1],
              "direct_error_sup": None if state.errors is None
              else state.errors[0]}
    write_json(os.path.join(out_dir, "iterate_report.json"), report)
    return report


def run_sweep(cfg: ExperimentConfig, out_dir: str, threads: int = 1) -> dict:
    """Scaling table over (omega, b) with per-b log-log slope fits."""
    if len(cfg.omega_list) < 3:
        raise ValueError("sweep needs at least 3 omega values for a slope fit")
    k = build_phantom(cfg)
    if k is None:
        raise ValueError("sweep needs a phantom to measure errors against")
    os.makedirs(out_dir, exist_ok=True)
    sigma = build_sigma(cfg)
    phi = build_phase(cfg)
    grid = SinogramGrid(cfg.n_s, cfg.n_theta, cfg.domain)

    rows = []
    per_b: dict = {b: ([], []) for b in cfg.b_list}
    for omega in cfg.omega_list:
        if cfg.data_model == "leading":
            t1l = leading_single(grid.s_mesh, grid.theta_mesh, omega, sigma,
                                 k, phi, cfg.domain)
            ds = DataSet(grid=grid, omega=omega, data=t1l)
        else:
            ds = synthesize_data(grid, omega, sigma, k, phi,
                                 budget=cfg.budget, quad=cfg.quad,
                                 noise=cfg.noise, threads=threads)
        for b in cfg.b_list:
            inv = _inversion_config(cfg, omega, b=b)
            tb = truth_band(cfg, b)
            q0 = apply_inverse(ds, inv, sigma, phi)
            direct = float(np.max(np.abs(q0.values - tb.values)))
            iterated = ""
            c1 = ""
            if cfg.data_model == "full" and cfg.max_iters > 0:
                try:
                    st = iterate(ds, inv, sigma, phi,
                                 truth=build_phantom(cfg, n=cfg.n_x),
                                 threads=threads)
                    iterated = st.errors[-1] if st.errors else ""
                    ratios = [st.diffs[i + 1] / st.diffs[i]
                              for i in range(len(st.diffs) - 1)
                              if st.diffs[i] > 0]
                    c1 = max(ratios) if ratios else ""
                except DivergenceError:
                    iterated = ""
                    c1 = ""
            rows.append((omega, b, direct, iterated, c1))
            per_b[b][0].append(omega)
            per_b[b][1].append(direct)
    write_csv(os.path.join(out_dir, "sweep.csv"),
              ["omega", "b", "direct_error", "iterated_error", "c1_measured"],
              rows)

    fit_rows = []
    fits = {}
    for b in cfg.b_list:
        ws, es = per_b[b]
        slope, intercept = np.polyfit(np.log(ws), np.log(es), 1)
        verdict = "consistent" if slope <= -0.4 else "inconsistent"
        fit_rows.append((b, float(slope), float(intercept), verdict))
        fits[str(b)] = {"slope": float(slope), "intercept": float(intercept),
                        "verdict": verdict}
    write_csv(os.path.join(out_dir, "fits.csv"),
              ["b", "slope", "intercept", "verdict"], fit_rows)
    report = {"config": config_digest(cfg), "data_model": cfg.data_model,
              "fits": fits}
    write_json(os.path.join(out_dir, "sweep_report.json"), report)
    return report


# ---------------------------------------------------------------------------
# verify


def _sample_phi1(domain: DiskDomain, count: int, rng) -> np.ndarray:
    """Curvature values at `count` admissible chord-frame samples."""
    band = domain.band_radius
    out = np.empty(count)
    filled = 0
    while filled < count:
        m = 2 * (count - filled) + 64
        theta = rng.uniform(0.0, 2.0 * np.pi, m)
        s = rng.uniform(-band, band, m) * 0.999
        u = rng.uniform(-band, band, m)
        v = rng.uniform(-band, band, m)
        ok = (s + v) ** 2 + u**2 <= band**2 * (1 - 1e-9)
        take = min(int(np.sum(ok)), count - filled)
        idx = np.nonzero(ok)[0][:take]
        for i in idx:
            sp = np.array([-np.sin(theta[i]), np.cos(theta[i])])
            model = Phase1Model(tuple(s[i] * sp), float(theta[i]), domain)
            out[filled] = float(model.d2phi1_dv2(u[i], v[i]))
            filled += 1
    return out


def _sample_vertices(domain: DiskDomain, count: int, rng) -> np.ndarray:
    rad = domain.support_radius * np.sqrt(rng.uniform(0.0, 1.0, count)) * 0.999
    ang = rng.uniform(0.0, 2.0 * np.pi, count)
    return np.stack([rad * np.cos(ang), rad * np.sin(ang)], axis=-1)


def _sample_phi2(domain: DiskDomain, count: int, rng) -> np.ndarray:
    band = domain.band_radius
    x1 = _sample_vertices(domain, count, rng)
    xm = _sample_vertices(domain, count, rng)
    s = rng.uniform(-band, band, count) * 0.999
    theta = rng.uniform(0.0, 2.0 * np.pi, count)
    out = np.empty(count)
    for i in range(count):
        model = Phase2Model(tuple(x1[i]), tuple(xm[i]), domain)
        out[i] = float(model.derivatives(s[i], theta[i]).dss)
    return out


def _check_phi1_bounds(domain: DiskDomain, count: int, rng) -> dict:
    lo, hi = phi1_curvature_range(domain)
    vals = _sample_phi1(domain, count, rng)
    violations = int(np.sum((vals < lo * _REL_SLACK) | (vals > hi / _REL_SLACK)))
    return {"name": "phi1_transverse_curvature", "samples": count,
            "bounds": [lo, hi], "observed": [float(np.min(vals)),
                                             float(np.max(vals))],
            "violations": violations,
            "status": "pass" if violations == 0 else "fail"}


def _check_phi2_bounds(domain: DiskDomain, count: int, rng) -> dict:
    lo, hi = phi2_curvature_range(domain)
    vals = _sample_phi2(domain, count, rng)
    violations = int(np.sum((vals < lo * _REL_SLACK) | (vals > hi / _REL_SLACK)))
    return {"name": "phi2_offset_curvature", "samples": count,
            "bounds": [lo, hi], "observed": [float(np.min(vals)),
                                             float(np.max(vals))],
            "violations": violations,
            "status": "pass" if violations == 0 else "fail"}


def _check_det_values(domain: DiskDomain, count: int, rng) -> dict:
    """Closed-form profile curvature vs numeric second differences."""
    worst = 0.0
    h = 1e-4
    pairs = max(1, min(count, 100))
    min_sep = 0.05 * domain.support_radius
    for _ in range(pairs):
        x1 = _sample_vertices(domain, 1, rng)[0]
        xm = _sample_vertices(domain, 1, rng)[0]
        while math.dist(tuple(x1), tuple(xm)) < min_sep:
            xm = _sample_vertices(domain, 1, rng)[0]
        model = Phase2Model(tuple(x1), tuple(xm), domain)
        for tc in model.critical_angles:
            closed = s2_second_derivative_aligned(model, tc)
            prof = lambda t: float(s2_profile(model, np.array([t]))[0][0])
            fd = (prof(tc + h) - 2.0 * prof(tc) + prof(tc - h)) / h**2
            worst = max(worst, abs(fd - closed) / abs(closed))
    # Hessian determinant must collapse at vertex coincidence
    det_at_zero = 0.0
    for _ in range(8):
        x = _sample_vertices(domain, 1, rng)[0]
        model = Phase2Model(tuple(x), tuple(x), domain)
        theta = float(rng.uniform(0.0, 2.0 * np.pi))
        s_c = float(np.array([-np.sin(theta), np.cos(theta)]) @ x)
        der = model.derivatives(s_c, theta)
        det_at_zero = max(det_at_zero,
                          abs(float(der.dss * der.dthetatheta - der.dstheta**2)))
    ok = worst <= 1e-6 and det_at_zero <= 1e-8
    return {"name": "profile_curvature_closed_form", "pairs": pairs,
            "worst_rel": worst, "det_at_coincidence": det_at_zero,
            "status": "pass" if ok else "fail"}


def _check_rate(omegas=(64.0, 256.0, 1024.0, 4096.0)) -> dict:
    model = gaussian_quadratic_model()
    rems = []
    worst_oracle = 0.0
    for w in omegas:
        total, _, rem = stationary_phase_1d(model, w)
        worst_oracle = max(worst_oracle,
                           abs(total - gaussian_quadratic_oracle(w)))
        rems.append(abs(rem))
    slope = float(np.polyfit(np.log(omegas), np.log(rems), 1)[0])
    ok = -1.6 <= slope <= -1.35 and worst_oracle <= 1e-8
    return {"name": "stationary_phase_rate", "omegas": list(omegas),
            "exponent": slope, "oracle_error": worst_oracle,
            "status": "pass" if ok else "fail"}


def _check_margins(domain: DiskDomain) -> dict:
    sep = 0.4 * domain.support_radius
    model = Phase2Model((-sep / 2.0, 0.05 * domain.support_radius),
                        (sep / 2.0, 0.05 * domain.support_radius), domain)
    rep = lemma_S_margins(model)
    return {"name": "profile_margins", "separation": rep.separation,
            "c1": rep.c1, "c2": rep.c2, "c2_reference": rep.c2_reference,
            "status": "pass" if rep.c2_ok else "fail"}


def run_verify(cfg: ExperimentConfig, out_dir: str) -> tuple[dict, bool]:
    """Aggregate phase-machinery checks into one JSON report."""
    os.makedirs(out_dir, exist_ok=True)
    count = cfg.verify_samples
    if count == 0:
        report = {"config": config_digest(cfg), "checks": [], "violations": 0,
                  "ok": True}
        write_json(os.path.join(out_dir, "verify.json"), report)
        return report, True
    rng = np.random.default_rng(cfg.seed)
    checks = [
        _check_phi1_bounds(cfg.domain, count, rng),
        _check_phi2_bounds(cfg.domain, count, rng),
        _check_det_values(cfg.domain, count, rng),
        _check_rate(),
        _check_margins(cfg.domain),
    ]
    # narrow-band probe: bounds must survive while margins tighten
    small = DiskDomain(r=cfg.domain.r, D=0.01)
    probe = [
        _check_phi1_bounds(small, max(count // 4, 64), rng),
        _check_phi2_bounds(small, max(count // 4, 64), rng),
        _check_margins(small),
    ]
    for c in probe:
        c["name"] = "smallD_" + c["name"]
    checks.extend(probe)
    failures = [c["name"] for c in checks if c["status"] != "pass"]
    report = {"config": config_digest(cfg), "checks": checks,
              "violations": len(failures), "failed": failures,
              "ok": not failures}
    write_json(os.path.join(out_dir, "verify.json"), report)
    return report, not failures
