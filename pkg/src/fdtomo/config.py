"""Experiment configuration: one JSON document, validated into dataclasses.

A config names the physical setup (domain, phantom, attenuation, phase
function), the measurement and reconstruction grids, the frequency and
bandwidth sweeps, and the quadrature/Monte-Carlo budgets. Everything a
command produces is a deterministic function of (config, seed).
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from typing import Any

from .fields import PhaseFunction, ScalarField, make_attenuation, make_phantom
from .forward import McBudget, QuadPolicy
from .geometry import DiskDomain

_POW2 = {1 << k for k in range(11)}


@dataclass(frozen=True)
class ExperimentConfig:
    domain: DiskDomain = DiskDomain(r=1.0, D=0.2)
    phantom: dict = field(default_factory=lambda: {"kind": "none"})
    sigma: dict = field(default_factory=lambda: {"kind": "zero"})
    phase: dict = field(default_factory=lambda: {"kind": "isotropic"})
    omega_list: tuple = (64.0, 128.0, 256.0, 512.0)
    b_list: tuple = (4, 8, 16)
    n_s: int = 256
    n_theta: int = 256
    n_x: int = 512
    budget: McBudget = McBudget(n_paths=20000, max_order=4, seed=0)
    quad: QuadPolicy = QuadPolicy()
    seed: int = 0
    noise: float = 0.0
    out_dir: str = "out"
    # reconstruction options (invert/iterate/sweep)
    inv_b: int = 8
    max_iters: int = 10
    stop_tol: float = 1e-4
    k0: float | None = None
    data_model: str = "full"
    verify_samples: int = 2048

    def __post_init__(self) -> None:
        if not self.omega_list:
            raise ValueError("omega_list must be nonempty")
        if any(w <= 0 for w in self.omega_list):
            raise ValueError("omega values must be positive")
        if list(self.omega_list) != sorted(self.omega_list) or len(
                set(self.omega_list)) != len(self.omega_list):
            raise ValueError("omega_list must be strictly ascending")
        for name, v in (("n_s", self.n_s), ("n_theta", self.n_theta),
                        ("n_x", self.n_x)):
            if v not in _POW2 or v > 1024:
                raise ValueError(f"{name} must be a power of two <= 1024, got {v}")
        if not self.b_list or any(
                not isinstance(b, int) or b <= 0 for b in self.b_list):
            raise ValueError("b_list must be positive integers")
        if self.inv_b <= 0:
            raise ValueError("inversion bandwidth must be positive")
        if self.max_iters < 0:
            raise ValueError("max_iters must be nonnegative")
        if self.stop_tol < 0:
            raise ValueError("stop_tol must be nonnegative")
        if self.noise < 0:
            raise ValueError("noise level must be nonnegative")
        if self.data_model not in ("full", "leading"):
            raise ValueError("data_model must be 'full' or 'leading'")
        if self.verify_samples < 0:
            raise ValueError("verify sample count must be nonnegative")
        _validate_phantom(self.phantom, self.domain)
        _validate_sigma(self.sigma)
        _validate_phase(self.phase)


def _validate_phantom(desc: dict, domain: DiskDomain) -> None:
    kind = desc.get("kind", "none")
    if kind == "none":
        return
    if kind == "gaussian-bumps":
        bumps = desc.get("bumps", [])
        if not bumps:
            raise ValueError("gaussian-bumps phantom needs at least one bump")
        for b in bumps:
            if b.get("width", 0.0) <= 0:
                raise ValueError("bump width must be positive")
            if b.get("amplitude", 0.0) < 0:
                raise ValueError("bump amplitude must be nonnegative")
            cx, cy = b.get("center", (0.0, 0.0))
            if (cx**2 + cy**2) ** 0.5 >= domain.support_radius:
                raise ValueError("bump center must lie inside the support ball")
    elif kind == "disks":
        for d in desc.get("disks", []):
            if d.get("radius", 0.0) <= 0:
                raise ValueError("disk radius must be positive")
            if d.get("amplitude", 0.0) < 0:
                raise ValueError("disk amplitude must be nonnegative")
    elif kind == "smooth-ring":
        if desc.get("amplitude", 0.0) < 0:
            raise ValueError("ring amplitude must be nonnegative")
    else:
        raise ValueError(f"unknown phantom kind {kind!r}")


def _validate_sigma(desc: dict) -> None:
    kind = desc.get("kind", "zero")
    if kind not in ("zero", "constant", "gaussian"):
        raise ValueError(f"unknown attenuation kind {kind!r}")
    if kind == "constant" and float(desc.get("value", 0.0)) < 0:
        raise ValueError("attenuation must be nonnegative")


def _validate_phase(desc: dict) -> None:
    kind = desc.get("kind", "isotropic")
    if kind not in ("isotropic", "cosine"):
        raise ValueError(f"unknown phase-function kind {kind!r}")
    if kind == "cosine" and not abs(float(desc.get("g", 0.0))) < 1:
        raise ValueError("cosine phase function needs |g| < 1")


def config_from_dict(doc: dict) -> ExperimentConfig:
    """Build a validated config from a parsed JSON document."""
    if not isinstance(doc, dict):
        raise ValueError("config document must be a JSON object")
    known = {"domain", "phantom", "sigma", "phase", "omega_list", "b_list",
             "grid", "mc", "quad", "seed", "noise", "out_dir", "inversion",
             "verify"}
    unknown = set(doc) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    dom = doc.get("domain", {})
    domain = DiskDomain(r=float(dom.get("r", 1.0)), D=float(dom.get("D", 0.2)))
    grid = doc.get("grid", {})
    mc = doc.get("mc", {})
    seed = int(doc.get("seed", 0))
    budget = McBudget(n_paths=int(mc.get("n_paths", 20000)),
                      max_order=int(mc.get("max_order", 4)), seed=seed)
    qd = doc.get("quad", {})
    quad = QuadPolicy(
        points_per_wavelength=float(qd.get("points_per_wavelength", 10.0)),
        min_cells=int(qd.get("min_cells", 96)))
    inv = doc.get("inversion", {})
    k0 = inv.get("K0")
    return ExperimentConfig(
        domain=domain,
        phantom=doc.get("phantom", {"kind": "none"}),
        sigma=doc.get("sigma", {"kind": "zero"}),
        phase=doc.get("phase", {"kind": "isotropic"}),
        omega_list=tuple(float(w) for w in doc.get("omega_list",
                                                   (64, 128, 256, 512))),
        b_list=tuple(int(b) for b in doc.get("b_list", (4, 8, 16))),
        n_s=int(grid.get("n_s", 256)),
        n_theta=int(grid.get("n_theta", 256)),
        n_x=int(grid.get("n_x", 512)),
        budget=budget,
        quad=quad,
        seed=seed,
        noise=float(doc.get("noise", 0.0)),
        out_dir=str(doc.get("out_dir", "out")),
        inv_b=int(inv.get("b", 8)),
        max_iters=int(inv.get("max_iters", 10)),
        stop_tol=float(inv.get("stop_tol", 1e-4)),
        k0=None if k0 is None else float(k0),
        data_model=str(inv.get("data_model", "full")),
        verify_samples=int(doc.get("verify", {}).get("sample_count", 2048)),
    )


def load_config(path: str) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    return config_from_dict(doc)


def with_seed(cfg: ExperimentConfig, seed: int) -> ExperimentConfig:
    """Override the seed everywhere it enters the randomness."""
    return replace(cfg, seed=seed, budget=replace(cfg.budget, seed=seed))


def build_phantom(cfg: ExperimentConfig, n: int | None = None) -> ScalarField | None:
    """The scattering coefficient on an n x n lattice, or None if absent."""
    if cfg.phantom.get("kind", "none") == "none":
        return None
    return make_phantom(cfg.phantom, cfg.domain, n=n if n is not None else cfg.n_x)


def build_sigma(cfg: ExperimentConfig) -> ScalarField:
    return make_attenuation(cfg.sigma, cfg.domain)


def build_phase(cfg: ExperimentConfig) -> PhaseFunction:
    kind = cfg.phase.get("kind", "isotropic")
    return PhaseFunction(kind=kind, g=float(cfg.phase.get("g", 0.0)))


def canonical_json(obj: Any) -> str:
    """Deterministic JSON encoding: sorted keys, no whitespace."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"),
                      allow_nan=False)


def config_digest(cfg: ExperimentConfig) -> str:
    """sha256 over the normalized config document."""
    doc = {
        "domain": {"r": cfg.domain.r, "D": cfg.domain.D},
        "phantom": cfg.phantom,
        "sigma": cfg.sigma,
        "phase": cfg.phase,
        "omega_list": list(cfg.omega_list),
        "b_list": list(cfg.b_list),
        "grid": {"n_s": cfg.n_s, "n_theta": cfg.n_theta, "n_x": cfg.n_x},
        "mc": {"n_paths": cfg.budget.n_paths, "max_order": cfg.budget.max_order},
        "quad": {"points_per_wavelength": cfg.quad.points_per_wavelength,
                 "min_cells": cfg.quad.min_cells},
        "seed": cfg.seed,
        "noise": cfg.noise,
        "inversion": {"b": cfg.inv_b, "max_iters": cfg.max_iters,
                      "stop_tol": cfg.stop_tol, "K0": cfg.k0,
                      "data_model": cfg.data_model},
        "verify": {"sample_count": cfg.verify_samples},
    }
    return hashlib.sha256(canonical_json(doc).encode("utf-8")).hexdigest()
