"""Run configuration and the benchmark preset table."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, fields, replace

import numpy as np


@dataclass
class RunConfig:
    name: str = "custom"
    # problem
    law: str = "linear1d"
    gamma: float = 1.4
    u_max: float = 1.0
    ic: str = "sine"
    # mesh
    nx: int = 32
    ny: int = 0  # 0: one-dimensional
    domain: tuple = ((0.0, 1.0),)
    bc: str = "periodic"
    # space discretization
    space: str = "fv"  # fv | dgsem
    p: int = 3
    interface_flux: str = "rusanov"
    volume_flux: str = "ec"
    viscosity_mode: str = "none"  # none | lambda0 | lipschitz
    viscosity_factor: float = 0.0
    slope_limiter: str = "superbee"
    # time discretization
    scheme: str = "erk3"  # erk1 | erk3 | be | dirk33 | ab2 | am2 | timedg
    q: int = 3
    cfl: float = 1.0
    dt_rule: str = "wave_speed"  # wave_speed | lipschitz
    t_final: float = 1.0
    #: slab-size cap for the space-time scheme (0: no cap); the CFL target
    #: still sets the nominal step, the cap keeps the nonlinear solves sane
    max_slab_cfl: float = 0.0
    # limiter
    mode: str = "limited"  # limited | ho | lo
    k_max: int = 50
    tol: float = 1e-8
    beta: float = 1.0
    mu: float = 1.0 - 1e-7
    constraints: tuple = ()
    zs_constraints: tuple = ()  # empty: same as `constraints`
    # output
    snapshot_cadence: int = 0  # 0: final snapshot only
    paper_scale: bool = False

    @property
    def dim(self):
        return 2 if self.ny else 1

    def to_mapping(self):
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = repr(v)
            out[f.name] = str(v)
        return out

    def config_hash(self):
        blob = ";".join(f"{k}={v}" for k, v in sorted(self.to_mapping().items()))
        return hashlib.sha256(blob.encode()).hexdigest()[:12]

    def with_overrides(self, overrides):
        """Apply 'key=value' strings; values are parsed by field type."""
        kwargs = {}
        valid = {f.name: f for f in fields(self)}
        for item in overrides:
            key, _, raw = item.partition("=")
            key = key.strip()
            if key not in valid:
                raise KeyError(f"unknown config key '{key}'")
            current = getattr(self, key)
            if isinstance(current, bool):
                kwargs[key] = raw.strip().lower() in ("1", "true", "yes", "on")
            elif isinstance(current, int):
                kwargs[key] = int(raw)
            elif isinstance(current, float):
                kwargs[key] = float(raw)
            elif isinstance(current, tuple):
                kwargs[key] = eval(raw, {"__builtins__": {}})  # literal tuples
            else:
                kwargs[key] = raw.strip()
        return replace(self, **kwargs)


def parse_config_file(path):
    """Flat key = value text with optional [section] headers (ignored)."""
    overrides = []
    name = "custom"
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line or line.startswith("["):
                continue
            if "=" not in line:
                raise ValueError(f"bad config line: {line!r}")
            key, _, value = line.partition("=")
            if key.strip() == "preset":
                name = value.strip()
            else:
                overrides.append(line)
    base = PRESETS[name]() if name in PRESETS else RunConfig()
    return base.with_overrides(overrides)


# ------------------------------------------------------------- initial data

def jiang_shu_profile(xi):
    """Nonsmooth multi-feature profile on [-1, 1]."""
    xi = np.asarray(xi, dtype=float)
    a, z, delta, alpha = 0.5, -0.7, 0.005, 10.0
    beta = np.log(2.0) / (36.0 * delta**2)

    def G(x, c):
        return np.exp(-beta * (x - c) ** 2)

    def F(x, c):
        return np.sqrt(np.maximum(1.0 - alpha**2 * (x - c) ** 2, 0.0))

    u = np.zeros_like(xi)
    m = (xi >= -0.8) & (xi <= -0.6)
    u[m] = (G(xi[m], z - delta) + G(xi[m], z + delta) + 4 * G(xi[m], z)) / 6.0
    m = (xi >= -0.4) & (xi <= -0.2)
    u[m] = 1.0
    m = (xi >= 0.0) & (xi <= 0.2)
    u[m] = 1.0 - np.abs(10.0 * (xi[m] - 0.1))
    m = (xi >= 0.4) & (xi <= 0.6)
    u[m] = (F(xi[m], a - delta) + F(xi[m], a + delta) + 4 * F(xi[m], a)) / 6.0
    return u


def initial_condition(cfg, law):
    if cfg.ic == "toro_pb3":
        def ic(x):
            hi = law.from_primitive(1.0, 0.0, (law.gamma - 1.0) * 2.5e3)
            lo = law.from_primitive(1.0, 0.0, (law.gamma - 1.0) * 2.5e-2)
            return np.where((x > 0.0)[..., None], hi, lo)
        return ic
    if cfg.ic == "sod":
        def ic(x):
            left = law.from_primitive(1.0, 0.0, 1.0)
            right = law.from_primitive(0.125, 0.0, 0.1)
            return np.where((x < 0.5)[..., None], left, right)
        return ic
    if cfg.ic == "sine":
        return lambda x: np.sin(2.0 * np.pi * x)
    if cfg.ic == "offset_sine":
        return lambda x: 0.5 + 0.25 * np.sin(2.0 * np.pi * x)
    if cfg.ic == "jiang_shu":
        return lambda x: jiang_shu_profile(2.0 * x - 1.0)
    if cfg.ic == "burgers_square":
        def ic(x, y):
            inside = np.maximum(np.abs(x - 0.625), np.abs(y - 0.625)) <= 0.25
            return np.where(inside, 1.0, -0.75)
        return ic
    if cfg.ic == "kpp_disk":
        def ic(x, y):
            inside = x**2 + y**2 <= 1.0
            return np.where(inside, 3.5 * np.pi, 0.25 * np.pi)
        return ic
    raise KeyError(f"unknown initial condition '{cfg.ic}'")


# ------------------------------------------------------------------ presets

def _toro_common(**kw):
    base = dict(
        law="euler1d",
        ic="toro_pb3",
        nx=80,
        domain=((-0.5, 0.5),),
        bc="transmissive",
        interface_flux="rusanov",
        cfl=1.0,
        dt_rule="wave_speed",
        t_final=0.012,
        constraints=(("rho_min", 1e-8), ("rhoe_min", 1e-8), ("entropy_stencil",)),
    )
    base.update(kw)
    return RunConfig(**base)


def toro_pb3_fv_erk3():
    return _toro_common(name="toro_pb3_fv_erk3", space="fv", scheme="erk3")


def toro_pb3_fv_dirk33_cfl1():
    return _toro_common(name="toro_pb3_fv_dirk33_cfl1", space="fv", scheme="dirk33")


def toro_pb3_fv_dirk33_cfl5():
    return _toro_common(name="toro_pb3_fv_dirk33_cfl5", space="fv", scheme="dirk33",
                        cfl=5.0)


def _toro_dgsem(**kw):
    return _toro_common(
        space="dgsem", p=3, scheme="dirk33",
        viscosity_mode="lambda0", viscosity_factor=9.708,
        constraints=(("rho_min", 1e-8), ("rhoe_min", 1e-8)),
        **kw,
    )


def toro_pb3_dgsem_dirk33_cfl1():
    return _toro_dgsem(name="toro_pb3_dgsem_dirk33_cfl1")


def toro_pb3_dgsem_dirk33_cfl5():
    return _toro_dgsem(name="toro_pb3_dgsem_dirk33_cfl5", cfl=5.0)


def linear_jiang_shu_stdg():
    return RunConfig(
        name="linear_jiang_shu_stdg",
        law="linear1d", ic="jiang_shu",
        nx=40, domain=((0.0, 1.0),), bc="periodic",
        space="dgsem", p=3, interface_flux="godunov",
        viscosity_mode="lipschitz", viscosity_factor=38.8,
        scheme="timedg", q=3, cfl=1.0, dt_rule="lipschitz", t_final=1.0,
        constraints=(("bounds_ic",),),
    )


def burgers2d_stdg():
    return RunConfig(
        name="burgers2d_stdg",
        law="burgers2d", u_max=1.0, ic="burgers_square",
        nx=16, ny=16, domain=((0.0, 1.0), (0.0, 1.0)), bc="periodic",
        space="dgsem", p=3, interface_flux="godunov",
        viscosity_mode="lipschitz", viscosity_factor=38.8,
        scheme="timedg", q=3, cfl=10.0, dt_rule="lipschitz", t_final=0.375,
        max_slab_cfl=1.25,
        constraints=(("bounds_ic",), ("kruzhkov_budget", 0.0)),
        zs_constraints=(("bounds_ic",),),
    )


def kpp_stdg():
    return RunConfig(
        name="kpp_stdg",
        law="kpp2d", ic="kpp_disk",
        nx=25, ny=20, domain=((-2.0, 2.0), (-2.5, 1.5)), bc="transmissive",
        space="dgsem", p=3, interface_flux="godunov",
        viscosity_mode="lipschitz", viscosity_factor=38.8,
        scheme="timedg", q=3, cfl=10.0, dt_rule="lipschitz", t_final=1.0,
        max_slab_cfl=0.3,
        constraints=(("bounds_ic",), ("kruzhkov_budget", 0.0)),
        zs_constraints=(("bounds_ic",),),
    )


def advection_sine_fv_erk3():
    return RunConfig(
        name="advection_sine_fv_erk3",
        law="linear1d", ic="sine",
        nx=64, domain=((0.0, 1.0),), bc="periodic",
        space="fv", interface_flux="rusanov",
        scheme="erk3", cfl=0.9, dt_rule="lipschitz", t_final=0.5,
        constraints=(("bounds_ic",),),
    )


def advection_sine_dgsem_ssprk3():
    return RunConfig(
        name="advection_sine_dgsem_ssprk3",
        law="linear1d", ic="sine",
        nx=8, domain=((0.0, 1.0),), bc="periodic",
        space="dgsem", p=3, interface_flux="godunov",
        viscosity_mode="lipschitz", viscosity_factor=9.708,
        scheme="erk3", cfl=0.05, dt_rule="lipschitz", t_final=0.25,
        constraints=(("bounds", -2.0, 2.0),),
    )


PRESETS = {
    fn.__name__: fn
    for fn in (
        toro_pb3_fv_erk3,
        toro_pb3_fv_dirk33_cfl1,
        toro_pb3_fv_dirk33_cfl5,
        toro_pb3_dgsem_dirk33_cfl1,
        toro_pb3_dgsem_dirk33_cfl5,
        linear_jiang_shu_stdg,
        burgers2d_stdg,
        kpp_stdg,
        advection_sine_fv_erk3,
        advection_sine_dgsem_ssprk3,
    )
}


def paper_scale_mesh(cfg):
    """Restore the full-scale meshes of the 2D scalar benchmarks."""
    if cfg.name == "burgers2d_stdg":
        return replace(cfg, nx=128, ny=128, paper_scale=True)
    if cfg.name == "kpp_stdg":
        return replace(cfg, nx=100, ny=100, paper_scale=True)
    return cfg


def spec_scale_mesh(cfg):
    """The intermediate reduced meshes (Burgers 32x32, KPP 50x40)."""
    if cfg.name == "burgers2d_stdg":
        return replace(cfg, nx=32, ny=32)
    if cfg.name == "kpp_stdg":
        return replace(cfg, nx=50, ny=40)
    return cfg
