"""Preset catalogue: driver generators, terminal values, obstacles and standard test models.

Every generator is vectorized: f(t, x, y, z) with y of shape (n,), z of shape
(n, d) and t either scalar or (n,).
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .bdsde import DriverSet
from .errors import ConfigurationError
from .levy import JumpAtom, LevyCharacteristics
from .yosida import truncate_generator


def _zsum(z, coefs):
    z = np.asarray(z, dtype=float)
    coefs = np.asarray(coefs, dtype=float)
    if coefs.size == 0 or z.size == 0:
        return 0.0
    k = min(coefs.size, z.shape[-1])
    return z[..., :k] @ coefs[:k]


def _ones_like(y):
    return np.ones_like(np.asarray(y, dtype=float))


# ---------------------------------------------------------------- generator presets


def f_linear(a: float = 0.0, b: float = 0.0, z_coef=()):
    def f(t, x, y, z):
        return a * np.asarray(y, dtype=float) + b + _zsum(z, z_coef)

    z_coef = tuple(float(c) for c in z_coef)
    consts = dict(lam=a, lipschitz=abs(a), eta=float(np.linalg.norm(z_coef)) if z_coef else 0.0,
                  varphi=abs(b), phi_hat=abs(a), f_uses_z=any(c != 0 for c in z_coef))
    return f, consts


def f_cubic_monotone(a: float = 1.0, b: float = 0.5, c: float = 0.0):
    if a < 0 or b < 0:
        raise ConfigurationError("cubic-monotone preset needs a, b >= 0")

    def f(t, x, y, z):
        y = np.asarray(y, dtype=float)
        return -a * y**3 - b * y + c

    return f, dict(lam=-b, f_uses_z=False)


def f_polynomial(coeffs=(0.0,), z_coef=()):
    coeffs = tuple(float(c) for c in coeffs)

    def f(t, x, y, z):
        return np.polynomial.polynomial.polyval(np.asarray(y, dtype=float), coeffs) + _zsum(z, z_coef)

    lip = abs(coeffs[1]) if len(coeffs) == 2 else (0.0 if len(coeffs) < 2 else None)
    consts = dict(f_uses_z=any(c != 0 for c in z_coef))
    if lip is not None:
        consts.update(lipschitz=lip, lam=coeffs[1] if len(coeffs) > 1 else 0.0)
    return f, consts


def h_linear(a: float = 0.0, b: float = 0.0):
    def h(t, x, y):
        return a * np.asarray(y, dtype=float) + b

    return h, dict(varrho=a, zeta=abs(a), psi=abs(b), h_lipschitz=abs(a))


def g_constant(g0: float = 0.0):
    def g(t, x, y, z):
        return g0 * _ones_like(y)

    return g, dict(rho=0.0, alpha=0.0, g_uses_yz=False)


def g_linear(s: float = 0.0, z_coef=(), c: float = 0.0):
    z_coef = tuple(float(v) for v in z_coef)

    def g(t, x, y, z):
        return c + s * np.asarray(y, dtype=float) + _zsum(z, z_coef)

    zn2 = float(np.sum(np.square(z_coef)))
    if zn2 > 0:
        rho, alpha = 2 * s * s, 2 * zn2
    else:
        rho, alpha = s * s, 0.0
    return g, dict(rho=rho, alpha=alpha, g_uses_yz=(s != 0 or zn2 > 0))


_F = {"linear": f_linear, "cubic_monotone": f_cubic_monotone, "polynomial": f_polynomial}
_H = {"linear": h_linear}
_G = {"constant": g_constant, "linear": g_linear}


def make_drivers(spec: dict) -> DriverSet:
    """Build a DriverSet from {"f": {...}, "h": {...}, "g": {...}} preset blocks.

    f blocks may carry "cap": p to apply the generator truncation.
    """
    spec = dict(spec or {})
    fspec = dict(spec.get("f") or {"preset": "linear"})
    name = fspec.pop("preset", "linear")
    cap = fspec.pop("cap", None)
    if name not in _F:
        raise ConfigurationError(f"unknown f preset {name!r}; choose from {sorted(_F)}")
    f, consts = _F[name](**fspec)
    if cap is not None:
        base = f
        capped = truncate_generator(lambda t, y, x, z: base(t, x, y, z), float(cap))
        f = lambda t, x, y, z: capped(t, y, x, z)  # noqa: E731
        consts = {k: v for k, v in consts.items() if k in ("lam", "lipschitz", "eta", "f_uses_z", "phi_hat")}
    h = None
    hspec = spec.get("h")
    if hspec:
        hspec = dict(hspec)
        hname = hspec.pop("preset", "linear")
        if hname == "zero":
            hspec = None
        elif hname not in _H:
            raise ConfigurationError(f"unknown h preset {hname!r}")
        else:
            h, hc = _H[hname](**hspec)
            hl = hc.pop("h_lipschitz")
            consts.update(hc)
            if "lipschitz" in consts and consts["lipschitz"] is not None:
                consts["lipschitz"] = max(consts["lipschitz"], hl)
    g = None
    gspec = spec.get("g")
    if gspec:
        gspec = dict(gspec)
        gname = gspec.pop("preset", "constant")
        if gname == "zero":
            pass
        elif gname not in _G:
            raise ConfigurationError(f"unknown g preset {gname!r}")
        else:
            g, gc = _G[gname](**gspec)
            consts.update(gc)
    allowed = set(DriverSet.__dataclass_fields__) - {"f", "h", "g", "name"}
    consts = {k: v for k, v in consts.items() if k in allowed}
    return DriverSet(f=f, h=h, g=g, name=name, **consts)


# ---------------------------------------------------------------- terminal values and obstacles


def make_terminal(spec):
    """Constant, {"preset": "affine", "a":, "b":} (a + b x), {"preset": "quadratic", ...}."""
    if spec is None:
        return 0.0
    if isinstance(spec, (int, float)):
        return float(spec)
    spec = dict(spec)
    name = spec.pop("preset", "constant")
    if name == "constant":
        return float(spec.get("value", 0.0))
    if name == "affine":
        a, b = float(spec.get("a", 0.0)), float(spec.get("b", 0.0))
        return lambda x: a + b * _first(x)
    if name == "quadratic":
        a, b, c = float(spec.get("a", 0.0)), float(spec.get("b", 0.0)), float(spec.get("c", 0.0))
        return lambda x: a + b * _first(x) + c * _first(x) ** 2
    if name == "put":
        k = float(spec.get("strike", 1.0))
        return lambda x: np.maximum(k - _first(x), 0.0)
    raise ConfigurationError(f"unknown terminal preset {name!r}")


def _first(x):
    x = np.asarray(x, dtype=float)
    return x[..., 0] if x.ndim >= 2 else x


def make_obstacle(spec, T: float):
    if spec is None or spec == "none":
        return None
    spec = dict(spec)
    name = spec.pop("preset")
    if name == "constant":
        s = float(spec["value"])
        return lambda t, x: np.full(np.shape(_first(x)), s) if np.ndim(x) else s
    if name == "decreasing_linear":
        s0 = float(spec["s0"])
        return lambda t, x: np.full(np.shape(_first(x)), s0 * (T - t) / T) if np.ndim(x) else s0 * (T - t) / T
    if name == "affine":
        a, b, c = float(spec.get("a", 0.0)), float(spec.get("b", 0.0)), float(spec.get("c", 0.0))
        return lambda t, x: a + b * _first(x) + c * t
    raise ConfigurationError(f"unknown obstacle preset {name!r}")


# ---------------------------------------------------------------- standard characteristics


def poisson_chars(lam: float = 2.0, T: float = 1.0) -> LevyCharacteristics:
    return LevyCharacteristics(T, 0.0, 0.0, [JumpAtom(1.0, lam)])


def two_atom_chars(T: float = 1.0) -> LevyCharacteristics:
    return LevyCharacteristics(T, 0.0, 0.0, [JumpAtom(1.0, 1.0), JumpAtom(-1.0, 1.0)])


def modulated_chars(T: float = 1.0) -> LevyCharacteristics:
    """Jump diffusion with a common time profile r(t) = 1 + t."""
    return LevyCharacteristics(
        T, 0.1, "0.25*(1+t)", [JumpAtom(0.5, "2*(1+t)"), JumpAtom(-0.3, "1+t")], modulation="proportional"
    )


def characteristics_from_dict(spec: dict) -> LevyCharacteristics:
    atoms = [JumpAtom(float(a["e"]), a.get("lambda", 0.0)) for a in spec.get("atoms", [])]
    return LevyCharacteristics(
        T=float(spec["T"]), drift=spec.get("b", 0.0), diffusion=spec.get("c", 0.0), atoms=atoms,
        modulation=spec.get("modulation", "proportional"),
    )


def sigma_from_spec(spec) -> Optional[object]:
    """sigma presets: constant s, or polynomial s0 + s1 x + s2 x^2 ("s0", "s1", "s2").

    The quadratic term lets sigma vanish at both ends of an interval, which
    keeps jumps of either sign inside the domain.
    """
    if spec is None:
        return lambda x: np.ones_like(np.asarray(x, dtype=float))
    if isinstance(spec, (int, float)):
        s = float(spec)
        return lambda x: s * np.ones_like(np.asarray(x, dtype=float))
    spec = dict(spec)
    unknown = set(spec) - {"s0", "s1", "s2"}
    if unknown:
        raise ConfigurationError(f"unknown sigma keys {sorted(unknown)}")
    s0, s1, s2 = float(spec.get("s0", 0.0)), float(spec.get("s1", 0.0)), float(spec.get("s2", 0.0))

    def sigma(x):
        x = np.asarray(x, dtype=float)
        return s0 + s1 * x + s2 * x * x

    return sigma
