"""Non-homogeneous Lévy processes with finitely many jump sizes.

The jump measure is F_t = sum_j intensity_j(t) delta_{e_j}. With finitely many
bounded atoms every moment exists, so the exponential-moment condition is
always satisfied; we report its bound rather than taking it as input.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import integrate

from .errors import ConfigurationError
from .timefn import Constant, TimeFunction, as_timefn, is_constant

PROPORTIONAL = "proportional"
GENERAL = "general"

# Sampling density used when validating time functions.
_N_SAMPLES = 201
_RATIO_TOL = 1e-10


@dataclass(frozen=True)
class JumpAtom:
    size: float
    intensity: TimeFunction = field(default_factory=lambda: Constant(0.0))

    def __post_init__(self):
        size = float(self.size)
        if size == 0.0 or not np.isfinite(size):
            raise ConfigurationError(f"jump atom size must be finite and nonzero, got {self.size!r}")
        object.__setattr__(self, "size", size)
        object.__setattr__(self, "intensity", as_timefn(self.intensity))


@dataclass(frozen=True)
class LevyCharacteristics:
    """Drift b(t), diffusion c(t) and jump atoms over the horizon [0, T]."""

    T: float
    drift: TimeFunction = 0.0
    diffusion: TimeFunction = 0.0
    atoms: tuple = ()
    modulation: str = PROPORTIONAL

    def __post_init__(self):
        T = float(self.T)
        if not (T > 0 and np.isfinite(T)):
            raise ConfigurationError(f"horizon T must be positive, got {self.T!r}")
        object.__setattr__(self, "T", T)
        object.__setattr__(self, "drift", as_timefn(self.drift))
        object.__setattr__(self, "diffusion", as_timefn(self.diffusion))
        atoms = tuple(a if isinstance(a, JumpAtom) else JumpAtom(*a) for a in self.atoms)
        object.__setattr__(self, "atoms", atoms)
        if self.modulation not in (PROPORTIONAL, GENERAL):
            raise ConfigurationError(f"unknown modulation mode {self.modulation!r}")
        ts = self.sample_times()
        if np.any(np.asarray(self.diffusion(ts)) < 0):
            raise ConfigurationError("diffusion c(t) must be nonnegative")
        for a in atoms:
            lam = np.asarray(a.intensity(ts), dtype=float)
            if not np.all(np.isfinite(lam)):
                raise ConfigurationError(f"intensity of atom e={a.size} is not finite")
            if np.any(lam < 0):
                raise ConfigurationError(f"negative intensity for atom e={a.size}")

    # convenience views
    @property
    def sizes(self) -> np.ndarray:
        return np.array([a.size for a in self.atoms], dtype=float)

    @property
    def n_atoms(self) -> int:
        return len(self.atoms)

    @property
    def proportional(self) -> bool:
        return self.modulation == PROPORTIONAL

    def sample_times(self, n: int = _N_SAMPLES) -> np.ndarray:
        return np.linspace(0.0, self.T, n)

    def intensities(self, t) -> np.ndarray:
        """Intensity values, shape (J,) for scalar t or (len(t), J)."""
        if not self.atoms:
            return np.zeros((0,) if np.ndim(t) == 0 else (np.size(t), 0))
        vals = [np.asarray(a.intensity(t), dtype=float) for a in self.atoms]
        return np.stack(vals, axis=-1)

    def intensity_integrals(self, s, t) -> np.ndarray:
        """Integral of each intensity over [s, t]."""
        return np.array([_integrate(a.intensity, s, t) for a in self.atoms], dtype=float)

    def with_atoms(self, atoms, drift=None) -> "LevyCharacteristics":
        return LevyCharacteristics(
            T=self.T,
            drift=self.drift if drift is None else drift,
            diffusion=self.diffusion,
            atoms=tuple(atoms),
            modulation=self.modulation,
        )

    def modulation_profile(self, t):
        """r(t) with c = c0 r and intensity_j = lambda_j r; only meaningful in proportional mode."""
        t_ref = _reference_time(self)
        return _weight_total(self, t) / _weight_total(self, t_ref)


def _integrate(fn, s: float, t: float) -> float:
    if t <= s:
        return 0.0
    if is_constant(fn):
        return float(fn(s)) * (t - s)
    val, _ = integrate.quad(lambda u: float(fn(u)), s, t, epsabs=1e-12, epsrel=1e-12, limit=200)
    return float(val)


def _weight_total(chars: LevyCharacteristics, t):
    """w(t) = c(t) + sum_j e_j^2 intensity_j(t): total mass of the instantaneous bracket measure."""
    w = np.asarray(chars.diffusion(t), dtype=float)
    for a in chars.atoms:
        w = w + a.size**2 * np.asarray(a.intensity(t), dtype=float)
    return w if np.ndim(t) else float(w)


def _reference_time(chars: LevyCharacteristics) -> float:
    ts = chars.sample_times()
    w = _weight_total(chars, ts)
    pos = np.flatnonzero(w > 0)
    if pos.size == 0:
        return 0.0
    return float(ts[pos[0]])


@dataclass
class ValidationReport:
    valid: bool
    nl1_integral: float
    nl2_bound: float
    nl2_range: tuple
    proportional: bool
    modulation_samples: Optional[np.ndarray] = None
    messages: list = field(default_factory=list)

    def to_dict(self) -> dict:
        out = {
            "valid": self.valid,
            "nl1_integral": self.nl1_integral,
            "nl2_bound": self.nl2_bound,
            "nl2_range": list(self.nl2_range),
            "proportional": self.proportional,
            "messages": list(self.messages),
        }
        if self.modulation_samples is not None:
            out["modulation_samples"] = [float(v) for v in self.modulation_samples]
        return out


def _proportional_ratios(chars: LevyCharacteristics, ts: np.ndarray) -> Optional[np.ndarray]:
    """Return r(ts) if every component is a constant multiple of a common profile, else None."""
    comps = [np.asarray(chars.diffusion(ts), dtype=float)]
    comps += [np.asarray(a.intensity(ts), dtype=float) for a in chars.atoms]
    w = _weight_total(chars, ts)
    ref = np.flatnonzero(w > 0)
    if ref.size == 0:
        return np.ones_like(ts)
    i0 = ref[0]
    r = w / w[i0]
    for comp in comps:
        base = comp[i0]
        pred = base * r
        scale = max(1.0, float(np.max(np.abs(comp))))
        if np.max(np.abs(comp - pred)) > _RATIO_TOL * scale:
            return None
    return r


def validate_characteristics(chars: LevyCharacteristics, eps: float = 0.1, frak_c: float = 1.0) -> ValidationReport:
    """Check integrability, report the exponential-moment bound and the modulation profile.

    Raises ConfigurationError if the proportional flag is set but the
    components do not share a common time profile.
    """
    T = chars.T
    nl1 = _integrate(lambda s: abs(float(chars.drift(s))), 0.0, T) + _integrate(chars.diffusion, 0.0, T)
    for a in chars.atoms:
        nl1 += min(1.0, a.size**2) * _integrate(a.intensity, 0.0, T)
    msgs = []
    u_max = (1.0 + eps) * frak_c
    bound = 0.0
    for u in (-u_max, u_max):
        total = 0.0
        for a in chars.atoms:
            if abs(a.size) > 1:
                total += np.exp(u * a.size) * _integrate(a.intensity, 0.0, T)
        bound = max(bound, total)
    samples = None
    ts = chars.sample_times()
    ratios = _proportional_ratios(chars, ts)
    if chars.proportional:
        if ratios is None:
            raise ConfigurationError(
                "proportional modulation requested but intensity/diffusion ratios vary in time"
            )
        samples = ratios
    elif ratios is not None:
        msgs.append("general mode requested although the characteristics are proportional")
    if np.any(np.asarray(chars.diffusion(ts)) > 0) and not chars.atoms:
        msgs.append("pure diffusion model")
    return ValidationReport(
        valid=bool(np.isfinite(nl1) and np.isfinite(bound)),
        nl1_integral=float(nl1),
        nl2_bound=float(bound),
        nl2_range=(-u_max, u_max),
        proportional=ratios is not None,
        modulation_samples=samples,
        messages=msgs,
    )


def _check_time(chars: LevyCharacteristics, t: float) -> float:
    t = float(t)
    if t < 0.0 or t > chars.T:
        raise ConfigurationError(f"time {t} outside [0, {chars.T}]")
    return t


def mean_drift(chars: LevyCharacteristics, t: float) -> float:
    """b(t) plus the contribution of the big jumps (|e| > 1)."""
    t = _check_time(chars, t)
    val = float(chars.drift(t))
    for a in chars.atoms:
        if abs(a.size) > 1:
            val += a.size * float(a.intensity(t))
    return val


def power_moment(chars: LevyCharacteristics, i: int, t: float) -> float:
    """m^(i)(t): sum_j e_j^i int_0^t intensity_j for i >= 2, the integrated mean drift for i = 1."""
    if int(i) != i or i < 1:
        raise ConfigurationError(f"moment order must be a positive integer, got {i!r}")
    t = _check_time(chars, t)
    if i == 1:
        return _integrate(lambda s: mean_drift(chars, s), 0.0, t)
    return float(sum(a.size**i * _integrate(a.intensity, 0.0, t) for a in chars.atoms))


def merge_atoms(atoms) -> tuple:
    """Sort atoms by size and merge coinciding sizes by summing intensities."""
    from .timefn import Sum

    by_size: dict = {}
    for a in atoms:
        by_size.setdefault(a.size, []).append(a.intensity)
    merged = []
    for size in sorted(by_size):
        fns = by_size[size]
        if len(fns) > 1:
            warnings.warn(f"atoms with coinciding size {size} merged; basis dimension reduced", stacklevel=3)
            if all(isinstance(f, Constant) for f in fns):
                fn = Constant(sum(f.value for f in fns))
            else:
                fn = Sum(*fns)
        else:
            fn = fns[0]
        merged.append(JumpAtom(size, fn))
    return tuple(merged)
