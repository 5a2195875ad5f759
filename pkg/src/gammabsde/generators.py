"""Generators ``g(t, y, z, delta, gamma)`` with values in ``[0, +inf]``.

Values outside a generator's domain are ``numpy.inf``; nothing here uses a
large finite float as a stand-in for infinity.  Inputs broadcast: for the
one-dimensional tree every argument is a scalar or a 1-D array of node values.
For ``dim > 1`` the trailing axes of ``z``/``delta`` are ``(d,)`` and of
``gamma`` are ``(d, d)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

__all__ = [
    "Domain",
    "Generator",
    "CertificateReport",
    "make_quadratic",
    "make_polynomial",
    "make_gamma_band",
    "make_shortsell_box",
    "certify_dgc",
    "certify_convexity",
    "project_domain",
    "fd_gradient",
]


def _sq(x, ndim_tail: int):
    x = np.asarray(x, dtype=float)
    if ndim_tail == 0:
        return x * x
    return np.sum(x * x, axis=tuple(range(-ndim_tail, 0)))


@dataclass(frozen=True)
class Domain:
    """Convex set outside of which a generator is ``+inf``.

    ``z`` and ``delta`` are constrained to boxes, ``gamma`` to a Frobenius
    ball of radius ``gamma_radius``.  ``None`` means unconstrained.
    """

    z_lo: Optional[float] = None
    z_hi: Optional[float] = None
    delta_lo: Optional[float] = None
    delta_hi: Optional[float] = None
    gamma_radius: Optional[float] = None

    def __post_init__(self):
        for lo, hi, name in ((self.z_lo, self.z_hi, "z"), (self.delta_lo, self.delta_hi, "delta")):
            if lo is not None and hi is not None and np.any(np.asarray(lo) > np.asarray(hi)):
                raise ValueError(f"empty {name} box: lo > hi")
        if self.gamma_radius is not None and self.gamma_radius < 0:
            raise ValueError("gamma radius must be nonnegative")

    @property
    def constrains_z(self) -> bool:
        return self.z_lo is not None or self.z_hi is not None

    def intersect(self, other: "Domain") -> "Domain":
        def lo(a, b):
            return b if a is None else a if b is None else np.maximum(a, b)

        def hi(a, b):
            return b if a is None else a if b is None else np.minimum(a, b)

        return Domain(
            lo(self.z_lo, other.z_lo),
            hi(self.z_hi, other.z_hi),
            lo(self.delta_lo, other.delta_lo),
            hi(self.delta_hi, other.delta_hi),
            hi(self.gamma_radius, other.gamma_radius),
        )

    def contains(self, z, delta, gamma, dim: int = 1):
        t1 = 0 if dim == 1 else 1
        t2 = 0 if dim == 1 else 2
        ok = np.ones(np.broadcast_shapes(np.shape(_sq(z, t1)), np.shape(_sq(delta, t1)), np.shape(_sq(gamma, t2))), bool)
        z = np.asarray(z, float)
        delta = np.asarray(delta, float)
        red = (lambda a: a) if t1 == 0 else (lambda a: np.all(a, axis=-1))
        if self.z_lo is not None:
            ok &= red(z >= self.z_lo)
        if self.z_hi is not None:
            ok &= red(z <= self.z_hi)
        if self.delta_lo is not None:
            ok &= red(delta >= self.delta_lo)
        if self.delta_hi is not None:
            ok &= red(delta <= self.delta_hi)
        if self.gamma_radius is not None:
            # compare norms, not squares: tiny gamma would underflow to 0
            g = np.abs(np.asarray(gamma, float))
            if t2:
                g = np.linalg.norm(g.reshape(g.shape[:-2] + (-1,)), ord=np.inf, axis=-1)
                ok &= g <= self.gamma_radius
                ok &= np.sqrt(_sq(gamma, t2)) <= self.gamma_radius
            else:
                ok &= g <= self.gamma_radius
        return ok


@dataclass(frozen=True)
class Generator:
    """A generator plus its declared structural properties.

    Parameters
    ----------
    func : callable
        ``func(t, y, z, delta, gamma)`` on the domain; values outside the
        domain are replaced by ``inf`` in :meth:`eval`.
    grad : callable, optional
        Returns ``(g_z, g_delta, g_gamma)``.  Central differences are used
        when absent.
    lsc, pos, con, dgc : bool
        Declared properties.
    c1, c2 : float
        Constants of ``g >= c1 + c2 * (|delta|^2 + |gamma|^2)``.
    """

    func: Callable = field(repr=False)
    name: str = "custom"
    grad: Optional[Callable] = field(default=None, repr=False)
    lsc: bool = True
    pos: bool = True
    con: bool = True
    dgc: bool = True
    c1: float = 0.0
    c2: float = 1.0
    domain: Optional[Domain] = None
    y_independent: bool = True
    dim: int = 1
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.dgc and not self.c2 > 0:
            raise ValueError(f"(DGC) needs c2 > 0, got {self.c2}")

    def _check_shapes(self, z, delta, gamma):
        if self.dim == 1:
            return
        d = self.dim
        if np.shape(z)[-1:] != (d,) or np.shape(delta)[-1:] != (d,) or np.shape(gamma)[-2:] != (d, d):
            raise ValueError(
                f"dimension mismatch: expected z, delta (...,{d}) and gamma (...,{d},{d}); "
                f"got {np.shape(z)}, {np.shape(delta)}, {np.shape(gamma)}"
            )

    def eval(self, t, y, z, delta, gamma):
        """Extended-real value; ``inf`` exactly outside the domain."""
        self._check_shapes(z, delta, gamma)
        if self.domain is None:
            return np.asarray(self.func(t, y, z, delta, gamma), dtype=float)
        inside = self.domain.contains(z, delta, gamma, self.dim)
        with np.errstate(invalid="ignore", over="ignore"):
            val = np.asarray(self.func(t, y, z, delta, gamma), dtype=float)
        return np.where(inside, val, np.inf)

    __call__ = eval

    def gradient(self, t, y, z, delta, gamma):
        """``(g_z, g_delta, g_gamma)`` at points of the finite region."""
        if self.grad is not None:
            gz, gd, gg = self.grad(t, y, z, delta, gamma)
            shp = np.broadcast(np.asarray(z), np.asarray(delta), np.asarray(gamma)).shape
            return (np.broadcast_to(gz, shp).astype(float), np.broadcast_to(gd, shp).astype(float),
                    np.broadcast_to(gg, shp).astype(float))
        return fd_gradient(self.func, t, y, z, delta, gamma)

    def project(self, z, delta, gamma):
        return project_domain(self, z, delta, gamma)

    def with_domain(self, domain: Domain, **changes) -> "Generator":
        dom = domain if self.domain is None else self.domain.intersect(domain)
        return replace(self, domain=dom, **changes)


def fd_gradient(func, t, y, z, delta, gamma, step: float = 1e-6):
    """Central differences of a scalar-per-node function (``dim == 1``)."""
    z, delta, gamma = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (z, delta, gamma)))
    out = []
    args = [z, delta, gamma]
    for i in range(3):
        h = step * np.maximum(1.0, np.abs(args[i]))
        up = list(args)
        dn = list(args)
        up[i] = args[i] + h
        dn[i] = args[i] - h
        out.append((np.asarray(func(t, y, *up)) - np.asarray(func(t, y, *dn))) / (2 * h))
    return tuple(out)


def make_quadratic(dim: int = 1) -> Generator:
    """``g = |delta|^2 + |gamma|^2``; independent of ``t``, ``y`` and ``z``."""
    t1, t2 = (0, 0) if dim == 1 else (1, 2)

    def func(t, y, z, delta, gamma):
        return _sq(delta, t1) + _sq(gamma, t2)

    def grad(t, y, z, delta, gamma):
        return np.zeros_like(np.asarray(z, float)), 2.0 * np.asarray(delta, float), 2.0 * np.asarray(gamma, float)

    return Generator(func, name="quadratic", grad=grad if dim == 1 else None, c1=0.0, c2=1.0, dim=dim)


def make_polynomial(c0: float = 0.0, a_delta: float = 1.0, a_gamma: float = 1.0, a_z: float = 0.0,
                    b_delta: float = 0.0, b_gamma: float = 0.0) -> Generator:
    """Even polynomial ``c0 + a_d d^2 + a_g g^2 + a_z z^2 + b_d d^4 + b_g g^4`` (``d = 1``).

    All coefficients must be nonnegative, which makes the generator positive
    and convex; (DGC) holds with ``c1 = c0`` and ``c2 = min(a_d, a_g)``.
    """
    coeffs = dict(c0=c0, a_delta=a_delta, a_gamma=a_gamma, a_z=a_z, b_delta=b_delta, b_gamma=b_gamma)
    bad = [k for k, v in coeffs.items() if not (np.isfinite(v) and v >= 0)]
    if bad:
        raise ValueError(f"polynomial coefficients must be finite and >= 0: {bad}")

    def func(t, y, z, d, g):
        z, d, g = (np.asarray(a, float) for a in (z, d, g))
        return c0 + a_delta * d**2 + a_gamma * g**2 + a_z * z**2 + b_delta * d**4 + b_gamma * g**4

    def grad(t, y, z, d, g):
        z, d, g = (np.asarray(a, float) for a in (z, d, g))
        return 2 * a_z * z, 2 * a_delta * d + 4 * b_delta * d**3, 2 * a_gamma * g + 4 * b_gamma * g**3

    c2 = min(a_delta, a_gamma)
    return Generator(func, name="polynomial", grad=grad, dgc=c2 > 0, c1=c0, c2=c2 if c2 > 0 else 1.0,
                     params=coeffs)


def make_gamma_band(inner: Generator, M: float) -> Generator:
    """Equal to ``inner`` while ``|gamma| <= M`` and ``+inf`` beyond the band.

    The (DGC) constants become ``(c1 - c2*M**2, c2)``: inside the band
    ``|gamma|^2 <= M^2`` so a lower bound in ``delta`` alone transfers.
    ``M = 0`` is accepted and pins ``gamma`` to zero.
    """
    if not np.isfinite(M) or M < 0:
        raise ValueError(f"band half-width M must be >= 0, got {M}")
    return inner.with_domain(
        Domain(gamma_radius=float(M)),
        name=f"gamma_band({inner.name}, M={M:g})",
        c1=inner.c1 - inner.c2 * M**2,
        params={**inner.params, "M": float(M)},
    )


def make_shortsell_box(inner: Generator, lo, hi) -> Generator:
    """Equal to ``inner`` while ``lo <= z <= hi`` componentwise, ``+inf`` otherwise."""
    lo = -np.inf if lo is None else lo
    hi = np.inf if hi is None else hi
    if np.any(np.asarray(lo) > np.asarray(hi)):
        raise ValueError(f"empty shortselling box: lo={lo} > hi={hi}")
    dom = Domain(z_lo=None if np.all(np.isneginf(lo)) else lo, z_hi=None if np.all(np.isposinf(hi)) else hi)
    return inner.with_domain(dom, name=f"shortsell_box({inner.name})", params={**inner.params, "lo": lo, "hi": hi})


def project_domain(gen: Generator, z, delta, gamma):
    """Euclidean projection of ``(z, delta, gamma)`` onto the generator's domain.

    Boxes are clamped per coordinate and the gamma ball is projected
    radially; the identity when there is no domain.
    """
    z = np.asarray(z, dtype=float)
    delta = np.asarray(delta, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    dom = gen.domain
    if dom is None:
        return z, delta, gamma
    if not isinstance(dom, Domain):
        raise TypeError(f"unsupported domain descriptor {type(dom).__name__}")
    if dom.constrains_z:
        z = np.clip(z, dom.z_lo, dom.z_hi)
    if dom.delta_lo is not None or dom.delta_hi is not None:
        delta = np.clip(delta, dom.delta_lo, dom.delta_hi)
    if dom.gamma_radius is not None:
        M = dom.gamma_radius
        if gen.dim == 1:
            gamma = np.clip(gamma, -M, M)
        else:
            nrm = np.sqrt(_sq(gamma, 2))
            scale = np.where(nrm > M, M / np.where(nrm > 0, nrm, 1.0), 1.0)
            gamma = gamma * scale[..., None, None]
    return z, delta, gamma


_SAMPLED = "sampled check only; (LSC) is declared, not verified"


@dataclass
class CertificateReport:
    ok: bool
    worst_margin: float
    worst_point: tuple
    n_checked: int
    note: str = ""

    def __bool__(self):
        return self.ok


def _sample(gen: Generator, rng, n: int, heavy: bool):
    d = gen.dim
    draw = (lambda *s: rng.standard_t(2, size=s)) if heavy else (lambda *s: 3.0 * rng.standard_normal(s))
    t = rng.uniform(0, 1, n)
    y = draw(n)
    if d == 1:
        return t, y, draw(n), draw(n), draw(n)
    return t, y, draw(n, d), draw(n, d), draw(n, d, d)


def certify_dgc(gen: Generator, n_samples: int = 10_000, seed: int = 0) -> CertificateReport:
    """Sample-based check of ``g >= c1 + c2*(|delta|^2 + |gamma|^2)``.

    Draws heavy-tailed points (Student t, 2 dof) plus the origin, and
    points inside the generator's domain so the finite region is probed.
    """
    if not gen.dgc:
        return CertificateReport(False, float("nan"), (), 0, "generator does not declare (DGC)")
    rng = np.random.default_rng(seed)
    t, y, z, d, g = _sample(gen, rng, n_samples, heavy=True)
    pz, pd, pg = project_domain(gen, z, d, g)
    t = np.concatenate([[0.0], t, t])
    y = np.concatenate([[0.0], y, y])
    zero = np.zeros((1,) + np.shape(z)[1:])
    zero_g = np.zeros((1,) + np.shape(g)[1:])
    z = np.concatenate([zero, z, pz])
    d = np.concatenate([zero, d, pd])
    g = np.concatenate([zero_g, g, pg])
    t1, t2 = (0, 0) if gen.dim == 1 else (1, 2)
    val = gen.eval(t, y, z, d, g)
    finite = np.isfinite(val)
    if not np.any(finite):
        return CertificateReport(True, float("inf"), (), 0, "no finite samples")
    margin = val - (gen.c1 + gen.c2 * (_sq(d, t1) + _sq(g, t2)))
    margin = np.where(finite, margin, np.inf)
    i = int(np.argmin(margin))
    return CertificateReport(bool(margin[i] >= -1e-12 * max(1.0, abs(val[i]))), float(margin[i]),
                             (float(t[i]), float(y[i]), z[i], d[i], g[i]), int(finite.sum()), _SAMPLED)


def certify_convexity(gen: Generator, n_segments: int = 10_000, seed: int = 0, atol: float = 1e-10) -> CertificateReport:
    """Midpoint convexity on random segments in ``(y, z, delta, gamma)``.

    Infinite endpoint values make the inequality hold trivially; a finite
    pair of endpoints with an infinite midpoint is a violation.
    """
    rng = np.random.default_rng(seed)
    a = _sample(gen, rng, n_segments, heavy=False)
    b = _sample(gen, rng, n_segments, heavy=False)
    # half the segments use projected endpoints so finite-region convexity is exercised
    h = n_segments // 2
    pa = project_domain(gen, *a[2:])
    pb = project_domain(gen, *b[2:])
    a = a[:2] + tuple(np.concatenate([x[:h], px[h:]]) for x, px in zip(a[2:], pa))
    b = b[:2] + tuple(np.concatenate([x[:h], px[h:]]) for x, px in zip(b[2:], pb))
    t = a[0]  # convexity is in the state variables at fixed time
    mid = [0.5 * (u + v) for u, v in zip(a[1:], b[1:])]
    ga = gen.eval(t, *a[1:])
    gb = gen.eval(t, *b[1:])
    gm = gen.eval(t, *mid)
    with np.errstate(invalid="ignore"):
        rhs = 0.5 * (ga + gb) + atol * (1 + np.abs(np.where(np.isfinite(ga + gb), ga + gb, 0)))
        margin = np.where(np.isinf(rhs), np.inf, rhs - gm)
    i = int(np.argmin(margin))
    return CertificateReport(bool(margin[i] >= 0), float(margin[i]),
                             tuple(m[i] for m in mid), n_segments, _SAMPLED)
