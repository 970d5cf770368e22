"""Shear-dependent extra-stress law S(D) = nu(|D|^2) D.

The viscosity function nu is either constant (Newtonian) or of regularized
Carreau type,

    nu(s) = nu_inf + (nu0 - nu_inf) * (1 + lam*s)**((r - 2)/2),

which for r in [2, 4) and nu_inf > 0 is positive, C^2, and has the
polynomial growth/ellipticity structure required by the solvers.  A pure
power law (nu_inf = 0 without the +1 shift) would lose the lower
ellipticity bound at D = 0 for r > 2, so only the regularized form is
shipped.

All tensor arguments are symmetric 2x2 arrays; batched input with shape
(..., 2, 2) is supported throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_KINDS = ("newtonian", "carreau")

# Orthonormal basis of symmetric 2x2 tensors (Frobenius inner product).
_SYM_BASIS = np.array(
    [
        [[1.0, 0.0], [0.0, 0.0]],
        [[0.0, 0.0], [0.0, 1.0]],
        [[0.0, 1.0 / np.sqrt(2.0)], [1.0 / np.sqrt(2.0), 0.0]],
    ]
)


@dataclass(frozen=True)
class ViscosityModel:
    """Constitutive parameters of the stress law.

    kind      'newtonian' or 'carreau'
    nu0       zero-shear viscosity scale (> 0)
    nu_inf    infinite-shear viscosity (>= 0; > 0 recommended for r > 2)
    lam       shear-rate scale of the Carreau transition (> 0)
    r         growth exponent, restricted to [2, 4)
    """

    kind: str = "newtonian"
    nu0: float = 1.0
    nu_inf: float = 0.0
    lam: float = 1.0
    r: float = 2.0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown viscosity kind {self.kind!r}")
        if not (2.0 <= self.r < 4.0):
            raise ValueError(f"growth exponent r={self.r} outside [2, 4)")
        if self.nu0 <= 0.0 or self.nu_inf < 0.0 or self.lam <= 0.0:
            raise ValueError("need nu0 > 0, nu_inf >= 0, lam > 0")
        if self.kind == "newtonian" and self.r != 2.0:
            raise ValueError("newtonian law requires r = 2")

    # -- scalar viscosity function and derivatives in s = |D|^2 ------------

    def nu(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == "newtonian":
            return np.full_like(s, self.nu0)
        p = 0.5 * (self.r - 2.0)
        return self.nu_inf + (self.nu0 - self.nu_inf) * (1.0 + self.lam * s) ** p

    def nu_prime(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == "newtonian":
            return np.zeros_like(s)
        p = 0.5 * (self.r - 2.0)
        return (self.nu0 - self.nu_inf) * p * self.lam * (1.0 + self.lam * s) ** (p - 1.0)

    def nu_second(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == "newtonian":
            return np.zeros_like(s)
        p = 0.5 * (self.r - 2.0)
        c = (self.nu0 - self.nu_inf) * p * (p - 1.0) * self.lam**2
        return c * (1.0 + self.lam * s) ** (p - 2.0)

    def potential(self, s):
        """Scalar potential Phi with Phi(0) = 0 and 2 Phi'(s) = nu(s)."""
        s = np.asarray(s, dtype=float)
        if self.kind == "newtonian":
            return 0.5 * self.nu0 * s
        p = 0.5 * (self.r - 2.0)
        shifted = ((1.0 + self.lam * s) ** (p + 1.0) - 1.0) / (self.lam * (p + 1.0))
        return 0.5 * (self.nu_inf * s + (self.nu0 - self.nu_inf) * shifted)


def _frob2(D):
    return np.einsum("...ij,...ij->...", D, D)


def _dot(D, E):
    return np.einsum("...ij,...ij->...", D, E)


def stress(model: ViscosityModel, D):
    """Extra stress S(D) = nu(|D|^2) D."""
    D = np.asarray(D, dtype=float)
    return model.nu(_frob2(D))[..., None, None] * D


def stress_tangent(model: ViscosityModel, D, E):
    """Directional derivative S'(D)E = nu E + 2 nu' (D:E) D at s = |D|^2."""
    D = np.asarray(D, dtype=float)
    E = np.asarray(E, dtype=float)
    s = _frob2(D)
    return model.nu(s)[..., None, None] * E + (
        2.0 * model.nu_prime(s) * _dot(D, E)
    )[..., None, None] * D


def stress_tangent_transpose(model: ViscosityModel, D, E):
    """Adjoint of E -> S'(D)E in the Frobenius inner product.

    For S(D) = nu(|D|^2) D the tangent is self-adjoint, so this equals
    ``stress_tangent``; the adjoint-system assembly calls this name so the
    transposition stays explicit in the code.
    """
    return stress_tangent(model, D, E)


def stress_second(model: ViscosityModel, D, E, F):
    """Second derivative S''(D)[E, F], symmetric in (E, F)."""
    D = np.asarray(D, dtype=float)
    E = np.asarray(E, dtype=float)
    F = np.asarray(F, dtype=float)
    s = _frob2(D)
    nup = model.nu_prime(s)
    nupp = model.nu_second(s)
    de = _dot(D, E)
    df = _dot(D, F)
    ef = _dot(E, F)
    return (
        (2.0 * nup * df)[..., None, None] * E
        + (2.0 * nup * de)[..., None, None] * F
        + (2.0 * nup * ef + 4.0 * nupp * de * df)[..., None, None] * D
    )


def stress_second_norm(model: ViscosityModel, D):
    """Frobenius norm of the full third-order tensor S''(D)."""
    D = np.asarray(D, dtype=float)
    total = 0.0
    for Eb in _SYM_BASIS:
        for Fb in _SYM_BASIS:
            T = stress_second(model, D, Eb, Fb)
            total = total + _frob2(T)
    return np.sqrt(total)


@dataclass
class StressBoundsReport:
    """Empirical structure constants of the stress law over a sample cloud.

    c1, c2    ellipticity / growth bounds of the tangent quadratic form
    c3        bound constant for |S''| (restricted to |A| >= s2_min_norm)
    c4        growth constant of |S(A)| against 1 + |A|^(r-1)
    c5        strong-monotonicity constant against |A - B|^r
    """

    kind: str
    r: float
    n_samples: int
    radius: float
    c1: float
    c2: float
    c3: float
    c4: float
    c5: float
    s2_min_norm: float
    n_violations: int = 0
    worst_pair: tuple | None = None
    notes: list = field(default_factory=list)

    def admissible(self) -> bool:
        return (
            self.n_violations == 0
            and min(self.c1, self.c2, self.c3, self.c4, self.c5) > 0.0
        )

    def summary(self) -> str:
        lines = [
            f"stress law {self.kind} (r={self.r}), {self.n_samples} samples, radius {self.radius}",
            f"  C1={self.c1:.6g}  C2={self.c2:.6g}  C3={self.c3:.6g}"
            f"  C4={self.c4:.6g}  C5={self.c5:.6g}",
            f"  violations: {self.n_violations}",
        ]
        lines += [f"  note: {n}" for n in self.notes]
        return "\n".join(lines)


def _random_symmetric(rng, n, radius):
    A = rng.uniform(-radius, radius, size=(n, 2, 2))
    return 0.5 * (A + np.swapaxes(A, -1, -2))


def certify_assumptions(
    model: ViscosityModel,
    n_samples: int = 10_000,
    radius: float = 10.0,
    seed: int = 0,
    s2_min_norm: float = 1e-3,
) -> StressBoundsReport:
    """Estimate the structure constants of the law by random sampling.

    Samples symmetric pairs (A, B) with entries uniform in [-radius, radius]
    plus deterministic corner cases, and computes the extremal ratios that
    define the ellipticity, growth and monotonicity constants.  A
    non-positive tangent form or monotonicity numerator is recorded as a
    violation together with the witnessing pair (the report never raises).

    The |S''| bound uses exponent r - 3, which is singular at A = 0 for
    r < 3; it is certified only for samples with |A| >= ``s2_min_norm``.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    if radius <= 0.0:
        raise ValueError("radius must be > 0")
    rng = np.random.default_rng(seed)

    corners = np.array([np.zeros((2, 2)), np.eye(2), np.diag([1.0, -1.0])])
    A = np.concatenate([corners, _random_symmetric(rng, n_samples, radius)])
    B = np.concatenate([corners[::-1], _random_symmetric(rng, n_samples, radius)])
    # A few samples clustered near the origin probe the s -> 0 limit.
    n_small = max(8, n_samples // 100)
    A = np.concatenate([A, _random_symmetric(rng, n_small, 1e-6)])
    B = np.concatenate([B, _random_symmetric(rng, n_small, radius)])

    normA = np.sqrt(_frob2(A))
    normB = np.sqrt(_frob2(B))
    r = model.r

    # C1, C2: S'(A)::(B x B) against (1 + |A|^(r-2)) |B|^2.
    quad = _dot(stress_tangent(model, A, B), B)
    mask = normB > 0.0
    ratio12 = quad[mask] / ((1.0 + normA[mask] ** (r - 2.0)) * normB[mask] ** 2)
    c1 = float(ratio12.min())
    c2 = float(ratio12.max())

    n_violations = 0
    worst_pair = None
    if quad[mask].min() <= 0.0:
        n_violations += int(np.count_nonzero(quad[mask] <= 0.0))
        k = int(np.argmin(quad[mask]))
        worst_pair = (A[mask][k].copy(), B[mask][k].copy())

    # C3 on the restricted sample set.
    mask3 = normA >= s2_min_norm
    ratio3 = stress_second_norm(model, A[mask3]) / (1.0 + normA[mask3] ** (r - 3.0))
    c3 = float(ratio3.max()) if ratio3.size else 0.0
    if model.kind == "newtonian":
        c3 = max(c3, 1e-30)  # |S''| = 0; any positive constant bounds it

    # C4: growth of |S(A)|.
    c4 = float((np.sqrt(_frob2(stress(model, A))) / (1.0 + normA ** (r - 1.0))).max())

    # C5: strong monotonicity over the sampled pairs.
    diff = A - B
    dn = np.sqrt(_frob2(diff))
    maskm = dn > 0.0
    mono = _dot(stress(model, A) - stress(model, B), diff)
    if mono[maskm].min() < 0.0:
        n_violations += int(np.count_nonzero(mono[maskm] < 0.0))
        k = int(np.argmin(mono[maskm]))
        worst_pair = (A[maskm][k].copy(), B[maskm][k].copy())
    c5 = float((mono[maskm] / dn[maskm] ** r).min())

    report = StressBoundsReport(
        kind=model.kind,
        r=r,
        n_samples=int(A.shape[0]),
        radius=radius,
        c1=c1,
        c2=c2,
        c3=c3,
        c4=c4,
        c5=c5,
        s2_min_norm=s2_min_norm,
        n_violations=n_violations,
        worst_pair=worst_pair,
    )
    report.notes.append(
        f"|S''| bound certified only for |A| >= {s2_min_norm:g} "
        "(exponent r-3 is singular at the origin for r < 3)"
    )
    if report.c1 <= 0.0 or report.c5 <= 0.0:
        report.notes.append("ellipticity/monotonicity estimate non-positive")
    return report
