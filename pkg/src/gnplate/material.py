"""Material parameters for thermoelastic diffusion bending plates.

The plate carries mechanical fields (midsurface rotations and transverse
deflection), a thermal displacement pair and a diffusion displacement pair.
Two model variants are supported: the conservative one (``TYPE_II``) where
all rate coefficients vanish exactly, and the dissipative one (``TYPE_III``)
where the rate coefficient block must be positive definite.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, fields

import numpy as np


class NonFinite(ValueError):
    """A material parameter is NaN or infinite."""


class NotCoercive(ValueError):
    """The internal energy density admits no positive coercivity constant."""


class TypeMismatch(ValueError):
    """An operation was requested for the wrong model variant."""


class ModelType(enum.Enum):
    TYPE_II = "TypeII"
    TYPE_III = "TypeIII"

    @classmethod
    def from_string(cls, text: str) -> "ModelType":
        for member in cls:
            if member.value == text:
                return member
        raise ValueError(f"unknown model type {text!r}; expected 'TypeII' or 'TypeIII'")


@dataclass(frozen=True)
class MaterialParams:
    """Coefficient set of the plate equations.

    Attributes:
        lam: first elastic modulus (may be negative as long as lam + mu > 0).
        mu: shear modulus.
        d1: thermal dilatation coupling.
        d2: diffusion dilatation coupling.
        c: thermal capacity.
        kappa: thermodiffusion capacity coupling.
        r: diffusive capacity.
        k1, h1, hbar1: displacement conductivities (thermal, diffusive, cross).
        k2, h2, hbar2: rate conductivities; identically zero for TYPE_II.
        rho: mass density.
        T0: reference temperature; carried for reporting, never entering the
            evolution operator or the diagnostic functionals.
        half_thickness: half of the plate thickness (h > 0).
        model_type: TYPE_II (conservative) or TYPE_III (dissipative).
    """

    lam: float
    mu: float
    d1: float
    d2: float
    c: float
    kappa: float
    r: float
    k1: float
    h1: float
    hbar1: float
    k2: float
    h2: float
    hbar2: float
    rho: float
    T0: float
    half_thickness: float
    model_type: ModelType

    @property
    def inertia(self) -> float:
        """Cross-section moment factor I = (2/3) h^3."""
        return (2.0 / 3.0) * self.half_thickness**3

    @property
    def delta(self) -> float:
        """Determinant c*r - kappa^2 of the capacity block."""
        return self.c * self.r - self.kappa**2

    def numeric_values(self) -> dict[str, float]:
        out = {}
        for f in fields(self):
            if f.name == "model_type":
                continue
            out[f.name] = float(getattr(self, f.name))
        return out


@dataclass(frozen=True)
class ConditionCheck:
    name: str
    margin: float
    passed: bool


@dataclass
class ValidationReport:
    checks: list[ConditionCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def margin(self, name: str) -> float:
        for c in self.checks:
            if c.name == name:
                return c.margin
        raise KeyError(name)

    def failures(self) -> list[ConditionCheck]:
        return [c for c in self.checks if not c.passed]


def validate(params: MaterialParams) -> ValidationReport:
    """Check admissibility of a parameter set.

    Positivity margins are reported verbatim so callers can log them.  The
    conservative variant additionally requires the rate coefficients to be
    exactly zero, not merely small.

    Raises:
        NonFinite: if any numeric parameter is NaN or infinite.
    """
    for name, value in params.numeric_values().items():
        if not math.isfinite(value):
            raise NonFinite(f"material parameter {name} is not finite: {value!r}")

    report = ValidationReport()

    def check(name: str, margin: float, passed: bool | None = None) -> None:
        if passed is None:
            passed = margin > 0.0
        report.checks.append(ConditionCheck(name, margin, passed))

    check("rho_positive", params.rho)
    check("half_thickness_positive", params.half_thickness)
    check("mu_positive", params.mu)
    check("lambda_plus_mu_positive", params.lam + params.mu)
    check("c_positive", params.c)
    check("delta_positive", params.delta)
    check("k1_positive", params.k1)
    check("conduction_pd", params.k1 * params.h1 - params.hbar1**2)

    if params.model_type is ModelType.TYPE_III:
        check("k2_positive", params.k2)
        check("h2_positive", params.h2)
        check("rate_pd", params.k2 * params.h2 - params.hbar2**2)
    else:
        # Conservative variant: the rate block must vanish identically.
        leak = abs(params.k2) + abs(params.h2) + abs(params.hbar2)
        check("type2_rates_zero", -leak, passed=(leak == 0.0))

    return report


def require_valid(params: MaterialParams) -> None:
    report = validate(params)
    if not report.passed:
        names = ", ".join(c.name for c in report.failures())
        raise ValueError(f"material parameters fail validation: {names}")


# Coordinates of the pointwise energy density.  Shear strain enters through
# eps12s = sqrt(2)*eps12 so that eps_ab*eps_ab is a plain sum of squares.
COERCIVITY_VARS = (
    "eps11", "eps22", "eps12s",
    "gamma1", "gamma2",
    "tau_x1", "tau_x2", "wp_x1", "wp_x2",
    "tau", "wp",
)


def internal_energy_density_matrix(params: MaterialParams) -> np.ndarray:
    """Symmetric matrix of twice the potential density in COERCIVITY_VARS.

    x^T M x reproduces I*(lam*tr(eps)^2 + 2*mu*eps:eps) + 2*h*mu*|gamma|^2
    plus the conduction terms in the gradients and values of (tau, wp).
    """
    I = params.inertia
    h = params.half_thickness
    lam, mu = params.lam, params.mu

    n = len(COERCIVITY_VARS)
    M = np.zeros((n, n))
    M[0:2, 0:2] = I * np.array([[lam + 2 * mu, lam], [lam, lam + 2 * mu]])
    M[2, 2] = I * 2 * mu
    M[3, 3] = M[4, 4] = 2 * h * mu
    # gradient coordinates are (tau_x1, tau_x2, wp_x1, wp_x2); directions
    # do not mix, so the conduction block repeats once per direction
    for d in range(2):
        it, iw = 5 + d, 7 + d
        M[it, it] = I * params.k1
        M[iw, iw] = I * params.h1
        M[it, iw] = M[iw, it] = I * params.hbar1
    M[9, 9] = 2 * h * params.k1
    M[10, 10] = 2 * h * params.h1
    M[9, 10] = M[10, 9] = 2 * h * params.hbar1
    return M


def internal_energy_coercivity(params: MaterialParams) -> float:
    """Largest c0 with potential density >= c0 * (sum of squared variables).

    Computed as the smallest eigenvalue of the density matrix, since the
    comparison form is the identity in the scaled coordinates.

    Raises:
        NotCoercive: if the smallest eigenvalue is not positive.
    """
    require_valid(params)
    M = internal_energy_density_matrix(params)
    c0 = float(np.linalg.eigvalsh(M)[0])
    if c0 <= 0.0:
        raise NotCoercive(f"internal energy density is not coercive (min eig {c0})")
    return c0


def zeta(params: MaterialParams) -> float:
    """Rate-to-capacity constant used by the cross-section dissipation bound.

    zeta = max(k2, h2) / lambda_min([[c, kappa], [kappa, r]]).

    Raises:
        TypeMismatch: for the conservative variant, which has no rate block.
    """
    if params.model_type is not ModelType.TYPE_III:
        raise TypeMismatch("zeta is defined only for the dissipative variant")
    require_valid(params)
    cap = np.array([[params.c, params.kappa], [params.kappa, params.r]])
    lam_min = float(np.linalg.eigvalsh(cap)[0])
    return max(params.k2, params.h2) / lam_min


# Coordinates of the pointwise flux/energy pencil: strains, shear angles,
# velocities, rates, displacement gradients, displacements.
PENCIL_VARS = (
    "eps11", "eps22", "eps12s",
    "gamma1", "gamma2",
    "z1", "z2", "y",
    "theta", "P",
    "tau_x1", "tau_x2", "wp_x1", "wp_x2",
    "tau", "wp",
)


def flux_energy_pencil(params: MaterialParams) -> tuple[np.ndarray, np.ndarray]:
    """Pointwise forms (B, A) for the flux-speed constant.

    B is the symmetrized cross-section power flux in the x2 direction; A is
    the pointwise energy density (kinetic + capacity + potential).  Both are
    dense symmetric matrices over PENCIL_VARS.

    The rate-gradient contributions to the flux (the hbar2 cross terms)
    involve gradients of theta and P, which carry no instantaneous energy
    density; they cannot appear in a finite pointwise pencil and are
    omitted.  The resulting constant is exact for the conservative variant.
    """
    I = params.inertia
    h = params.half_thickness
    lam, mu, rho = params.lam, params.mu, params.rho
    idx = {name: i for i, name in enumerate(PENCIL_VARS)}
    n = len(PENCIL_VARS)

    A = np.zeros((n, n))
    A[idx["eps11"], idx["eps11"]] = A[idx["eps22"], idx["eps22"]] = 0.5 * I * (lam + 2 * mu)
    A[idx["eps11"], idx["eps22"]] = A[idx["eps22"], idx["eps11"]] = 0.5 * I * lam
    A[idx["eps12s"], idx["eps12s"]] = I * mu
    A[idx["gamma1"], idx["gamma1"]] = A[idx["gamma2"], idx["gamma2"]] = h * mu
    A[idx["z1"], idx["z1"]] = A[idx["z2"], idx["z2"]] = 0.5 * rho * I
    A[idx["y"], idx["y"]] = h * rho
    A[idx["theta"], idx["theta"]] = 0.5 * I * params.c
    A[idx["P"], idx["P"]] = 0.5 * I * params.r
    A[idx["theta"], idx["P"]] = A[idx["P"], idx["theta"]] = 0.5 * I * params.kappa
    for d in ("x1", "x2"):
        it, iw = idx[f"tau_{d}"], idx[f"wp_{d}"]
        A[it, it] = 0.5 * I * params.k1
        A[iw, iw] = 0.5 * I * params.h1
        A[it, iw] = A[iw, it] = 0.5 * I * params.hbar1
    A[idx["tau"], idx["tau"]] = h * params.k1
    A[idx["wp"], idx["wp"]] = h * params.h1
    A[idx["tau"], idx["wp"]] = A[idx["wp"], idx["tau"]] = h * params.hbar1

    B = np.zeros((n, n))

    def couple(a: str, b: str, coeff: float) -> None:
        i, j = idx[a], idx[b]
        B[i, j] += 0.5 * coeff
        B[j, i] += 0.5 * coeff

    # bending moment row M_21 * z1 with M_21 = 2*I*mu*eps12
    couple("eps12s", "z1", I * mu * math.sqrt(2.0))
    # M_22 * z2 with M_22 = I*(lam*tr(eps) + 2*mu*eps22 - d1*theta - d2*P)
    couple("eps11", "z2", I * lam)
    couple("eps22", "z2", I * (lam + 2 * mu))
    couple("theta", "z2", -I * params.d1)
    couple("P", "z2", -I * params.d2)
    # shear resultant 2*h*N_2*y
    couple("gamma2", "y", 2 * h * mu)
    # conduction fluxes against the rates
    couple("tau_x2", "theta", I * params.k1)
    couple("wp_x2", "theta", I * params.hbar1)
    couple("wp_x2", "P", I * params.h1)
    couple("tau_x2", "P", I * params.hbar1)

    return B, A


def xi_estimate(params: MaterialParams) -> float:
    """Smallest speed constant bounding |flux| by the energy density.

    Largest generalized eigenvalue magnitude of the pencil (B, A) from
    flux_energy_pencil.

    Raises:
        NotCoercive: if the energy density form is not positive definite.
    """
    require_valid(params)
    B, A = flux_energy_pencil(params)
    if float(np.linalg.eigvalsh(A)[0]) <= 0.0:
        raise NotCoercive("pointwise energy density form is not positive definite")
    import scipy.linalg

    eigs = scipy.linalg.eigh(B, A, eigvals_only=True)
    return float(np.max(np.abs(eigs)))
