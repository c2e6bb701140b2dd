"""Spatial decay diagnostics on strip domains.

Cuts sit on the interfaces between node rows: the cut indexed by row j
lies half a cell above that row (z = x2_j + hy/2), and the far region
Sigma_j is the set of rows strictly beyond the cut.  Two routes to the
same quantity:

* flux route: J(z,t), minus the time integral of the resultant power
  flux through the cut.  The line quadrature pairs the two rows the cut
  separates (symmetrized cross products of each resultant with its rate
  partner, hx weights in x1, trapezoid in time);
* volume route: the pointwise energy density summed over the far rows
  plus the dissipation history there, physical densities (strain tensor,
  central-difference gradients) with full row weights.

The two routes coincide identically in space: the evolution operator is
built from composites of the same central differences, and tail sums of
the densities telescope row by row into exactly the symmetrized
interface products.  What remains of the divergence-theorem residual is
pure time quadrature, O(dt^2), which is this module's central
cross-check.  Evaluating the flux on a node row instead of an interface,
or weighting the cut row by half, reintroduces an O(h^2) disagreement
that no resolution within reach removes.

The cut above the last row is the clamped edge, where the symmetrized
product vanishes identically; its J is exactly zero, so far-field
smallness is judged one cut earlier.

The tail integral E(z,t) = int_z^far J is the weighted measure the decay
estimates bound.  E uses a rectangle tail sum (cut value times hy), not
trapezoidal weights: the pinned indicator example (J on one cut ->
E = hy*J there and 0 beyond) fixes the convention, and it makes the
first z-difference reproduce -J without edge corrections.  The second
z-difference of E then reproduces, exactly, the energy-plus-dissipation
budget of the single row sandwiched between two adjacent cuts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import Grid, d_x1_matrix, d_x2_matrix, row_sums
from .material import MaterialParams, ModelType, TypeMismatch, xi_estimate, zeta
from .resultants import State, resultants, strain

BOUND_FLOOR_REL = 1e-13  # envelope points below this (times max E(0,s)) are roundoff


class EmptyHistory(ValueError):
    """A time history with no states was supplied."""


class DomainEmpty(RuntimeError):
    """No sampled (z, t) point lies in the z > xi*t region."""


def flux_cut_rows(state: State, params: MaterialParams) -> np.ndarray:
    """Power flux through each inter-row cut; entry j is the cut above row j.

    Each resultant is paired with the rate field it works against
    (moments with rotation rates, shear with deflection rate, fluxes with
    temperature and chemical potential), and the product is symmetrized
    across the cut: 0.5 * (F_j * Q_{j+1} + F_{j+1} * Q_j), summed over x1
    with weight hx.  The last entry is the clamped edge and is zero.
    """
    g = state.grid
    res = resultants(state, params)
    h = params.half_thickness
    pairs = (
        (res.M12.values, state.z1.values),
        (res.M22.values, state.z2.values),
        (2.0 * h * res.N2.values, state.y.values),
        (-res.Psi2.values, state.theta.values),
        (-res.Omega2.values, state.P.values),
    )
    out = np.zeros(g.ny)
    for f, q in pairs:
        F = f.reshape(g.ny, g.nx)
        Q = q.reshape(g.ny, g.nx)
        out[:-1] += 0.5 * (F[:-1, :] * Q[1:, :] + F[1:, :] * Q[:-1, :]).sum(axis=1)
    return g.hx * out


def energy_density_rows(state: State, params: MaterialParams) -> np.ndarray:
    """Rows of the pointwise density K + C + V (kinetic, capacity, potential)."""
    g = state.grid
    I = params.inertia
    h = params.half_thickness
    st = strain(state)
    e11, e12, e22 = st.eps11.values, st.eps12.values, st.eps22.values
    tr = st.trace
    g1, g2 = st.gamma1.values, st.gamma2.values
    D1, D2 = d_x1_matrix(g), d_x2_matrix(g)
    tau, wp = state.tau.values, state.wp.values
    t1, t2 = D1 @ tau, D2 @ tau
    p1, p2 = D1 @ wp, D2 @ wp
    theta, P = state.theta.values, state.P.values

    kinetic = 0.5 * (
        params.rho * I * (state.z1.values**2 + state.z2.values**2)
        + 2.0 * h * params.rho * state.y.values**2
    )
    capacity = 0.5 * I * (
        params.c * theta**2 + 2.0 * params.kappa * theta * P + params.r * P**2
    )
    potential = 0.5 * (
        I * (params.lam * tr**2 + 2.0 * params.mu * (e11**2 + 2.0 * e12**2 + e22**2))
        + 2.0 * h * params.mu * (g1**2 + g2**2)
        + I * (
            params.k1 * (t1**2 + t2**2)
            + 2.0 * params.hbar1 * (t1 * p1 + t2 * p2)
            + params.h1 * (p1**2 + p2**2)
        )
        + 2.0 * h * (
            params.k1 * tau**2 + 2.0 * params.hbar1 * tau * wp + params.h1 * wp**2
        )
    )
    return row_sums(kinetic + capacity + potential, g)


def dissipation_density_rows(state: State, params: MaterialParams) -> np.ndarray:
    """Rows of the rate-dissipation density (zero for the conservative type)."""
    g = state.grid
    I = params.inertia
    h = params.half_thickness
    D1, D2 = d_x1_matrix(g), d_x2_matrix(g)
    theta, P = state.theta.values, state.P.values
    q1, q2 = D1 @ theta, D2 @ theta
    r1, r2 = D1 @ P, D2 @ P
    vals = I * (
        params.k2 * (q1**2 + q2**2)
        + 2.0 * params.hbar2 * (q1 * r1 + q2 * r2)
        + params.h2 * (r1**2 + r2**2)
    ) + 2.0 * h * (
        params.k2 * theta**2 + 2.0 * params.hbar2 * theta * P + params.h2 * P**2
    )
    return row_sums(vals, g)


def lemma_lhs_rows(state: State, params: MaterialParams) -> np.ndarray:
    """Cross-section integrals of I*(k2*theta^2 + h2*P^2)."""
    vals = params.inertia * (
        params.k2 * state.theta.values**2 + params.h2 * state.P.values**2
    )
    return row_sums(vals, state.grid)


def flux_J(history: list[State], params: MaterialParams, z_row: int) -> float:
    """J at the cut above ``z_row`` from a stored uniform-dt history."""
    if not history:
        raise EmptyHistory("flux_J needs at least one state")
    times = np.array([s.time for s in history])
    sums = np.array([flux_cut_rows(s, params)[z_row] for s in history])
    if times.size == 1:
        return 0.0
    return float(-np.trapezoid(sums, times))


def _sigma_sum(rows: np.ndarray, z_row: int, hy: float) -> float:
    """Quadrature of a row profile over Sigma_z = rows strictly above the cut."""
    return float(hy * rows[z_row + 1 :].sum())


def volume_measure(history: list[State], params: MaterialParams, z_row: int) -> float:
    """Energy-volume form over Sigma_z at the history's final time."""
    if not history:
        raise EmptyHistory("volume_measure needs at least one state")
    g = history[0].grid
    hy = g.hy
    stored = _sigma_sum(energy_density_rows(history[-1], params), z_row, hy)
    times = np.array([s.time for s in history])
    if times.size == 1:
        return stored
    diss = np.array(
        [_sigma_sum(dissipation_density_rows(s, params), z_row, hy) for s in history]
    )
    return float(stored + np.trapezoid(diss, times))


def measure_E(J: np.ndarray, hy: float) -> np.ndarray:
    """Tail sum over rows: E[j] = hy * sum_{m >= j} J[m]; axis 0 is z."""
    J = np.asanyarray(J, dtype=float)
    return hy * np.flip(np.cumsum(np.flip(J, axis=0), axis=0), axis=0)


def _tail_sum(rows: np.ndarray) -> np.ndarray:
    return np.flip(np.cumsum(np.flip(rows, axis=0), axis=0), axis=0)


def theorem_bound(
    z: np.ndarray, t: np.ndarray, max_E0: float, xi: float, zt: float
) -> np.ndarray:
    """Envelope 2*max_s E(0,s) * z*sqrt(zt*t/pi)/(z^2 - xi^2 t^2)
    * exp(-xi^2 t / 4 zt) * exp(xi z / 2 zt - z^2 / 4 zt t), where z > xi*t.

    z, t broadcast to a common shape; entries outside the domain are NaN.
    """
    zz, tt = np.broadcast_arrays(np.asarray(z, float), np.asarray(t, float))
    out = np.full(zz.shape, np.nan)
    mask = (tt > 0.0) & (zz > xi * tt)
    zm, tm = zz[mask], tt[mask]
    with np.errstate(over="ignore"):
        val = (
            2.0
            * max_E0
            * (zm * np.sqrt(zt * tm / np.pi) / (zm**2 - xi**2 * tm**2))
            * np.exp(-(xi**2) * tm / (4.0 * zt))
            * np.exp(xi * zm / (2.0 * zt) - zm**2 / (4.0 * zt * tm))
        )
    out[mask] = val
    return out


@dataclass
class DecayProfile:
    grid: Grid
    z_values: np.ndarray   # cut coordinates x2_j + hy/2
    t_values: np.ndarray
    J: np.ndarray          # (nz, nt)
    E: np.ndarray          # (nz, nt) tail integral of J
    E_zz: np.ndarray       # (nz, nt), NaN on edge rows
    lemma_lhs: np.ndarray  # (nz, nt)
    bound: np.ndarray      # (nz, nt), NaN where z <= xi*t or no rate terms
    volume_E: np.ndarray   # (nz, nt) volume-route twin of J
    e0_rows: np.ndarray    # (nz,) initial energy per row, the data support
    xi: float
    zeta: float

    @property
    def lemma_margin(self) -> np.ndarray:
        return self.zeta * self.E_zz - self.lemma_lhs

    def support_clear(self, rel: float = 1e-12) -> np.ndarray:
        """Rows holding no initial data (relative to the peak row).

        The decay statements assume the data sits below the inspected
        cut; rows inside the initial support drain their stored energy,
        which makes their budgets (and E_zz) go negative for reasons the
        estimates never speak to.
        """
        peak = float(np.max(self.e0_rows)) if self.e0_rows.size else 0.0
        if peak <= 0.0:
            return np.ones_like(self.e0_rows, dtype=bool)
        return self.e0_rows <= rel * peak


class DecayAccumulator:
    """Streaming profile builder fed through run(on_state=...).

    Keeps O(rows) memory per sample instead of storing states: the flux
    integrand is trapezoid-integrated in time every step, and row sums of
    the density diagnostics are recorded every ``sample_every`` steps.
    """

    def __init__(
        self, grid: Grid, params: MaterialParams, dt: float, sample_every: int = 1
    ):
        if sample_every < 1:
            raise ValueError("sample_every must be >= 1")
        self.grid = grid
        self.params = params
        self.dt = dt
        self.sample_every = sample_every
        self._flux_int = np.zeros(grid.ny)
        self._diss_int = np.zeros(grid.ny)
        self._prev_flux: np.ndarray | None = None
        self._prev_diss: np.ndarray | None = None
        self._t: list[float] = []
        self._J: list[np.ndarray] = []
        self._dens: list[np.ndarray] = []
        self._diss: list[np.ndarray] = []
        self._lhs: list[np.ndarray] = []

    def __call__(self, step_index: int, t: float, packed: np.ndarray) -> None:
        state = State.unpack(self.grid, packed, time=t)
        flux = flux_cut_rows(state, self.params)
        diss = dissipation_density_rows(state, self.params)
        if self._prev_flux is not None:
            self._flux_int += 0.5 * self.dt * (self._prev_flux + flux)
            self._diss_int += 0.5 * self.dt * (self._prev_diss + diss)
        self._prev_flux = flux
        self._prev_diss = diss
        if step_index % self.sample_every == 0:
            self._t.append(t)
            self._J.append(-self._flux_int.copy())
            self._dens.append(energy_density_rows(state, self.params))
            self._diss.append(self._diss_int.copy())
            self._lhs.append(lemma_lhs_rows(state, self.params))

    def profile(self) -> DecayProfile:
        if not self._t:
            raise EmptyHistory("no samples accumulated")
        g = self.grid
        p = self.params
        hy = g.hy
        t_values = np.array(self._t)
        J = np.stack(self._J, axis=1)
        dens = np.stack(self._dens, axis=1)
        diss = np.stack(self._diss, axis=1)
        lhs = np.stack(self._lhs, axis=1)
        # Sigma_z is the rows strictly above cut z; the last cut (clamped
        # edge) has nothing beyond it, matching J's exact zero there.
        total = dens + diss
        volume_E = np.zeros_like(total)
        volume_E[:-1, :] = hy * _tail_sum(total)[1:, :]
        E = measure_E(J, hy)
        nz, nt = J.shape
        E_zz = np.full((nz, nt), np.nan)
        if nz >= 3:
            E_zz[1:-1, :] = (E[:-2, :] - 2.0 * E[1:-1, :] + E[2:, :]) / hy**2
        z_values = g.x2_coords() + 0.5 * hy

        if p.model_type is ModelType.TYPE_III:
            xi = xi_estimate(p)
            zt = zeta(p)
            max_E0 = float(np.max(E[0, :])) if nt else 0.0
            bound = theorem_bound(
                z_values[:, None], t_values[None, :], max_E0, xi, zt
            )
        else:
            xi = math.nan
            zt = math.nan
            bound = np.full((nz, nt), np.nan)

        return DecayProfile(
            grid=g,
            z_values=z_values,
            t_values=t_values,
            J=J,
            E=E,
            E_zz=E_zz,
            lemma_lhs=lhs,
            bound=bound,
            volume_E=volume_E,
            e0_rows=dens[:, 0].copy(),
            xi=xi,
            zeta=zt,
        )


def profile_from_history(
    history: list[State], params: MaterialParams, sample_every: int = 1
) -> DecayProfile:
    """Profile from a stored uniform-dt history (convenience for small runs)."""
    if not history:
        raise EmptyHistory("profile_from_history needs at least one state")
    if len(history) == 1:
        acc = DecayAccumulator(history[0].grid, params, dt=1.0, sample_every=1)
        acc(0, history[0].time, history[0].pack())
        return acc.profile()
    dt = history[1].time - history[0].time
    acc = DecayAccumulator(history[0].grid, params, dt=dt, sample_every=sample_every)
    for k, s in enumerate(history):
        acc(k, s.time, s.pack())
    return acc.profile()


@dataclass
class CurvatureBoundReport:
    margins: np.ndarray     # (nz, nt), NaN on edge rows
    min_margin: float
    scale: float
    passed: bool


def check_dissipation_curvature_bound(
    profile: DecayProfile, params: MaterialParams, slack: float = 1e-10
) -> CurvatureBoundReport:
    """zeta * E_zz >= cross-section rate dissipation, at every sampled point
    satisfying the support hypothesis.

    Rows carrying initial data are excluded (see support_clear): their
    budgets subtract the stored energy they started with, so E_zz there
    is negative for reasons outside the estimate.  On the remaining rows
    the inequality is pointwise-algebraic and must hold to slack.

    The comparison constant zeta depends on the rate conductivities, so the
    check is meaningless for the conservative type and raises TypeMismatch.
    """
    if params.model_type is not ModelType.TYPE_III:
        raise TypeMismatch("curvature bound needs the rate terms (dissipative type)")
    zt = zeta(params)
    margins = zt * profile.E_zz - profile.lemma_lhs
    margins[~profile.support_clear(), :] = np.nan
    finite = margins[np.isfinite(margins)]
    min_margin = float(np.min(finite)) if finite.size else 0.0
    lhs_used = profile.lemma_lhs[np.isfinite(margins)]
    scale = float(np.max(np.abs(lhs_used))) if lhs_used.size else 0.0
    passed = min_margin >= -slack * max(scale, 1e-300)
    return CurvatureBoundReport(
        margins=margins, min_margin=min_margin, scale=scale, passed=passed
    )


@dataclass
class EnvelopeReport:
    worst_ratio: float
    n_points: int      # points with z > xi*t, t > 0
    n_checked: int     # of those, points with bound above the roundoff floor
    passed: bool


def envelope_check(
    profile: DecayProfile,
    params: MaterialParams,
    E0_history: np.ndarray | None = None,
) -> EnvelopeReport:
    """E(z,t) <= bound(z,t) wherever z > xi*t.

    Points whose bound is below BOUND_FLOOR_REL * max E(0,s) are excluded:
    there the theoretical envelope is far under the quadrature/roundoff
    noise floor of E itself and the comparison carries no information.
    """
    if params.model_type is not ModelType.TYPE_III:
        raise TypeMismatch("envelope bound needs the rate terms (dissipative type)")
    if E0_history is None:
        E0_history = profile.E[0, :]
    max_E0 = float(np.max(E0_history)) if np.size(E0_history) else 0.0
    in_domain = np.isfinite(profile.bound)
    n_points = int(np.count_nonzero(in_domain))
    if n_points == 0:
        raise DomainEmpty("no sampled point with z > xi*t")
    if max_E0 == 0.0:
        # zero run: both sides vanish identically
        return EnvelopeReport(worst_ratio=0.0, n_points=n_points, n_checked=0, passed=True)
    floor = BOUND_FLOOR_REL * max_E0
    checked = in_domain & (profile.bound >= floor)
    n_checked = int(np.count_nonzero(checked))
    if n_checked == 0:
        return EnvelopeReport(worst_ratio=0.0, n_points=n_points, n_checked=0, passed=True)
    ratios = profile.E[checked] / profile.bound[checked]
    worst = float(np.max(ratios))
    return EnvelopeReport(
        worst_ratio=worst, n_points=n_points, n_checked=n_checked, passed=worst <= 1.0
    )


def _cell(x: float) -> str:
    return "" if not np.isfinite(x) else repr(float(x))


def write_decay_csv(profile: DecayProfile, path) -> None:
    """Rows ordered by time, then by z; empty cells where undefined."""
    margin = profile.lemma_margin
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = profile.E / profile.bound
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("t,z,J,E,E_zz,lemma_lhs,lemma_margin,bound,ratio\n")
        for k, t in enumerate(profile.t_values):
            for j, z in enumerate(profile.z_values):
                fh.write(
                    f"{float(t)!r},{float(z)!r},"
                    f"{float(profile.J[j, k])!r},{float(profile.E[j, k])!r},"
                    f"{_cell(profile.E_zz[j, k])},{float(profile.lemma_lhs[j, k])!r},"
                    f"{_cell(margin[j, k])},{_cell(profile.bound[j, k])},"
                    f"{_cell(ratio[j, k])}\n"
                )
