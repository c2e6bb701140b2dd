"""Backward-in-time system and the uniqueness / localization diagnostics.

The backward generator is the forward one with the dilatation couplings
(d1, d2) and the rate blocks (k2, h2, hbar2) sign-flipped.  Equivalently
A_back = -R A R where R negates the rate fields (z1, z2, y, theta, P):
both constructions are built and compared entry by entry, since agreeing
with the time-reversal relation is exactly what makes a backward step the
inverse of a forward one.

Three quadratic functionals track backward trajectories.  E1 is the
stored energy (it grows along dissipative backward runs, at the exact
per-step rate of the midpoint scheme).  E2 swaps the sign of the
thermal-diffusive part: kinetic + elastic - capacity - conduction
potential.  E3 is the mixed displacement-rate form with the rate
conductivities appearing on the displacement pair; it carries no overall
one-half and its zero-order terms carry h rather than 2h.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp

from .dynamics import (
    AssemblyInconsistent,
    EnergyReport,
    ImplicitMidpointStepper,
    OperatorMatrices,
    Sources,
    ZERO_SOURCES,
    _block_assemble,
    _generator_matrix,
    assemble,
    composite_second_differences,
    run,
)
from .grid import Grid, d_x1_matrix, d_x2_matrix
from .material import MaterialParams, require_valid
from .resultants import FIELD_NAMES, State, zero_state

REVERSAL_TOL = 1e-12

# fields whose sign flips under time reversal
_RATE_FIELDS = ("z1", "z2", "y", "theta", "P")


def reversal_signs(grid: Grid) -> np.ndarray:
    """Diagonal of R: +1 on displacement-like blocks, -1 on rate blocks."""
    n = grid.n_nodes
    signs = np.ones(len(FIELD_NAMES) * n)
    for k, name in enumerate(FIELD_NAMES):
        if name in _RATE_FIELDS:
            signs[k * n : (k + 1) * n] = -1.0
    return signs


def reverse_state(state: State) -> State:
    """Apply R: negate the rate fields, keep displacements."""
    u = state.pack() * reversal_signs(state.grid)
    return State.unpack(state.grid, u, time=state.time)


@dataclass
class BackwardMatrices:
    grid: Grid
    params: MaterialParams
    A_back: sp.csr_matrix
    E1_form: sp.csr_matrix
    E2_form: sp.csr_matrix
    E3_form: sp.csr_matrix
    forward: OperatorMatrices


def assemble_backward(params: MaterialParams, grid: Grid) -> BackwardMatrices:
    """Build the backward generator and the three functional forms.

    Raises:
        AssemblyInconsistent: if the directly assembled backward operator
            does not equal -R A R of the forward one exactly.
    """
    require_valid(params)
    forward = assemble(params, grid)

    flipped = replace(
        params,
        d1=-params.d1,
        d2=-params.d2,
        k2=-params.k2,
        h2=-params.h2,
        hbar2=-params.hbar2,
    )
    A_back = _generator_matrix(flipped, grid)

    signs = reversal_signs(grid)
    R = sp.diags(signs)
    ref = (-(R @ forward.A @ R)).tocsr()
    diff = (A_back - ref)
    scale = max(np.max(np.abs(forward.A.data)), 1e-300)
    worst = np.max(np.abs(diff.data)) / scale if diff.nnz else 0.0
    if worst > REVERSAL_TOL:
        raise AssemblyInconsistent(
            f"backward operator deviates from time reversal by {worst:.3e}"
        )

    E1 = forward.E
    E2 = _e2_form(params, grid)
    E3 = _e3_form(params, grid)
    return BackwardMatrices(
        grid=grid,
        params=params,
        A_back=A_back,
        E1_form=E1,
        E2_form=E2,
        E3_form=E3,
        forward=forward,
    )


def _e2_form(params: MaterialParams, grid: Grid) -> sp.csr_matrix:
    """Kinetic + elastic - capacity - conduction potential (doubled form)."""
    n = grid.n_nodes
    a = grid.cell_area
    Id = sp.identity(n, format="csr")
    D1, D2 = d_x1_matrix(grid), d_x2_matrix(grid)
    DD1, DD2 = composite_second_differences(grid)
    S = (-(DD1 + DD2)).tocsr()
    I = params.inertia
    h = params.half_thickness
    mu = params.mu
    lpm = params.lam + params.mu
    K1 = np.array([[params.k1, params.hbar1], [params.hbar1, params.h1]])
    Dvec = (D1, D2)
    DDvec = (DD1, DD2)
    disp_names = ("tau", "wp")
    rate_names = ("theta", "P")

    blocks: dict[tuple[str, str], sp.spmatrix] = {}
    blocks["z1", "z1"] = (a * params.rho * I) * Id
    blocks["z2", "z2"] = (a * params.rho * I) * Id
    blocks["y", "y"] = (a * 2.0 * h * params.rho) * Id
    blocks["theta", "theta"] = -(a * params.c * I) * Id
    blocks["P", "P"] = -(a * params.r * I) * Id
    blocks["theta", "P"] = -(a * params.kappa * I) * Id
    blocks["P", "theta"] = -(a * params.kappa * I) * Id
    for alpha, va in enumerate(("v1", "v2")):
        for beta, vb in enumerate(("v1", "v2")):
            if alpha == beta:
                blk = (
                    -(a * I * lpm) * DDvec[alpha]
                    + (a * I * mu) * S
                    + (a * 2.0 * h * mu) * Id
                )
            else:
                blk = (a * I * lpm) * (Dvec[alpha].T @ Dvec[beta])
            blocks[va, vb] = blk
        blocks[va, "w"] = (a * 2.0 * h * mu) * Dvec[alpha]
        blocks["w", va] = (a * 2.0 * h * mu) * Dvec[alpha].T
    blocks["w", "w"] = (a * 2.0 * h * mu) * S
    for row in range(2):
        for col in range(row, 2):
            coeff = K1[row, col]
            blk = -((a * I * coeff) * S + (a * 2.0 * h * coeff) * Id)
            blocks[disp_names[row], disp_names[col]] = blk
            if col != row:
                blocks[disp_names[col], disp_names[row]] = blk
    return _block_assemble(n, blocks)


def _e3_form(params: MaterialParams, grid: Grid) -> sp.csr_matrix:
    """Mixed form: u^T E3_form u gives the (unhalved) third functional."""
    n = grid.n_nodes
    a = grid.cell_area
    Id = sp.identity(n, format="csr")
    DD1, DD2 = composite_second_differences(grid)
    S = (-(DD1 + DD2)).tocsr()
    I = params.inertia
    h = params.half_thickness
    K2 = np.array([[params.k2, params.hbar2], [params.hbar2, params.h2]])
    disp_names = ("tau", "wp")

    blocks: dict[tuple[str, str], sp.spmatrix] = {}
    # int rho I v.z + 2 h rho w y, split symmetrically
    blocks["v1", "z1"] = (0.5 * a * params.rho * I) * Id
    blocks["z1", "v1"] = (0.5 * a * params.rho * I) * Id
    blocks["v2", "z2"] = (0.5 * a * params.rho * I) * Id
    blocks["z2", "v2"] = (0.5 * a * params.rho * I) * Id
    blocks["w", "y"] = (a * h * params.rho) * Id
    blocks["y", "w"] = (a * h * params.rho) * Id
    # -int I (c theta tau + r P wp + kappa (tau P + theta wp))
    blocks["tau", "theta"] = -(0.5 * a * params.c * I) * Id
    blocks["theta", "tau"] = -(0.5 * a * params.c * I) * Id
    blocks["wp", "P"] = -(0.5 * a * params.r * I) * Id
    blocks["P", "wp"] = -(0.5 * a * params.r * I) * Id
    blocks["tau", "P"] = -(0.5 * a * params.kappa * I) * Id
    blocks["P", "tau"] = -(0.5 * a * params.kappa * I) * Id
    blocks["theta", "wp"] = -(0.5 * a * params.kappa * I) * Id
    blocks["wp", "theta"] = -(0.5 * a * params.kappa * I) * Id
    # rate conductivities on the displacement pair: (I/2) gradients, h nodal
    for row in range(2):
        for col in range(row, 2):
            coeff = K2[row, col]
            blk = (0.5 * a * I * coeff) * S + (a * h * coeff) * Id
            blocks[disp_names[row], disp_names[col]] = blk
            if col != row:
                blocks[disp_names[col], disp_names[row]] = blk
    return _block_assemble(n, blocks)


def functionals(state: State, matrices: BackwardMatrices) -> tuple[float, float, float]:
    u = state.pack()
    e1 = 0.5 * float(u @ (matrices.E1_form @ u))
    e2 = 0.5 * float(u @ (matrices.E2_form @ u))
    e3 = float(u @ (matrices.E3_form @ u))
    return e1, e2, e3


def energy_norm(state: State, matrices: BackwardMatrices) -> float:
    u = state.pack()
    return math.sqrt(max(float(u @ (matrices.E1_form @ u)), 0.0))


class _BackwardOperator:
    """Adapter so the midpoint stepper can march A_back.

    Hands the stepper -D as its dissipation form: along backward
    trajectories E1 grows at exactly the forward dissipation rate, so the
    sign flip keeps the stepper's per-step balance residual a pure
    roundoff quantity.
    """

    def __init__(self, matrices: BackwardMatrices):
        self.grid = matrices.grid
        self.params = matrices.params
        self.A = matrices.A_back
        self.E = matrices.E1_form
        self.D = (-matrices.forward.D).tocsr()
        self._cache: dict = {}

    @property
    def n_dof(self) -> int:
        return len(FIELD_NAMES) * self.grid.n_nodes

    def stepper(self, dt: float) -> ImplicitMidpointStepper:
        key = ("stepper", float(dt))
        if key not in self._cache:
            self._cache[key] = ImplicitMidpointStepper(self, dt)
        return self._cache[key]


class BackwardTracker:
    """on_state callback recording the three functionals along a run."""

    def __init__(
        self, grid: Grid, matrices: BackwardMatrices, sample_every: int = 1
    ):
        if sample_every < 1:
            raise ValueError("sample_every must be >= 1")
        self.grid = grid
        self.matrices = matrices
        self.sample_every = sample_every
        self._t: list[float] = []
        self._E1: list[float] = []
        self._E2: list[float] = []
        self._E3: list[float] = []

    def __call__(self, step_index: int, t: float, packed: np.ndarray) -> None:
        if step_index % self.sample_every:
            return
        m = self.matrices
        self._t.append(t)
        self._E1.append(0.5 * float(packed @ (m.E1_form @ packed)))
        self._E2.append(0.5 * float(packed @ (m.E2_form @ packed)))
        self._E3.append(float(packed @ (m.E3_form @ packed)))

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """(times, E1, E2, E3, energy_norm) with energy_norm = sqrt(2 E1)."""
        t = np.array(self._t)
        e1 = np.array(self._E1)
        e2 = np.array(self._E2)
        e3 = np.array(self._E3)
        norms = np.sqrt(np.maximum(2.0 * e1, 0.0))
        return t, e1, e2, e3, norms


def run_backward(
    U0: State,
    matrices: BackwardMatrices,
    dt: float,
    t_end: float,
    sources: Sources = ZERO_SOURCES,
    on_state=None,
) -> tuple[State, EnergyReport]:
    """March the backward system with the same midpoint scheme.

    The report's E0 column holds E1 along the backward trajectory (it
    grows for the dissipative type; the balance residual stays roundoff).
    """
    return run(U0, _BackwardOperator(matrices), sources, dt, t_end, on_state=on_state)


def roundtrip(
    U0: State, matrices: BackwardMatrices, dt: float, t_end: float
) -> tuple[State, float]:
    """Forward to t_end, reverse, march back, reverse again.

    Returns the recovered initial state and its relative error against U0
    in the energy norm.
    """
    forward_end, _ = run(U0, matrices.forward, ZERO_SOURCES, dt, t_end)
    back_start = reverse_state(forward_end)
    back_end, _ = run_backward(back_start, matrices, dt, t_end)
    recovered = reverse_state(back_end)
    diff = recovered.pack() - U0.pack()
    E = matrices.E1_form
    num = math.sqrt(max(float(diff @ (E @ diff)), 0.0))
    den = math.sqrt(max(float(U0.pack() @ (E @ U0.pack())), 1e-300))
    return recovered, num / den


@dataclass
class BackwardUniquenessReport:
    zero_max_norm: float
    eps: float
    perturb_final_norm: float
    growth_rate: float        # average exponential rate over the run
    growth_rate_max: float    # worst per-step rate
    passed: bool


def backward_uniqueness_check(
    params: MaterialParams,
    grid: Grid,
    dt: float,
    t_end: float,
    eps: float = 1e-10,
    seed: int = 20260815,
) -> BackwardUniquenessReport:
    """Zero data stays zero; tiny data grows at most exponentially.

    The zero-data trajectory must hold below 1e-12 in energy norm (the
    solver maps the zero vector to zero exactly, so any drift indicates a
    broken assembly).  The perturbed run reports the fitted growth rate;
    the pass condition is that every per-step rate is finite.
    """
    matrices = assemble_backward(params, grid)
    E = matrices.E1_form

    norms: list[float] = []

    def track(_k: int, _t: float, u: np.ndarray) -> None:
        norms.append(math.sqrt(max(float(u @ (E @ u)), 0.0)))

    zero = zero_state(grid)
    run_backward(zero, matrices, dt, t_end, on_state=track)
    zero_max = max(norms)

    rng = np.random.default_rng(seed)
    u0 = rng.standard_normal(len(FIELD_NAMES) * grid.n_nodes)
    n0 = math.sqrt(float(u0 @ (E @ u0)))
    u0 *= eps / n0
    norms.clear()
    run_backward(State.unpack(grid, u0), matrices, dt, t_end, on_state=track)
    final = norms[-1]
    rates = np.diff(np.log(norms)) / dt
    growth = (math.log(final) - math.log(norms[0])) / t_end
    growth_max = float(np.max(rates))
    passed = zero_max <= 1e-12 and math.isfinite(growth_max) and math.isfinite(final)
    return BackwardUniquenessReport(
        zero_max_norm=zero_max,
        eps=eps,
        perturb_final_norm=final,
        growth_rate=growth,
        growth_rate_max=growth_max,
        passed=passed,
    )


@dataclass
class LocalizationReport:
    applicable: bool
    min_E0: float
    slope: float
    curvature: float
    rel_curvature: float
    passed: bool


def localization_impossibility_check(
    report: EnergyReport, rel_curvature_tol: float = 1e-2
) -> LocalizationReport:
    """E0 stays positive and its log is asymptotically affine.

    A trajectory that vanished in finite time would send log E0 to -inf;
    instead the tail should be a clean exponential.  Fit a quadratic to
    log E0 over the last half of the run: the pass condition is
    |second derivative| <= tol * |slope at the window center|.
    """
    E0 = report.E0
    if float(np.max(E0)) <= 0.0:
        return LocalizationReport(
            applicable=False,
            min_E0=0.0,
            slope=math.nan,
            curvature=math.nan,
            rel_curvature=math.nan,
            passed=True,
        )
    min_E0 = float(np.min(E0))
    if min_E0 <= 0.0:
        return LocalizationReport(
            applicable=True,
            min_E0=min_E0,
            slope=math.nan,
            curvature=math.nan,
            rel_curvature=math.inf,
            passed=False,
        )
    half = E0.size // 2
    t = report.times[half:]
    logs = np.log(E0[half:])
    t_mid = 0.5 * (t[0] + t[-1])
    c2, c1, _c0 = np.polyfit(t - t_mid, logs, 2)
    curvature = 2.0 * c2
    slope = c1  # at the window center, since t is recentred
    rel = abs(curvature) / max(abs(slope), 1e-300)
    return LocalizationReport(
        applicable=True,
        min_E0=min_E0,
        slope=float(slope),
        curvature=float(curvature),
        rel_curvature=float(rel),
        passed=rel <= rel_curvature_tol,
    )


def write_backward_csv(
    times: np.ndarray,
    E1: np.ndarray,
    E2: np.ndarray,
    E3: np.ndarray,
    energy_norms: np.ndarray,
    path,
) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("t,E1,E2,E3,energy_norm\n")
        for k in range(len(times)):
            fh.write(
                f"{float(times[k])!r},{float(E1[k])!r},{float(E2[k])!r},"
                f"{float(E3[k])!r},{float(energy_norms[k])!r}\n"
            )
