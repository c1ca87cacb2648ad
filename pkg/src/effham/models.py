"""Model factories: driven spins, Dicke, three-level cascades/Lambda, N-level chains.

Each builder returns a :class:`ModelInstance` holding the free part
``h_free``, the interaction ``h_int`` (diagonal detuning part plus coupling
terms), the integrals of motion, and one deformed algebra per coupling
term.  The split is exact: ``h_free + h_int`` reproduces the full lab-frame
Hamiltonian including the scalar constants that are usually dropped, so
interaction-picture comparisons cost nothing.

All couplings are real, energies are in units with hbar = 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import hilbert
from .algebra import DeformedAlgebra, build_deformed
from .errors import GuardViolationError, ResonanceError
from .hilbert import (EnsembleSpec, OperatorMatrix, SpaceDescriptor, annihilator,
                      collective_inversion, collective_operator, commutator,
                      enumerate_basis, identity, number_operator)

MODEL_KINDS = ("spin-in-field", "dicke", "xi3", "lambda3", "cascade", "two-mode-four")

#: dimensionless dispersive ratio above which a regime is flagged invalid
DISPERSIVE_LIMIT = 0.3


@dataclass(frozen=True)
class ModelSpec:
    """Parameter record for one model family; unused fields stay at defaults.

    kind            one of :data:`MODEL_KINDS`
    atoms           ensemble size A (ignored by spin-in-field, which uses spin_j)
    n_max           Fock truncation per mode
    energies        bare level energies E_i (cascade-like kinds)
    omega_field     single-mode field frequency (or mode a for two modes)
    omega_b         second mode frequency (two-mode kind)
    couplings       one coupling per allowed transition, in level order
    couplings_b     mode-b couplings (two-mode kind)
    omega, g, spin_j   spin-in-field parameters
    omega0          atomic transition frequency (dicke)
    """

    kind: str
    atoms: int = 1
    n_max: tuple[int, ...] = (6,)
    energies: tuple[float, ...] = ()
    omega_field: float = 0.0
    omega_b: float = 0.0
    couplings: tuple[float, ...] = ()
    couplings_b: tuple[float, ...] = ()
    omega: float = 1.0
    g: float = 0.0
    spin_j: float = 0.5
    omega0: float = 0.0

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if isinstance(self.n_max, int):
            object.__setattr__(self, "n_max", (self.n_max,))
        else:
            object.__setattr__(self, "n_max", tuple(int(n) for n in self.n_max))
        object.__setattr__(self, "energies", tuple(float(e) for e in self.energies))
        object.__setattr__(self, "couplings", tuple(float(g) for g in self.couplings))
        object.__setattr__(self, "couplings_b", tuple(float(g) for g in self.couplings_b))
        if self.atoms < 1:
            raise ValueError("atoms must be >= 1")
        if self.kind != "spin-in-field" and any(n < 1 for n in self.n_max):
            raise ValueError("field truncations must be positive")
        if self.kind in ("xi3", "cascade", "two-mode-four") and self.energies:
            if any(b <= a for a, b in zip(self.energies, self.energies[1:])):
                raise ValueError("cascade level energies must be strictly increasing")
        if self.kind == "lambda3" and self.energies:
            if self.energies[2] <= max(self.energies[0], self.energies[1]):
                raise ValueError("the shared level of a Lambda system must lie highest")
        if self.kind == "spin-in-field":
            a2 = 2 * self.spin_j
            if abs(a2 - round(a2)) > 1e-12 or round(a2) < 1:
                raise ValueError("spin_j must be a positive integer or half-integer")


@dataclass(frozen=True)
class Interaction:
    """One coupling term ``g (X+ + X-)`` with its one-photon detuning."""

    name: str
    g: float
    detuning: float
    algebra: DeformedAlgebra
    mode: int | None = 0

    @property
    def epsilon(self) -> float:
        return self.g / self.detuning


@dataclass(frozen=True)
class ModelInstance:
    """A constructed model: operators, integrals of motion, deformed algebras."""

    spec: ModelSpec
    space: SpaceDescriptor
    h_free: OperatorMatrix
    h_int: OperatorMatrix
    h_diag: OperatorMatrix
    interactions: tuple[Interaction, ...]
    conserved: dict[str, OperatorMatrix]
    detunings: dict[str, float]
    operators: dict[str, OperatorMatrix] = field(default_factory=dict)

    def interaction(self, name: str) -> Interaction:
        for term in self.interactions:
            if term.name == name:
                return term
        raise KeyError(name)

    @property
    def algebras(self) -> dict[str, DeformedAlgebra]:
        return {t.name: t.algebra for t in self.interactions}


def _validate(model: ModelInstance, tol: float = 1e-10) -> ModelInstance:
    scale = max(1.0, model.h_int.norm())
    if not model.h_int.is_hermitian(1e-12) or not model.h_free.is_hermitian(1e-12):
        raise ValueError("constructed Hamiltonian is not Hermitian")
    for name, op in model.conserved.items():
        if commutator(model.h_int, op).norm() > tol * scale * max(1.0, op.norm()):
            raise ValueError(f"[h_int, {name}] != 0")
    return model


def _coupling_term(g: float, alg: DeformedAlgebra) -> OperatorMatrix:
    return g * (alg.xplus + alg.xminus)


# ---------------------------------------------------------------------------
# spin in a static field
# ---------------------------------------------------------------------------

def build_spin_in_field(spec: ModelSpec) -> ModelInstance:
    """Single collective spin j in a field: ``H = omega*S3 + g*(S+ + S-)``.

    Realized as A = 2j two-level atoms; there is no field mode and no
    integral of motion beyond the Casimir.
    """
    atoms = int(round(2 * spec.spin_j))
    space = enumerate_basis([], EnsembleSpec(levels=2, atoms=atoms))
    s3, sp, _ = hilbert.spin_operators(space)
    alg = build_deformed("spin", s3, sp)
    h_diag = spec.omega * s3
    h_int = h_diag + _coupling_term(spec.g, alg)
    term = Interaction(name="spin", g=spec.g, detuning=spec.omega, algebra=alg, mode=None)
    model = ModelInstance(
        spec=spec, space=space, h_free=hilbert.zero(space), h_int=h_int, h_diag=h_diag,
        interactions=(term,), conserved={}, detunings={"omega": spec.omega},
        operators={"S3": s3, "S+": sp, "S-": sp.dag()})
    return _validate(model)


# ---------------------------------------------------------------------------
# Dicke / Tavis-Cummings
# ---------------------------------------------------------------------------

def build_dicke(spec: ModelSpec) -> ModelInstance:
    """A two-level atoms and one mode in the rotating-wave approximation.

    ``h_int = Delta*S3 + g*(a S+ + a^dag S-)`` with ``Delta = omega0 - omega_f``
    and the excitation number ``N = a^dag a + S3`` conserved.
    """
    space = enumerate_basis([spec.n_max[0]], EnsembleSpec(levels=2, atoms=spec.atoms))
    s3, sp, sm = hilbert.spin_operators(space)
    a = annihilator(space, 0)
    delta = spec.omega0 - spec.omega_field
    alg = build_deformed("jc", s3, a @ sp)
    n_exc = number_operator(space, 0) + s3
    h_diag = delta * s3
    h_int = h_diag + _coupling_term(spec.g, alg)
    term = Interaction(name="jc", g=spec.g, detuning=delta, algebra=alg)
    model = ModelInstance(
        spec=spec, space=space, h_free=spec.omega_field * n_exc, h_int=h_int, h_diag=h_diag,
        interactions=(term,), conserved={"N": n_exc}, detunings={"delta": delta},
        operators={"S3": s3, "S+": sp, "S-": sm, "a": a, "n": number_operator(space, 0)})
    return _validate(model)


# ---------------------------------------------------------------------------
# three-level cascade (Xi)
# ---------------------------------------------------------------------------

def _level_ops(space: SpaceDescriptor) -> dict[str, OperatorMatrix]:
    nlev = space.ensemble.levels
    ops = {}
    for i in range(1, nlev + 1):
        for j in range(1, nlev + 1):
            ops[f"S{i}{j}"] = collective_operator(space, i, j)
    return ops


def build_xi3(spec: ModelSpec) -> ModelInstance:
    """Three-level cascade (dipole transitions 1-2 and 2-3) in one mode.

    Detunings ``D12 = E2 - E1 - omega_f`` and ``D23 = E3 - E2 - omega_f``;
    conserved excitation ``N = a^dag a + S33 - S11``.  The interaction keeps
    the scalar ``E2 * A`` inside ``h_free`` so the split is exact.
    """
    e1, e2, e3 = spec.energies
    wf = spec.omega_field
    g12, g23 = spec.couplings
    space = enumerate_basis([spec.n_max[0]], EnsembleSpec(levels=3, atoms=spec.atoms))
    ops = _level_ops(space)
    a = annihilator(space, 0)
    d12, d23 = e2 - e1 - wf, e3 - e2 - wf
    n_exc = number_operator(space, 0) + ops["S33"] - ops["S11"]
    alg12 = build_deformed("12", collective_inversion(space, 1, 2), a @ ops["S12"])
    alg23 = build_deformed("23", collective_inversion(space, 2, 3), a @ ops["S23"])
    h_diag = (-d12) * ops["S11"] + d23 * ops["S33"]
    h_int = h_diag + _coupling_term(g12, alg12) + _coupling_term(g23, alg23)
    h_free = wf * n_exc + (e2 * spec.atoms) * identity(space)
    terms = (Interaction("12", g12, d12, alg12), Interaction("23", g23, d23, alg23))
    model = ModelInstance(
        spec=spec, space=space, h_free=h_free, h_int=h_int, h_diag=h_diag,
        interactions=terms, conserved={"N": n_exc},
        detunings={"12": d12, "23": d23},
        operators={**ops, "a": a, "n": number_operator(space, 0)})
    return _validate(model)


# ---------------------------------------------------------------------------
# three-level Lambda
# ---------------------------------------------------------------------------

def build_lambda3(spec: ModelSpec) -> ModelInstance:
    """Lambda configuration: two lower levels coupled to a shared upper level 3.

    Detunings ``D31 = E3 - E1 - omega_f`` and ``D32 = E3 - E2 - omega_f``;
    conserved excitation ``N = a^dag a + S33`` (and the total population).
    """
    e1, e2, e3 = spec.energies
    wf = spec.omega_field
    g13, g23 = spec.couplings
    space = enumerate_basis([spec.n_max[0]], EnsembleSpec(levels=3, atoms=spec.atoms))
    ops = _level_ops(space)
    a = annihilator(space, 0)
    d31, d32 = e3 - e1 - wf, e3 - e2 - wf
    n_exc = number_operator(space, 0) + ops["S33"]
    alg13 = build_deformed("13", collective_inversion(space, 1, 3), a @ ops["S13"])
    alg23 = build_deformed("23", collective_inversion(space, 2, 3), a @ ops["S23"])
    h_diag = (-d31) * ops["S11"] + (-d32) * ops["S22"]
    h_int = h_diag + _coupling_term(g13, alg13) + _coupling_term(g23, alg23)
    h_free = wf * n_exc + ((e3 - wf) * spec.atoms) * identity(space)
    population = ops["S11"] + ops["S22"] + ops["S33"]
    terms = (Interaction("13", g13, d31, alg13), Interaction("23", g23, d32, alg23))
    model = ModelInstance(
        spec=spec, space=space, h_free=h_free, h_int=h_int, h_diag=h_diag,
        interactions=terms, conserved={"N": n_exc, "population": population},
        detunings={"31": d31, "32": d32},
        operators={**ops, "a": a, "n": number_operator(space, 0)})
    return _validate(model)


# ---------------------------------------------------------------------------
# N-level cascade chain
# ---------------------------------------------------------------------------

def inversion_weights(n_levels: int) -> tuple[int, ...]:
    """Weights mu_i = i (N - i) of the inversion operators in the excitation number."""
    return tuple(i * (n_levels - i) for i in range(1, n_levels))


def cascade_detunings(energies, omega_field: float) -> tuple[float, ...]:
    """Multiphoton detunings D_j = E_j - E_1 - (j - 1) omega_f (D_1 = 0)."""
    e1 = energies[0]
    return tuple(e - e1 - j * omega_field for j, e in enumerate(energies))


def build_cascade_n(spec: ModelSpec, require_resonance: bool = False,
                    resonance_tol: float = 1e-9) -> ModelInstance:
    """N-level cascade chain coupled to one mode on every adjacent transition.

    The conserved excitation is ``a^dag a + sum_i mu_i S3^{i,i+1}`` with
    ``mu_i = i (N - i)``.  With ``require_resonance`` the (N-1)-photon
    condition ``D_N = 0`` is enforced.
    """
    nlev = len(spec.energies)
    if nlev < 3:
        raise ValueError("a cascade chain needs at least three levels")
    if len(spec.couplings) != nlev - 1:
        raise ValueError("need one coupling per adjacent transition")
    wf = spec.omega_field
    deltas = cascade_detunings(spec.energies, wf)
    if require_resonance and abs(deltas[-1]) > resonance_tol:
        raise ResonanceError(
            f"multiphoton resonance requested but D_{nlev} = {deltas[-1]:.3e}")
    space = enumerate_basis([spec.n_max[0]], EnsembleSpec(levels=nlev, atoms=spec.atoms))
    ops = _level_ops(space)
    a = annihilator(space, 0)
    mu = inversion_weights(nlev)
    n_exc = number_operator(space, 0)
    for i, w in enumerate(mu, start=1):
        n_exc = n_exc + w * collective_inversion(space, i, i + 1)
    h_diag = hilbert.zero(space)
    for j, d in enumerate(deltas, start=1):
        h_diag = h_diag + d * ops[f"S{j}{j}"]
    terms = []
    h_int = h_diag
    for i, g in enumerate(spec.couplings, start=1):
        alg = build_deformed(str(i), collective_inversion(space, i, i + 1),
                             a @ ops[f"S{i}{i + 1}"])
        h_int = h_int + _coupling_term(g, alg)
        terms.append(Interaction(str(i), g, deltas[i] - deltas[i - 1], alg))
    e_mid = 0.5 * (spec.energies[-1] + spec.energies[0])
    h_free = wf * n_exc + ((e_mid - 0.5 * deltas[-1]) * spec.atoms) * identity(space)
    model = ModelInstance(
        spec=spec, space=space, h_free=h_free, h_int=h_int, h_diag=h_diag,
        interactions=tuple(terms), conserved={"N": n_exc},
        detunings={str(j): d for j, d in enumerate(deltas, start=1)},
        operators={**ops, "a": a, "n": number_operator(space, 0)})
    return _validate(model)


# ---------------------------------------------------------------------------
# four-level cascade with two modes
# ---------------------------------------------------------------------------

def build_two_mode_four(spec: ModelSpec, require_resonance: bool = False,
                        require_positive_gap: bool = False,
                        resonance_tol: float = 1e-9) -> ModelInstance:
    """Four-level cascade driven by two modes a and b on every adjacent transition.

    Detunings are taken against mode a, ``D_j = E_j - E_1 - (j-1) omega_a``,
    and the mode gap ``delta = omega_b - omega_a`` enters the diagonal part
    as ``delta * b^dag b``.  ``require_resonance`` enforces the three-photon
    condition ``E4 - E1 = 3 omega_b``; ``require_positive_gap`` enforces the
    sign convention ``delta > 0``.
    """
    if len(spec.energies) != 4:
        raise ValueError("the two-mode model has exactly four levels")
    if len(spec.couplings) != 3 or len(spec.couplings_b) != 3:
        raise ValueError("need three couplings per mode")
    if len(spec.n_max) != 2:
        raise ValueError("need one truncation per mode")
    wa, wb = spec.omega_field, spec.omega_b
    gap = wb - wa
    if require_positive_gap and gap <= 0:
        raise GuardViolationError(f"mode gap delta = {gap:.3e} must be positive")
    if require_resonance and abs(spec.energies[3] - spec.energies[0] - 3 * wb) > resonance_tol:
        raise ResonanceError("three-photon resonance E4 - E1 = 3 omega_b requested but violated")
    deltas = cascade_detunings(spec.energies, wa)
    space = enumerate_basis([spec.n_max[0], spec.n_max[1]], EnsembleSpec(levels=4, atoms=spec.atoms))
    ops = _level_ops(space)
    a, b = annihilator(space, 0), annihilator(space, 1)
    na, nb = number_operator(space, 0), number_operator(space, 1)
    mu = inversion_weights(4)
    n_exc = na + nb
    for i, w in enumerate(mu, start=1):
        n_exc = n_exc + w * collective_inversion(space, i, i + 1)
    h_diag = gap * nb
    for j, d in enumerate(deltas, start=1):
        h_diag = h_diag + d * ops[f"S{j}{j}"]
    terms = []
    h_int = h_diag
    for i in range(1, 4):
        s3 = collective_inversion(space, i, i + 1)
        raising = ops[f"S{i}{i + 1}"]
        alg_a = build_deformed(f"a{i}", s3, a @ raising)
        alg_b = build_deformed(f"b{i}", s3, b @ raising)
        ga, gb = spec.couplings[i - 1], spec.couplings_b[i - 1]
        h_int = h_int + _coupling_term(ga, alg_a) + _coupling_term(gb, alg_b)
        d_step = deltas[i] - deltas[i - 1]
        terms.append(Interaction(f"a{i}", ga, d_step, alg_a, mode=0))
        terms.append(Interaction(f"b{i}", gb, d_step - gap, alg_b, mode=1))
    e_mid = 0.5 * (spec.energies[3] + spec.energies[0])
    h_free = wa * n_exc + ((e_mid - 0.5 * deltas[-1]) * spec.atoms) * identity(space)
    detunings = {str(j): d for j, d in enumerate(deltas, start=1)}
    detunings["gap"] = gap
    model = ModelInstance(
        spec=spec, space=space, h_free=h_free, h_int=h_int, h_diag=h_diag,
        interactions=tuple(terms), conserved={"N": n_exc}, detunings=detunings,
        operators={**ops, "a": a, "b": b, "na": na, "nb": nb})
    return _validate(model)


_BUILDERS = {
    "spin-in-field": build_spin_in_field,
    "dicke": build_dicke,
    "xi3": build_xi3,
    "lambda3": build_lambda3,
    "cascade": build_cascade_n,
    "two-mode-four": build_two_mode_four,
}


def build(spec: ModelSpec, **kwargs) -> ModelInstance:
    """Dispatch to the builder for ``spec.kind``."""
    return _BUILDERS[spec.kind](spec, **kwargs)


# ---------------------------------------------------------------------------
# guards and block structure
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GuardResult:
    """Dispersive-limit check: ratio A g sqrt(n_max + 1) / |detuning|."""

    ratio: float
    valid: bool
    limit: float = DISPERSIVE_LIMIT


def dispersive_guard(model: ModelInstance, transition: str,
                     limit: float = DISPERSIVE_LIMIT) -> GuardResult:
    """Evaluate the dispersive condition for one coupling term.

    Uses the retained ``n_max`` as the pessimistic photon scale.  A zero
    detuning is flagged invalid with an infinite ratio.
    """
    term = model.interaction(transition)
    if term.mode is None:
        photon_scale = 1.0
    else:
        photon_scale = math.sqrt(model.spec.n_max[term.mode] + 1)
    if term.detuning == 0:
        return GuardResult(ratio=math.inf, valid=False, limit=limit)
    ratio = model.spec.atoms * abs(term.g) * photon_scale / abs(term.detuning)
    return GuardResult(ratio=ratio, valid=ratio < limit, limit=limit)


@dataclass(frozen=True)
class Block:
    """One joint eigenspace of the diagonal conserved operators."""

    key: tuple[float, ...]
    indices: tuple[int, ...]
    touches_truncation: bool


def conserved_blocks(model: ModelInstance) -> list[Block]:
    """Group basis states by the joint eigenvalues of the conserved operators.

    Blocks containing a state at the Fock truncation edge of any mode are
    flagged, since their spectra and dynamics are affected by the cutoff.
    """
    space = model.space
    diags = []
    for name, op in model.conserved.items():
        offd = op.matrix - np.diag(op.diagonal())
        if float(np.linalg.norm(offd)) > 1e-12 * max(1.0, op.norm()):
            raise ValueError(f"conserved operator {name} is not diagonal in the product basis")
        diags.append(op.diagonal().real)
    groups: dict[tuple, list[int]] = {}
    for idx in range(space.dim):
        key = tuple(round(float(d[idx]), 9) for d in diags)
        groups.setdefault(key, []).append(idx)
    blocks = []
    tops = tuple(m.n_max for m in space.modes)
    for key in sorted(groups):
        idxs = groups[key]
        touches = any(
            any(space.photons(i)[m] == tops[m] for m in range(len(tops)))
            for i in idxs)
        blocks.append(Block(key=key, indices=tuple(idxs), touches_truncation=touches))
    return blocks


def block_masks(model: ModelInstance, skip_truncated: bool = True) -> list[np.ndarray]:
    """Boolean masks for each conserved block, optionally skipping cutoff-touching ones."""
    out = []
    for blk in conserved_blocks(model):
        if skip_truncated and blk.touches_truncation:
            continue
        mask = np.zeros(model.space.dim, dtype=bool)
        mask[list(blk.indices)] = True
        out.append(mask)
    return out


def with_scaled_couplings(spec: ModelSpec, factor: float) -> ModelSpec:
    """Copy of ``spec`` with every coupling constant multiplied by ``factor``."""
    return replace(spec,
                   g=spec.g * factor,
                   couplings=tuple(g * factor for g in spec.couplings),
                   couplings_b=tuple(g * factor for g in spec.couplings_b))
