"""Sparse multimode bosonic states and their evolution through linear networks.

A state is stored as a polynomial in creation operators acting on the vacuum:

    |psi> = sum_k  c_k * prod_m (a_m^dag)^(n_km) |0>

Each monomial is a tuple of per-mode occupations (the powers n_km) keyed
against a complex coefficient.  This sparse form wins over a dense Fock
tensor here because the circuits have many modes (up to ~70 once auxiliary
mismatch and loss modes are added) but few photons (<= 6).

Conversion to the orthonormal Fock basis happens only at measurement time:
the amplitude of |n_1 ... n_M> is  c * sqrt(prod_m n_m!).

All objects are treated as immutable after construction; the operations
below are pure functions and safe to evaluate concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

# Numerical policy: double precision with <= ~1e4-term polynomials.
TAU_UNITARY = 1e-10      # tolerance on S^dag S = I
TAU_PRUNE = 1e-14        # coefficients below this magnitude are dropped
NORM_TOL = 1e-9          # tolerance on state normalisation checks
DEFAULT_PHOTON_CUTOFF = 6


class FockError(ValueError):
    """Base class for errors raised by this module."""


class RegistryMismatchError(FockError):
    """Two objects refer to different mode registries."""


class NonUnitaryNetworkError(FockError):
    """Network matrix fails the unitarity check."""


class PhotonCutoffError(FockError):
    """A monomial exceeded the configured total photon number."""


class EmptySelectionError(FockError):
    """Post-selection removed (numerically) all amplitude."""


class SubspaceError(FockError):
    """State has weight outside the requested qubit subspace."""


@dataclass(frozen=True)
class ModeRegistry:
    """Ordered, immutable list of mode labels.

    The ordering is load-bearing: every occupation tuple and every network
    matrix row/column refers to it.
    """

    names: tuple[str, ...]

    def __post_init__(self):
        if len(set(self.names)) != len(self.names):
            raise FockError(f"duplicate mode labels in {self.names}")
        if not self.names:
            raise FockError("registry needs at least one mode")
        object.__setattr__(self, "_index", {n: i for i, n in enumerate(self.names)})

    @property
    def size(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise FockError(f"unknown mode {name!r}") from None

    def indices(self, names: Iterable[str]) -> tuple[int, ...]:
        return tuple(self.index(n) for n in names)


def _occupation_factorial(occ: tuple[int, ...]) -> float:
    f = 1.0
    for n in occ:
        if n > 1:
            f *= math.factorial(n)
    return f


class FockPolynomial:
    """Complex-weighted sum of creation-operator monomials over a registry."""

    __slots__ = ("registry", "cutoff", "_terms")

    def __init__(self, registry: ModeRegistry,
                 terms: Mapping[tuple[int, ...], complex],
                 cutoff: int = DEFAULT_PHOTON_CUTOFF):
        self.registry = registry
        self.cutoff = cutoff
        clean: dict[tuple[int, ...], complex] = {}
        for occ, c in terms.items():
            if len(occ) != registry.size:
                raise RegistryMismatchError(
                    f"occupation length {len(occ)} != registry size {registry.size}")
            if any(n < 0 for n in occ):
                raise FockError(f"negative occupation in {occ}")
            if sum(occ) > cutoff:
                raise PhotonCutoffError(
                    f"monomial with {sum(occ)} photons exceeds cutoff {cutoff}")
            c = complex(c)
            if abs(c) > TAU_PRUNE:
                clean[tuple(occ)] = c
        self._terms = clean

    # -- constructors ---------------------------------------------------

    @classmethod
    def vacuum(cls, registry: ModeRegistry,
               cutoff: int = DEFAULT_PHOTON_CUTOFF) -> "FockPolynomial":
        return cls(registry, {(0,) * registry.size: 1.0}, cutoff)

    @classmethod
    def from_occupations(cls, registry: ModeRegistry,
                         occupations: Mapping[str, int],
                         coeff: complex = 1.0,
                         cutoff: int = DEFAULT_PHOTON_CUTOFF) -> "FockPolynomial":
        """Single monomial given as {mode name: photon count}."""
        occ = [0] * registry.size
        for name, n in occupations.items():
            occ[registry.index(name)] = int(n)
        return cls(registry, {tuple(occ): coeff}, cutoff)

    # -- inspection -----------------------------------------------------

    @property
    def terms(self) -> dict[tuple[int, ...], complex]:
        return dict(self._terms)

    def __len__(self) -> int:
        return len(self._terms)

    def coefficient(self, occupations: Mapping[str, int]) -> complex:
        occ = [0] * self.registry.size
        for name, n in occupations.items():
            occ[self.registry.index(name)] = int(n)
        return self._terms.get(tuple(occ), 0.0)

    def squared_norm(self) -> float:
        """<psi|psi>, including the n! factors of the Fock inner product."""
        return float(sum(abs(c) ** 2 * _occupation_factorial(occ)
                         for occ, c in self._terms.items()))

    def scaled(self, factor: complex) -> "FockPolynomial":
        return FockPolynomial(
            self.registry, {o: c * factor for o, c in self._terms.items()},
            self.cutoff)

    def normalized(self) -> "FockPolynomial":
        n2 = self.squared_norm()
        if n2 < 1e-30:
            raise EmptySelectionError("cannot normalise a null state")
        return self.scaled(1.0 / math.sqrt(n2))

    def multiply(self, other: "FockPolynomial") -> "FockPolynomial":
        """Operator product: concatenates monomials (adds occupations).

        Raises PhotonCutoffError if any product monomial exceeds the cutoff.
        """
        if other.registry is not self.registry and other.registry != self.registry:
            raise RegistryMismatchError("product factors use different registries")
        cutoff = min(self.cutoff, other.cutoff)
        out: dict[tuple[int, ...], complex] = {}
        for occ_a, ca in self._terms.items():
            for occ_b, cb in other._terms.items():
                occ = tuple(x + y for x, y in zip(occ_a, occ_b))
                if sum(occ) > cutoff:
                    raise PhotonCutoffError(
                        f"product monomial with {sum(occ)} photons exceeds "
                        f"cutoff {cutoff}")
                out[occ] = out.get(occ, 0.0) + ca * cb
        return FockPolynomial(self.registry, out, cutoff)

    def __repr__(self) -> str:
        return (f"FockPolynomial({len(self._terms)} terms, "
                f"{self.registry.size} modes, |.|^2={self.squared_norm():.6g})")


@dataclass(frozen=True)
class LinearNetwork:
    """M x M transfer matrix acting on the mode operators of a registry.

    The matrix must be unitary: loss is never modelled by a sub-unitary
    block but by explicit beam splitters into auxiliary vacuum modes.
    """

    registry: ModeRegistry
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (self.registry.size, self.registry.size):
            raise RegistryMismatchError(
                f"matrix shape {m.shape} != registry size {self.registry.size}")
        dev = np.max(np.abs(m.conj().T @ m - np.eye(self.registry.size)))
        if dev > TAU_UNITARY:
            raise NonUnitaryNetworkError(
                f"S^dag S deviates from identity by {dev:.3e}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def identity(cls, registry: ModeRegistry) -> "LinearNetwork":
        return cls(registry, np.eye(registry.size))

    def then(self, later: "LinearNetwork") -> "LinearNetwork":
        """Network equal to applying self first, then `later`."""
        if later.registry != self.registry:
            raise RegistryMismatchError("cannot compose networks on different registries")
        return LinearNetwork(self.registry, later.matrix @ self.matrix)


def beamsplitter(registry: ModeRegistry, mode_x: str, mode_y: str,
                 eta: float) -> LinearNetwork:
    """Two-mode splitter with (intensity) reflectivity eta.

    Convention: x keeps amplitude sqrt(eta), the cross amplitudes are
    sqrt(1 - eta), and the y -> y reflection carries the pi phase shift.
    """
    if not 0.0 <= eta <= 1.0:
        raise FockError(f"reflectivity {eta} outside [0, 1]")
    m = np.eye(registry.size, dtype=complex)
    i, j = registry.index(mode_x), registry.index(mode_y)
    r, t = math.sqrt(eta), math.sqrt(1.0 - eta)
    m[i, i], m[i, j] = r, t
    m[j, i], m[j, j] = t, -r
    return LinearNetwork(registry, m)


def mode_swap(registry: ModeRegistry, mode_x: str, mode_y: str) -> LinearNetwork:
    m = np.eye(registry.size, dtype=complex)
    i, j = registry.index(mode_x), registry.index(mode_y)
    m[i, i] = m[j, j] = 0.0
    m[i, j] = m[j, i] = 1.0
    return LinearNetwork(registry, m)


_PACK_BITS = 3  # occupations <= 7 per mode; safe for the cutoff ceiling of 6


def apply_network(state: FockPolynomial, net: LinearNetwork) -> FockPolynomial:
    """Evolve `state` through `net`.

    Each creation operator a_m^dag is substituted by the linear combination
    sum_j S[j, m] a_j^dag (column m of the transfer matrix), the product is
    expanded, like monomials are merged and small ones pruned.  Photon
    number per monomial is conserved, so the cutoff cannot be exceeded.

    Occupations are packed into integers (3 bits per mode) during the
    expansion so that adding a photon is a single integer addition; tuple
    keys are restored once at the end.
    """
    if net.registry != state.registry:
        raise RegistryMismatchError("state and network use different registries")
    if state.cutoff >= (1 << _PACK_BITS):
        raise PhotonCutoffError(
            f"cutoff {state.cutoff} exceeds the packed-occupation ceiling")
    size = state.registry.size
    cols: list[list[tuple[int, complex]]] = []
    for m in range(size):
        col = net.matrix[:, m]
        cols.append([(1 << (_PACK_BITS * int(j)), complex(col[j]))
                     for j in np.nonzero(np.abs(col) > TAU_PRUNE)[0]])

    out: dict[int, complex] = {}
    for occ, coeff in state._terms.items():
        # Expand prod_m (sum_j S[j,m] a_j^dag)^(occ[m]) term by term.
        partial: dict[int, complex] = {0: coeff}
        for m, n in enumerate(occ):
            col = cols[m]
            for _ in range(n):
                nxt: dict[int, complex] = {}
                get = nxt.get
                for pocc, pc in partial.items():
                    for inc, s in col:
                        key = pocc + inc
                        nxt[key] = get(key, 0.0) + pc * s
                partial = nxt
        for pocc, pc in partial.items():
            out[pocc] = out.get(pocc, 0.0) + pc

    mask = (1 << _PACK_BITS) - 1
    terms: dict[tuple[int, ...], complex] = {}
    for packed, c in out.items():
        if abs(c) <= TAU_PRUNE:
            continue
        occ = tuple((packed >> (_PACK_BITS * j)) & mask for j in range(size))
        terms[occ] = c
    return FockPolynomial(state.registry, terms, state.cutoff)


def to_fock_amplitudes(state: FockPolynomial) -> dict[tuple[int, ...], complex]:
    """Map occupation vector -> amplitude in the orthonormal Fock basis."""
    return {occ: c * math.sqrt(_occupation_factorial(occ))
            for occ, c in state._terms.items()}


def from_fock_amplitudes(registry: ModeRegistry,
                         amplitudes: Mapping[tuple[int, ...], complex],
                         cutoff: int = DEFAULT_PHOTON_CUTOFF) -> FockPolynomial:
    """Inverse of :func:`to_fock_amplitudes`."""
    return FockPolynomial(
        registry,
        {occ: a / math.sqrt(_occupation_factorial(occ))
         for occ, a in amplitudes.items()},
        cutoff)


# ---------------------------------------------------------------------------
# Post-selection
# ---------------------------------------------------------------------------

EXACTLY = "exactly"
AT_LEAST = "at_least"


@dataclass(frozen=True)
class SelectionPattern:
    """Per-mode photon-count constraints; unconstrained modes accept anything.

    constraints maps mode name -> (kind, n) with kind in {"exactly",
    "at_least"}.  At least one constraint is required.
    """

    constraints: tuple[tuple[str, str, int], ...]

    def __post_init__(self):
        if not self.constraints:
            raise FockError("pattern needs at least one constrained mode")
        for _, kind, n in self.constraints:
            if kind not in (EXACTLY, AT_LEAST):
                raise FockError(f"unknown constraint kind {kind!r}")
            if n < 0:
                raise FockError("constraint count must be non-negative")

    @classmethod
    def exactly(cls, counts: Mapping[str, int]) -> "SelectionPattern":
        return cls(tuple((m, EXACTLY, n) for m, n in counts.items()))

    @classmethod
    def at_least(cls, counts: Mapping[str, int]) -> "SelectionPattern":
        return cls(tuple((m, AT_LEAST, n) for m, n in counts.items()))

    def matches(self, occ: tuple[int, ...], registry: ModeRegistry) -> bool:
        for mode, kind, n in self.constraints:
            k = occ[registry.index(mode)]
            if kind == EXACTLY and k != n:
                return False
            if kind == AT_LEAST and k < n:
                return False
        return True


def select_terms(state: FockPolynomial,
                 keep: Callable[[tuple[int, ...]], bool],
                 renormalize: bool = False
                 ) -> tuple[FockPolynomial, float]:
    """Keep monomials for which `keep(occupation)` is true.

    Returns the filtered state and the success probability, i.e. the squared
    Fock norm of the kept part.  Assumes a normalised input when the success
    probability is to be read as a probability.
    """
    kept = {occ: c for occ, c in state._terms.items() if keep(occ)}
    prob = float(sum(abs(c) ** 2 * _occupation_factorial(occ)
                     for occ, c in kept.items()))
    out = FockPolynomial(state.registry, kept, state.cutoff)
    if renormalize:
        if prob < 1e-15:
            raise EmptySelectionError(
                "post-selection success probability is numerically zero")
        out = out.scaled(1.0 / math.sqrt(prob))
    return out, prob


def post_select(state: FockPolynomial,
                pattern: SelectionPattern | Sequence[SelectionPattern],
                renormalize: bool = False) -> tuple[FockPolynomial, float]:
    """Project onto the union of one or more per-mode selection patterns."""
    n2 = state.squared_norm()
    if abs(n2 - 1.0) > NORM_TOL:
        raise FockError(f"post_select expects a normalised input, |.|^2={n2:.3e}")
    patterns = [pattern] if isinstance(pattern, SelectionPattern) else list(pattern)
    reg = state.registry
    return select_terms(
        state, lambda occ: any(p.matches(occ, reg) for p in patterns),
        renormalize)


# ---------------------------------------------------------------------------
# Counting and qubit extraction
# ---------------------------------------------------------------------------

def bundle_number_expectation(state: FockPolynomial,
                              bundles: Sequence[Iterable[str]]) -> float:
    """Expectation of the product of total photon numbers of each bundle.

    The number operators are diagonal in the Fock basis, so this is a plain
    sum over |amplitude|^2 weighted by the per-bundle counts.
    """
    idx = [state.registry.indices(b) for b in bundles]
    flat = [i for grp in idx for i in grp]
    if len(set(flat)) != len(flat):
        raise FockError("bundles must be disjoint")
    total = 0.0
    for occ, c in state._terms.items():
        w = abs(c) ** 2 * _occupation_factorial(occ)
        for grp in idx:
            w *= sum(occ[i] for i in grp)
        total += w
    return float(total)


def extract_qubit_state(state: FockPolynomial,
                        pairs: Sequence[tuple[Sequence[str], Sequence[str]]],
                        residual_tol: float = 1e-9
                        ) -> tuple[np.ndarray, float]:
    """Reduce a post-selected polynomial to a dual-rail qubit density matrix.

    `pairs` lists, per qubit, the horizontal-rail and vertical-rail modes.
    Each rail may be a bundle of internal-label copies of the same physical
    mode; the two rails of a pair must list labels in the same order.  A
    monomial encodes logical 0 (1) on a qubit when only its H (V) rail is
    occupied.  All other modes, together with any photon count information
    beyond the logical bit (which label carries the photon, extra photons
    in the clicked rail), form the traced environment: coherence survives
    only between monomials with identical environment configuration.

    Returns (rho, weight): `rho` has unit trace, `weight` is the squared
    norm of the amplitude that was representable as qubits.  Raises
    SubspaceError if more than `residual_tol` of the input weight lies
    outside the qubit subspace (a pair with photons on both rails, or with
    none).
    """
    reg = state.registry
    h_idx = [reg.indices(h) for h, _ in pairs]
    v_idx = [reg.indices(v) for _, v in pairs]
    for hi, vi in zip(h_idx, v_idx):
        if len(hi) != len(vi):
            raise FockError("H and V rails of a pair must have equal length")
    pair_modes = {i for grp in h_idx + v_idx for i in grp}
    rest_idx = [i for i in range(reg.size) if i not in pair_modes]

    nq = len(pairs)
    dim = 2 ** nq
    groups: dict[tuple, np.ndarray] = {}
    bad_weight = 0.0
    total_weight = 0.0

    for occ, c in state._terms.items():
        amp = c * math.sqrt(_occupation_factorial(occ))
        total_weight += abs(amp) ** 2
        bits = 0
        env_pairs = []
        ok = True
        for q, (hi, vi) in enumerate(zip(h_idx, v_idx)):
            nh = sum(occ[i] for i in hi)
            nv = sum(occ[i] for i in vi)
            if (nh > 0) == (nv > 0):
                ok = False
                break
            if nv > 0:
                bits |= 1 << (nq - 1 - q)
            # Label-resolved counts with polarisation stripped: the traced
            # environment keeps which internal mode carries the photon(s).
            env_pairs.append(tuple(occ[a] + occ[b] for a, b in zip(hi, vi)))
        if not ok:
            bad_weight += abs(amp) ** 2
            continue
        key = (tuple(env_pairs), tuple(occ[i] for i in rest_idx))
        vec = groups.get(key)
        if vec is None:
            vec = np.zeros(dim, dtype=complex)
            groups[key] = vec
        vec[bits] += amp

    if total_weight < 1e-30:
        raise EmptySelectionError("no amplitude to extract a qubit state from")
    if bad_weight > residual_tol * total_weight:
        raise SubspaceError(
            f"{bad_weight / total_weight:.3e} of the weight lies outside the "
            f"qubit subspace; post-select first")

    rho = np.zeros((dim, dim), dtype=complex)
    for vec in groups.values():
        rho += np.outer(vec, vec.conj())
    weight = float(np.trace(rho).real)
    if weight < 1e-30:
        raise EmptySelectionError("qubit-subspace weight is numerically zero")
    return rho / weight, weight
