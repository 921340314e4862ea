"""Linear-optical networks for the triphoton probe-state generator.

The generator entangles three polarisation qubits (photons a, b, c in
dual-rail encoding, |H> = logical 0, |V> = logical 1) with two post-selected
CNOT gates: a non-universal CNOT (NCN) between a and b followed by a
universal CNOT (CN) between a and c.  Success is heralded by finding exactly
one photon in each dual-rail pair, with probabilities 1/2 (NCN), 1/9 (CN)
and 1/18 for the cascade.

Qubit/bit conventions used throughout the package:

* tensor order is (a, b, c); basis index = 4*q_a + 2*q_b + q_c;
* photon a passes the unknown phase once, b twice, c four times, so a
  component |q_a q_b q_c> accumulates phase exp[i*(q_a + 2 q_b + 4 q_c)*phi];
* ghz_state(j) spans the pair of basis states whose phase weights are
  {j, 7 - j}.
"""

from __future__ import annotations

import math

import numpy as np

from .fock import (
    DEFAULT_PHOTON_CUTOFF,
    FockError,
    FockPolynomial,
    LinearNetwork,
    ModeRegistry,
    SelectionPattern,
    apply_network,
    extract_qubit_state,
    post_select,
)

ETA_NCN = 0.5
ETA_CN = 1.0 / 3.0

# Canonical 8-mode ordering for the generator circuit.
GENERATOR_MODES = ("v_a", "a_V", "a_H", "b_H", "b_V", "c_V", "c_H", "v_c")

#: (H rail, V rail) per qubit, in qubit order (a, b, c).
DUAL_RAIL_PAIRS = ((("a_H",), ("a_V",)),
                   (("b_H",), ("b_V",)),
                   (("c_H",), ("c_V",)))


def generator_registry() -> ModeRegistry:
    return ModeRegistry(GENERATOR_MODES)


def build_ncn(eta1: float = ETA_NCN,
              registry: ModeRegistry | None = None) -> LinearNetwork:
    """Non-universal CNOT between photons a and b.

    Four splitters of reflectivity eta1 plus one mode swap; identity on the
    vacuum ports and on photon c.  With |H>_a input and a two-qubit state on
    (b, c), the post-selected action is CNOT_ab applied to |+>_a (x) |psi_bc>
    with success probability 1/2.
    """
    reg = registry or generator_registry()
    q = math.sqrt(eta1 * (1.0 - eta1))
    m = np.eye(8, dtype=complex)
    # Block on (a_V, a_H, b_H, b_V) = rows/cols 1..4.
    m[1:5, 1:5] = np.array([
        [eta1,        q,           -q,          1.0 - eta1],
        [q,           1.0 - eta1,  eta1,        -q],
        [-q,          eta1,        1.0 - eta1,  q],
        [1.0 - eta1,  -q,          q,           1.0 - eta1],
    ])
    return _embed(reg, m)


def build_cn(eta2: float = ETA_CN,
             registry: ModeRegistry | None = None) -> LinearNetwork:
    """Universal CNOT between photons a (control) and c (target).

    The target rails form a polarisation interferometer (two 50:50
    elements); inside it, the upper arm meets a_H on the central splitter
    of reflectivity eta2 while the lower arm and a_V each meet a vacuum
    port on side splitters of the same reflectivity.  Post-selected on one
    photon per pair this acts as CNOT_ac with amplitude sqrt(eta2) on every
    two-qubit input, i.e. success probability 1/9 at eta2 = 1/3.

    Built compositionally from the five elements; the sign conventions are
    pinned by requiring the post-selected action to be exactly CNOT (no
    residual local phases), which the golden test locks in.
    """
    reg = registry or generator_registry()
    r = math.sqrt(eta2)
    t = math.sqrt(1.0 - eta2)
    h = math.sqrt(0.5)

    def block(rows_cols: dict[tuple[str, str], float]) -> np.ndarray:
        m = np.eye(8, dtype=complex)
        touched = {i for (a, _) in rows_cols for i in (GENERATOR_MODES.index(a),)}
        for i in touched:
            m[i, i] = 0.0
        for (row, col), val in rows_cols.items():
            m[GENERATOR_MODES.index(row), GENERATOR_MODES.index(col)] = val
        return m

    w_in = block({("c_V", "c_V"): h, ("c_V", "c_H"): h,
                  ("c_H", "c_V"): -h, ("c_H", "c_H"): h})
    mid = block({("a_H", "a_H"): -r, ("a_H", "c_V"): t,      # central, with a_H
                 ("c_V", "a_H"): t, ("c_V", "c_V"): r,
                 ("c_H", "c_H"): r, ("c_H", "v_c"): t,       # lower arm, with v_c
                 ("v_c", "c_H"): t, ("v_c", "v_c"): -r,
                 ("v_a", "v_a"): -r, ("v_a", "a_V"): t,      # control side, with v_a
                 ("a_V", "v_a"): t, ("a_V", "a_V"): r})
    w_out = block({("c_V", "c_V"): h, ("c_V", "c_H"): h,
                   ("c_H", "c_V"): h, ("c_H", "c_H"): -h})
    return _embed(reg, w_out @ mid @ w_in)


def _embed(registry: ModeRegistry, base: np.ndarray) -> LinearNetwork:
    """Place an 8x8 matrix given in GENERATOR_MODES order onto `registry`."""
    if registry.names == GENERATOR_MODES:
        return LinearNetwork(registry, base)
    m = np.eye(registry.size, dtype=complex)
    idx = registry.indices(GENERATOR_MODES)
    for i, gi in enumerate(idx):
        for j, gj in enumerate(idx):
            m[gi, gj] = base[i, j]
    return LinearNetwork(registry, m)


# ---------------------------------------------------------------------------
# Target states
# ---------------------------------------------------------------------------

def optimal_amplitudes(n_resources: int) -> np.ndarray:
    """Normalised probe amplitudes sin[(n+1) pi / (N+2)] over phase weight n.

    n_resources must be of the form 2**(K+1) - 1 so the amplitudes fill a
    (K+1)-qubit register.
    """
    n = int(n_resources)
    if n < 1 or (n + 1) & n:
        raise FockError(f"resource count {n} is not of the form 2**(K+1) - 1")
    psi = np.sin((np.arange(n + 1) + 1) * np.pi / (n + 2))
    return psi / np.linalg.norm(psi)


def optimal_pair_coefficients() -> np.ndarray:
    """The four coefficients sqrt(2/N) sin[(j+1) pi / 9] of the N=7 probe."""
    psi = optimal_amplitudes(7)
    return math.sqrt(2.0) * psi[:4]


def ghz_state(j: int, n_qubits: int = 3) -> np.ndarray:
    """GHZ-type vector spanning the basis pair with phase weights {j, 2^K+1-1-j}.

    Phase weight of |q_0 ... q_K> is sum_k q_k 2^k (qubit k passes the phase
    2^k times); the basis index convention is big-endian in qubit order.
    """
    dim = 2 ** n_qubits
    if not 0 <= j < dim // 2:
        raise FockError(f"GHZ index {j} outside [0, {dim // 2})")
    vec = np.zeros(dim, dtype=complex)
    for p in (j, dim - 1 - j):
        bits = [(p >> k) & 1 for k in range(n_qubits)]        # q_k from weight
        idx = sum(b << (n_qubits - 1 - k) for k, b in enumerate(bits))
        vec[idx] = 1.0 / math.sqrt(2.0)
    return vec


def optimal_state_vector() -> np.ndarray:
    """The N=7 probe state as an 8-component vector (tensor order a, b, c)."""
    alpha = optimal_pair_coefficients()
    vec = np.zeros(8, dtype=complex)
    for j, a in enumerate(alpha):
        vec += a * ghz_state(j)
    return vec


def qpea_state_vector(n_qubits: int = 3) -> np.ndarray:
    """Product |+>^(K+1) probe used by the plain phase estimation algorithm."""
    dim = 2 ** n_qubits
    return np.full(dim, 1.0 / math.sqrt(dim), dtype=complex)


def optimal_input_amplitudes() -> np.ndarray:
    """Two-photon input coefficients (|HH>, |HV>, |VH>, |VV> on b, c).

    The |b c> component ends up on the basis pair of phase weight
    2 q_b + 4 q_c, so the HV and VV slots carry the j=3 and j=1 pair
    coefficients respectively.
    """
    alpha = optimal_pair_coefficients()
    return np.array([alpha[0], alpha[3], alpha[2], alpha[1]])


def prepare_input(alpha: np.ndarray,
                  registry: ModeRegistry | None = None,
                  cutoff: int = DEFAULT_PHOTON_CUTOFF) -> FockPolynomial:
    """Three-photon generator input a_H^dag (x) sum_bc alpha_bc b^dag c^dag."""
    alpha = np.asarray(alpha, dtype=complex)
    if alpha.shape != (4,):
        raise FockError("expected four input amplitudes")
    if abs(np.linalg.norm(alpha) - 1.0) > 1e-9:
        raise FockError("input amplitudes must be normalised")
    reg = registry or generator_registry()
    terms = {}
    for k, (bm, cm) in enumerate((("b_H", "c_H"), ("b_H", "c_V"),
                                  ("b_V", "c_H"), ("b_V", "c_V"))):
        occ = [0] * reg.size
        occ[reg.index("a_H")] += 1
        occ[reg.index(bm)] += 1
        occ[reg.index(cm)] += 1
        terms[tuple(occ)] = alpha[k]
    return FockPolynomial(reg, terms, cutoff)


def qubit_subspace_patterns(pairs=DUAL_RAIL_PAIRS) -> list[SelectionPattern]:
    """Patterns whose union selects exactly one photon per dual-rail pair.

    One Exactly pattern per computational basis state; modes outside the
    pairs are left unconstrained.  Requires single-mode rails.
    """
    pats = []
    for bits in range(2 ** len(pairs)):
        counts: dict[str, int] = {}
        for q, (h, v) in enumerate(pairs):
            if len(h) != 1 or len(v) != 1:
                raise FockError("qubit_subspace_patterns needs single-mode rails")
            hit_v = (bits >> (len(pairs) - 1 - q)) & 1
            counts[h[0]] = 0 if hit_v else 1
            counts[v[0]] = 1 if hit_v else 0
        pats.append(SelectionPattern.exactly(counts))
    return pats


def generate_optimal_state(noise=None, cutoff: int = DEFAULT_PHOTON_CUTOFF
                           ) -> tuple[np.ndarray, float]:
    """Run the NCN + CN cascade and post-select the three-qubit output.

    Without noise this returns (|psi_opt><psi_opt|, 1/18) up to numerical
    precision.  With a NoiseConfig it defers to the noise model pipeline.
    """
    if noise is not None:
        from .noise import noisy_probe_state
        return noisy_probe_state(noise)
    reg = generator_registry()
    state = prepare_input(optimal_input_amplitudes(), reg, cutoff)
    state = apply_network(state, build_ncn(registry=reg))
    state = apply_network(state, build_cn(registry=reg))
    kept, prob = post_select(state, qubit_subspace_patterns(), renormalize=True)
    rho, _ = extract_qubit_state(kept, DUAL_RAIL_PAIRS)
    return rho, prob
