"""Imperfection models for the probe-state generator.

Three experimental defects are modelled, each with explicit auxiliary
vacuum modes so every network stays unitary:

* optical mode mismatch: before an interference point, a beam is split by a
  reflectivity-xi beam splitter into a matched component and an unmatched
  copy that traverses the same optics in its own internal label without
  interfering with anything.  After the interference point the two
  components recombine on a second xi splitter into the single detected
  mode; the residual amplitude leaks into a dumped (traced, never
  post-selected) port.  At xi = 1 the construction is exactly the identity;
  the recombined unmatched amplitude reaches the detectors and counts
  toward clicks, while leaked events simply fail the coincidence;
* detector inefficiency: a detected path ends in a reflectivity-zeta
  splitter whose transmitted (detected) amplitude is sqrt(zeta), the rest
  going to an untraced sink.  Because every accepted event carries exactly
  three detected photons, the qubit-rail inefficiency factors out of the
  post-selected state as a pure zeta^3 rate factor (the amplitudes in which
  surplus photons head to a rail detector and go unseen are part of the
  neglected higher orders); the herald-path splitter is kept explicit since
  multi-pair events fire the trigger more often than single pairs;
* multi-pair emission: the two down-conversion sources are expanded to the
  printed truncation orders in their overall efficiencies, and only the
  amplitude sectors able to produce a fourfold click (trigger plus one
  click per dual-rail pair) are propagated.  Multi-photon emission
  components enter with the printed expansion coefficients as their
  Fock-basis amplitudes, i.e. without same-mode bosonic n! enhancement.

Detectors are threshold (click / no-click).  A valid generation event needs
the trigger bundle occupied (when a heralded source is active) and, on each
dual-rail pair, photons on exactly one polarisation rail; events with both
rails of a pair occupied have no logical readout and are rejected, matching
fourfold coincidence logic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .circuits import (
    GENERATOR_MODES,
    build_cn,
    build_ncn,
    optimal_input_amplitudes,
)
from .fock import (
    DEFAULT_PHOTON_CUTOFF,
    FockError,
    FockPolynomial,
    LinearNetwork,
    ModeRegistry,
    apply_network,
    beamsplitter,
    extract_qubit_state,
    from_fock_amplitudes,
    select_terms,
)

#: mismatch sites: label -> beam modes split at that site, in circuit order.
#: s1, s2 sit before the first gate (beams a and b); s3, s4 before the
#: second (beams a and c).
MISMATCH_SITES = {
    "s1": ("a_H", "a_V"),
    "s2": ("b_H", "b_V"),
    "s3": ("a_H", "a_V"),
    "s4": ("c_H", "c_V"),
}

DETECTED_MODES = ("a_H", "a_V", "b_H", "b_V", "c_H", "c_V")
TRIGGER = "trig"

EPS_MAX = 0.2


class NoiseModelError(FockError):
    """Invalid noise configuration."""


@dataclass(frozen=True)
class NoiseConfig:
    """Imperfection parameters.

    xi may be a single overlap reflectivity applied to every mismatch site
    or a mapping from site label (s1..s4) to a value; unlisted sites default
    to 1 (perfect overlap).  zeta is the total heralding/detection
    efficiency per detected path.  eps1 and eps2 are the overall
    efficiencies of the heralded and the entangled-pair source; zero means
    an ideal single-photon input on that side.
    """

    xi: float | Mapping[str, float] = 1.0
    zeta: float = 0.13
    eps1: float = 0.0
    eps2: float = 0.0

    def __post_init__(self):
        for site, val in self.xi_by_site().items():
            if not 0.0 <= val <= 1.0:
                raise NoiseModelError(f"xi[{site}]={val} outside [0, 1]")
        if not 0.0 <= self.zeta <= 1.0:
            raise NoiseModelError(f"zeta={self.zeta} outside [0, 1]")
        for name, eps in (("eps1", self.eps1), ("eps2", self.eps2)):
            if not 0.0 <= eps <= EPS_MAX:
                raise NoiseModelError(f"{name}={eps} outside [0, {EPS_MAX}]")

    def xi_by_site(self) -> dict[str, float]:
        if isinstance(self.xi, Mapping):
            unknown = set(self.xi) - set(MISMATCH_SITES)
            if unknown:
                raise NoiseModelError(f"unknown mismatch sites {sorted(unknown)}")
            return {s: float(self.xi.get(s, 1.0)) for s in MISMATCH_SITES}
        return {s: float(self.xi) for s in MISMATCH_SITES}

    @property
    def has_mismatch(self) -> bool:
        return any(v < 1.0 for v in self.xi_by_site().values())

    @property
    def has_spdc(self) -> bool:
        return self.eps1 > 0.0 or self.eps2 > 0.0


# ---------------------------------------------------------------------------
# Network builders
# ---------------------------------------------------------------------------

def insert_mismatch(registry: ModeRegistry, beam_modes, site_label: str,
                    xi: float) -> LinearNetwork:
    """Splitter exchanging amplitude sqrt(1 - xi) of each beam mode with its
    unmatched copy for the given site label.

    The same element is applied once before the interference point (split)
    and once after it (recombine); since the splitter is an involution the
    sandwich is exactly the identity when the enclosed optics treat the two
    labels identically, and in particular whenever xi = 1.
    """
    if not 0.0 <= xi <= 1.0:
        raise NoiseModelError(f"xi={xi} outside [0, 1]")
    net = LinearNetwork.identity(registry)
    for phys in beam_modes:
        net = net.then(beamsplitter(registry, f"{phys}.m",
                                    f"{phys}.{site_label}", xi))
    return net


def insert_loss(registry: ModeRegistry, path_mode: str, sink_mode: str,
                zeta: float) -> LinearNetwork:
    """Detection-efficiency splitter: transmitted (detected) amplitude
    sqrt(zeta), remainder into an untraced sink mode."""
    if not 0.0 <= zeta <= 1.0:
        raise NoiseModelError(f"zeta={zeta} outside [0, 1]")
    return beamsplitter(registry, path_mode, sink_mode, zeta)


def _lift(base8: LinearNetwork, registry: ModeRegistry,
          labels: tuple[str, ...]) -> LinearNetwork:
    """Embed an 8-mode generator network block-diagonally over all labels."""
    m = np.eye(registry.size, dtype=complex)
    for lab in labels:
        idx = registry.indices(tuple(f"{p}.{lab}" for p in GENERATOR_MODES))
        for i, gi in enumerate(idx):
            for j, gj in enumerate(idx):
                m[gi, gj] = base8.matrix[i, j]
    return LinearNetwork(registry, m)


def polarization_rotation(registry: ModeRegistry, h_mode: str, v_mode: str,
                          theta: float) -> LinearNetwork:
    """Tunable polarisation rotation on one beam: h -> cos h + sin v,
    v -> -sin h + cos v."""
    m = np.eye(registry.size, dtype=complex)
    i, j = registry.index(h_mode), registry.index(v_mode)
    c, s = math.cos(theta), math.sin(theta)
    m[i, i], m[i, j] = c, -s
    m[j, i], m[j, j] = s, c
    return LinearNetwork(registry, m)


# ---------------------------------------------------------------------------
# Hong-Ou-Mandel diagnostic
# ---------------------------------------------------------------------------

def hom_visibility(xi1: float, xi2: float) -> tuple[float, float]:
    """Coincidence probability and dip visibility for a 50:50 splitter fed
    with one photon per port, each port matched by overlap xi_j.

    Returns (p_coin, visibility) = ((1 - xi1 xi2) / 2, xi1 xi2).
    """
    for v in (xi1, xi2):
        if not 0.0 <= v <= 1.0:
            raise NoiseModelError(f"overlap {v} outside [0, 1]")
    return 0.5 * (1.0 - xi1 * xi2), xi1 * xi2


def hom_bench_coincidence(xi1: float, xi2: float, eta: float = 0.5) -> float:
    """Brute-force coincidence probability from the full mode calculation.

    Builds the six-mode bench (two input beams, one unmatched copy each),
    evolves the two-photon state and evaluates the product of bundle photon
    numbers seen by the two detectors.  Cross-checks hom_visibility.
    """
    labels = ("m", "s1", "s2")
    reg = ModeRegistry(tuple(f"{p}.{lab}" for lab in labels for p in ("a", "b")))
    state = FockPolynomial.from_occupations(reg, {"a.m": 1, "b.m": 1}, cutoff=4)
    net = beamsplitter(reg, "a.m", "a.s1", xi1)
    net = net.then(beamsplitter(reg, "b.m", "b.s2", xi2))
    for lab in labels:
        net = net.then(beamsplitter(reg, f"a.{lab}", f"b.{lab}", eta))
    out = apply_network(state, net)
    return float(np.real(
        _bundle_product(out, [tuple(f"a.{lab}" for lab in labels),
                              tuple(f"b.{lab}" for lab in labels)])))


def _bundle_product(state, bundles):
    from .fock import bundle_number_expectation
    return bundle_number_expectation(state, bundles)


# ---------------------------------------------------------------------------
# Down-conversion sources
# ---------------------------------------------------------------------------

HERALDED = "heralded"
ENTANGLED_PAIR = "entangled_pair"


@dataclass(frozen=True)
class SpdcSpec:
    """One down-conversion source, expanded to its printed truncation order.

    Heralded sources are expanded to third order in eps (signal photons in
    a_H, partners in the trigger).  Entangled-pair sources are expanded to
    second order, with pump amplitudes (beta, gamma) weighting the V and H
    pair terms; |beta|^2 + |gamma|^2 = 1.
    """

    kind: str
    eps: float
    beta: float = 0.0
    gamma: float = 1.0

    def __post_init__(self):
        if self.kind not in (HERALDED, ENTANGLED_PAIR):
            raise NoiseModelError(f"unknown source kind {self.kind!r}")
        if not 0.0 <= self.eps <= EPS_MAX:
            raise NoiseModelError(f"eps={self.eps} outside [0, {EPS_MAX}]")
        if self.kind == ENTANGLED_PAIR:
            if abs(self.beta ** 2 + self.gamma ** 2 - 1.0) > 1e-9:
                raise NoiseModelError("pump amplitudes must satisfy "
                                      "beta^2 + gamma^2 = 1")


def spdc_state(spec: SpdcSpec, registry: ModeRegistry,
               a_mode: str = "a_H", trigger: str = TRIGGER,
               b_modes: tuple[str, str] = ("b_H", "b_V"),
               c_modes: tuple[str, str] = ("c_H", "c_V"),
               cutoff: int = DEFAULT_PHOTON_CUTOFF) -> FockPolynomial:
    """Unnormalised multiphoton source polynomial, exactly as truncated."""
    vac = FockPolynomial.vacuum(registry, cutoff)
    if spec.kind == HERALDED:
        pair = FockPolynomial.from_occupations(
            registry, {a_mode: 1, trigger: 1}, cutoff=cutoff)
        out = vac
        power = vac
        for order, coeff in ((1, spec.eps), (2, spec.eps ** 2 / 2.0),
                             (3, spec.eps ** 3 / 6.0)):
            power = power.multiply(pair)
            out = _poly_add(out, power.scaled(coeff))
        return out
    bh, bv = b_modes
    ch, cv = c_modes
    hh = FockPolynomial.from_occupations(registry, {bh: 1, ch: 1}, cutoff=cutoff)
    vv = FockPolynomial.from_occupations(registry, {bv: 1, cv: 1}, cutoff=cutoff)
    single = _poly_add(hh.scaled(spec.gamma), vv.scaled(spec.beta))
    out = _poly_add(vac, single.scaled(spec.eps))
    out = _poly_add(out, single.multiply(single).scaled(spec.eps ** 2 / 2.0))
    return out


def _poly_add(a: FockPolynomial, b: FockPolynomial) -> FockPolynomial:
    terms = a.terms
    for occ, c in b.terms.items():
        terms[occ] = terms.get(occ, 0.0) + c
    return FockPolynomial(a.registry, terms, min(a.cutoff, b.cutoff))


def schmidt_rotations(target_alpha: np.ndarray
                      ) -> tuple[float, float, float, float]:
    """Factor a real two-qubit amplitude matrix into Schmidt form plus two
    local polarisation rotations.

    Returns (beta, gamma, theta_b, theta_c) such that rotating the pair
    state gamma |HH> + beta |VV> by theta_b on beam b and theta_c on beam c
    reproduces target_alpha = (a_HH, a_HV, a_VH, a_VV).
    """
    alpha = np.asarray(target_alpha, dtype=float)
    if alpha.shape != (4,):
        raise NoiseModelError("expected four real amplitudes")
    if abs(np.linalg.norm(alpha) - 1.0) > 1e-9:
        raise NoiseModelError("target amplitudes must be normalised")
    a = alpha.reshape(2, 2)
    u, s, vt = np.linalg.svd(a)
    v = vt.T
    # Restrict both factors to proper rotations, folding signs into the
    # singular values.
    du, dv = np.linalg.det(u), np.linalg.det(v)
    u = u @ np.diag([1.0, du])
    v = v @ np.diag([1.0, dv])
    gamma = s[0]
    beta = s[1] * du * dv
    theta_b = math.atan2(u[1, 0], u[0, 0])
    theta_c = math.atan2(v[1, 0], v[0, 0])
    return float(beta), float(gamma), float(theta_b), float(theta_c)


def epsilon_from_counts(coincidences: float, pulse_rate: float,
                        lambda_i: float, lambda_s: float) -> float:
    """Overall source efficiency from a coincidence rate:
    eps = sqrt(C / (R lambda_i lambda_s))."""
    if coincidences < 0.0:
        raise NoiseModelError("coincidence rate must be non-negative")
    denom = pulse_rate * lambda_i * lambda_s
    if denom <= 0.0 or not (0.0 < lambda_i <= 1.0 and 0.0 < lambda_s <= 1.0):
        raise NoiseModelError("pulse rate and heralding efficiencies must be "
                              "positive with lambdas in (0, 1]")
    return math.sqrt(coincidences / denom)


# ---------------------------------------------------------------------------
# Full probe-state pipeline
# ---------------------------------------------------------------------------

MODE_MISMATCH = "mismatch"
MODE_SPDC = "spdc"
MODE_COMBINED = "combined"

#: amplitude sectors (trigger photons, pair emissions) kept for fourfold
#: post-selection; everything of higher order is neglected.
KEPT_SPDC_SECTORS = ((1, 1), (2, 1), (1, 2), (3, 0))


def noisy_probe_state(config: NoiseConfig, mode: str | None = None,
                      cutoff: int = DEFAULT_PHOTON_CUTOFF,
                      target_alpha: np.ndarray | None = None,
                      explicit_rail_loss: bool = False
                      ) -> tuple[np.ndarray, float]:
    """Generate the three-qubit probe through the imperfect circuit.

    Builds the source polynomial, applies the mismatch sandwiches, both
    gates and the herald-path loss, post-selects threshold click patterns,
    traces auxiliary and loss modes, and returns (rho, success_probability).
    rho is the generally mixed 3-qubit density matrix; the probability is
    per input triple for ideal sources, per pump pulse for down-conversion
    sources, and includes the zeta^3 detection factor of the three
    registered photons.

    `mode` guards against accidentally mixing the imperfection studies:
    "mismatch" requires ideal sources, "spdc" perfect overlap; "combined"
    (or None) allows both at once.

    With explicit_rail_loss the qubit rails get real loss splitters instead
    of the factored zeta^3 rate.  For fixed-photon-number inputs the
    post-selected state is provably identical either way (a property test
    exercises this); for multi-pair sources the explicit variant includes
    surplus-photon-undetected amplitudes that the published truncation
    neglects.
    """
    if mode == MODE_MISMATCH and config.has_spdc:
        raise NoiseModelError("mismatch mode expects eps1 = eps2 = 0")
    if mode == MODE_SPDC and config.has_mismatch:
        raise NoiseModelError("spdc mode expects xi = 1 everywhere")
    if mode not in (None, MODE_MISMATCH, MODE_SPDC, MODE_COMBINED):
        raise NoiseModelError(f"unknown noise mode {mode!r}")

    xi = config.xi_by_site()
    labels = ("m",) + tuple(s for s in MISMATCH_SITES if xi[s] < 1.0)
    use_trigger = config.has_spdc
    lossy = config.zeta < 1.0

    names = [f"{p}.{lab}" for lab in labels for p in GENERATOR_MODES]
    rail_sinks = [f"sink.{p}" for p in DETECTED_MODES] \
        if (explicit_rail_loss and lossy) else []
    names.extend(rail_sinks)
    if use_trigger:
        names.append(TRIGGER)
        if lossy:
            names.append(f"sink.{TRIGGER}")
    registry = ModeRegistry(tuple(names))

    state = _source_polynomial(config, registry, labels, cutoff, target_alpha)

    def sandwich(site):
        return insert_mismatch(registry, MISMATCH_SITES[site], site, xi[site])

    ncn_sites = tuple(s for s in ("s1", "s2") if s in labels)
    cn_sites = tuple(s for s in ("s3", "s4") if s in labels)
    net = LinearNetwork.identity(registry)
    for site in ncn_sites:
        net = net.then(sandwich(site))
    net = net.then(_lift(build_ncn(), registry, labels))
    for site in ncn_sites:
        net = net.then(sandwich(site))          # recombine
    for site in cn_sites:
        net = net.then(sandwich(site))
    net = net.then(_lift(build_cn(), registry, labels))
    for site in cn_sites:
        net = net.then(sandwich(site))          # recombine
    for p in (DETECTED_MODES if rail_sinks else ()):
        net = net.then(insert_loss(registry, f"{p}.m", f"sink.{p}", config.zeta))
    if use_trigger and lossy:
        net = net.then(insert_loss(registry, TRIGGER, f"sink.{TRIGGER}",
                                   config.zeta))
    state = apply_network(state, net)

    pair_rails = [((f"{h}.m",), (f"{v}.m",))
                  for h, v in (("a_H", "a_V"), ("b_H", "b_V"), ("c_H", "c_V"))]
    rail_idx = [(registry.indices(h), registry.indices(v)) for h, v in pair_rails]
    trig_idx = registry.index(TRIGGER) if use_trigger else None

    def clicked(occ):
        if trig_idx is not None and occ[trig_idx] < 1:
            return False
        for hi, vi in rail_idx:
            nh = sum(occ[i] for i in hi)
            nv = sum(occ[i] for i in vi)
            if (nh > 0) == (nv > 0):
                return False
        return True

    kept, prob = select_terms(state, clicked)
    if prob < 1e-30:
        raise NoiseModelError("post-selection kept no amplitude")
    rho, _ = extract_qubit_state(kept.scaled(1.0 / math.sqrt(prob)), pair_rails)
    rho = _psd_guard(rho)
    if not rail_sinks:
        prob *= config.zeta ** 3
    return rho, float(prob)


def _source_polynomial(config: NoiseConfig, registry: ModeRegistry,
                       labels, cutoff: int,
                       target_alpha: np.ndarray | None) -> FockPolynomial:
    """Input polynomial on the matched label, already Schmidt-rotated and
    restricted to the amplitude sectors that can produce a fourfold click."""
    alpha = optimal_input_amplitudes() if target_alpha is None \
        else np.asarray(target_alpha, dtype=float)
    if not config.has_spdc:
        terms = {}
        for k, (bm, cm) in enumerate((("b_H", "c_H"), ("b_H", "c_V"),
                                      ("b_V", "c_H"), ("b_V", "c_V"))):
            occ = [0] * registry.size
            occ[registry.index("a_H.m")] += 1
            occ[registry.index(f"{bm}.m")] += 1
            occ[registry.index(f"{cm}.m")] += 1
            terms[tuple(occ)] = alpha[k]
        return FockPolynomial(registry, terms, cutoff)

    beta, gamma, theta_b, theta_c = schmidt_rotations(alpha)
    rotations = polarization_rotation(
        registry, "b_H.m", "b_V.m", theta_b).then(polarization_rotation(
            registry, "c_H.m", "c_V.m", theta_c))
    single_pair = _poly_add(
        FockPolynomial.from_occupations(registry, {"b_H.m": 1, "c_H.m": 1},
                                        gamma, cutoff),
        FockPolynomial.from_occupations(registry, {"b_V.m": 1, "c_V.m": 1},
                                        beta, cutoff))

    def heralded_order(p: int) -> FockPolynomial:
        return FockPolynomial.from_occupations(
            registry, {"a_H.m": p, TRIGGER: p},
            config.eps1 ** p / math.factorial(p), cutoff)

    def pair_order(q: int) -> FockPolynomial:
        out = FockPolynomial.vacuum(registry, cutoff).scaled(
            config.eps2 ** q / math.factorial(q))
        for _ in range(q):
            out = out.multiply(single_pair)
        return apply_network(out, rotations)

    # Sectors with different trigger or pair counts never interfere after
    # photon-number-conserving evolution, so a plain sum is exact.
    state = FockPolynomial(registry, {}, cutoff)
    for p, q in KEPT_SPDC_SECTORS:
        state = _poly_add(state, heralded_order(p).multiply(pair_order(q)))
    # Multi-pair components carry the printed expansion coefficients as
    # their Fock amplitudes (no same-mode n! enhancement).
    return from_fock_amplitudes(registry, state.terms, cutoff)


def _psd_guard(rho: np.ndarray, clip_tol: float = 1e-9) -> np.ndarray:
    """Clip tiny negative eigenvalues; error on anything worse."""
    vals, vecs = np.linalg.eigh(rho)
    if vals.min() < -clip_tol:
        raise NoiseModelError(f"reduced state has eigenvalue {vals.min():.3e}")
    if vals.min() >= 0.0:
        return rho
    vals = np.clip(vals, 0.0, None)
    rho = (vecs * vals) @ vecs.conj().T
    return rho / np.trace(rho).real
