"""Line-oriented text format for density matrices.

Human-diffable and versioned:

    dmfile 1
    dim 8
    qubits 3
    # optional comment lines
    <d rows of 2d floats: re_0 im_0 re_1 im_1 ...>

Entries are written with 17 significant digits so load(save(rho)) is exact
at double precision.  On load the matrix is validated (Hermitian, unit
trace, eigenvalues >= -1e-6); small negative eigenvalues are clipped and
the state renormalised, with the repair reported to the caller.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1
HERMITIAN_TOL = 1e-6
TRACE_TOL = 1e-6
EIGEN_TOL = -1e-6


class StateFileError(ValueError):
    """Malformed or inconsistent density-matrix file."""


@dataclass
class LoadReport:
    """What the loader had to do to make the matrix a valid state."""

    clipped: bool = False
    min_eigenvalue: float = 0.0
    messages: list[str] = field(default_factory=list)


def save_density_matrix(path: str | Path, rho: np.ndarray,
                        comment: str | None = None) -> None:
    rho = np.asarray(rho, dtype=complex)
    d = rho.shape[0]
    if rho.shape != (d, d):
        raise StateFileError(f"matrix shape {rho.shape} is not square")
    n_qubits = d.bit_length() - 1
    if 2 ** n_qubits != d:
        raise StateFileError(f"dimension {d} is not a power of two")
    buf = io.StringIO()
    buf.write(f"dmfile {FORMAT_VERSION}\n")
    buf.write(f"dim {d}\n")
    buf.write(f"qubits {n_qubits}\n")
    if comment:
        for line in comment.splitlines():
            buf.write(f"# {line}\n")
    for i in range(d):
        buf.write(" ".join(f"{rho[i, j].real:.17g} {rho[i, j].imag:.17g}"
                           for j in range(d)))
        buf.write("\n")
    Path(path).write_text(buf.getvalue(), encoding="ascii")


def load_density_matrix(path: str | Path) -> tuple[np.ndarray, LoadReport]:
    lines = Path(path).read_text(encoding="ascii").splitlines()
    header: dict[str, int] = {}
    rows: list[list[float]] = []
    for line in lines:
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key = line.split()[0]
        if key in ("dmfile", "dim", "qubits"):
            try:
                header[key] = int(line.split()[1])
            except (IndexError, ValueError):
                raise StateFileError(f"bad header line {line!r}") from None
        else:
            try:
                rows.append([float(x) for x in line.split()])
            except ValueError:
                raise StateFileError(f"bad matrix line {line!r}") from None

    for key in ("dmfile", "dim", "qubits"):
        if key not in header:
            raise StateFileError(f"missing header field {key!r}")
    if header["dmfile"] != FORMAT_VERSION:
        raise StateFileError(f"unsupported format version {header['dmfile']}")
    d = header["dim"]
    if 2 ** header["qubits"] != d:
        raise StateFileError("dim and qubit count disagree")
    if len(rows) != d or any(len(r) != 2 * d for r in rows):
        raise StateFileError(f"expected {d} rows of {2 * d} numbers")

    flat = np.array(rows, dtype=float)
    rho = flat[:, 0::2] + 1j * flat[:, 1::2]

    report = LoadReport()
    herm = np.max(np.abs(rho - rho.conj().T))
    if herm > HERMITIAN_TOL:
        raise StateFileError(f"matrix is not Hermitian (deviation {herm:.2e})")
    tr = np.trace(rho).real
    if abs(tr - 1.0) > TRACE_TOL:
        raise StateFileError(f"trace {tr} deviates from 1 beyond tolerance")

    vals, vecs = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    report.min_eigenvalue = float(vals.min())
    if vals.min() < EIGEN_TOL:
        raise StateFileError(
            f"matrix has eigenvalue {vals.min():.3e} below {EIGEN_TOL}")
    if vals.min() < 0.0:
        report.clipped = True
        report.messages.append(
            f"clipped eigenvalues down to {vals.min():.3e} and renormalised")
        vals = np.clip(vals, 0.0, None)
        rho = (vecs * vals) @ vecs.conj().T
        rho = rho / np.trace(rho).real
    return rho, report
