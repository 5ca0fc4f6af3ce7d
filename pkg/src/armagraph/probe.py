"""Empirical frequency-response measurement of arbitrary filter stacks.

Projects a single-channel signal and a filter's output onto the operator
eigenbasis and reports the per-component output/input coefficient ratio.
Components whose input coefficient is below threshold are flagged invalid
instead of producing spikes from near-zero division; a report never
contains a non-finite value.
"""

import csv
from dataclasses import dataclass

import numpy as np

from armagraph.sparse import CsrMatrix, SpectralDecomposition, as_dense, symmetric_eig

RELATIVE_COEFF_THRESHOLD = 1e-8


@dataclass
class ResponseReport:
    eigenvalues: np.ndarray
    input_coefficients: np.ndarray
    output_coefficients: np.ndarray
    empirical_response: np.ndarray
    valid: np.ndarray


def _as_signal(x) -> np.ndarray:
    x = as_dense(x)
    if x.shape[1] != 1:
        raise ValueError(f"probe signals are single-channel, got shape {x.shape}")
    return x


def empirical_response(
    decomp: SpectralDecomposition, x, x_bar, threshold: float | None = None
) -> ResponseReport:
    """Per-component ratio (u_m . x_bar) / (u_m . x) over the eigenbasis.

    ``threshold`` defaults to 1e-8 * ||x||_2; components below it are
    masked invalid with a response of 0 rather than extrapolated.
    """
    x = _as_signal(x)
    x_bar = _as_signal(x_bar)
    n = decomp.eigenvectors.shape[0]
    if x.shape[0] != n or x_bar.shape[0] != n:
        raise ValueError("signal length does not match the decomposition")
    if threshold is None:
        threshold = RELATIVE_COEFF_THRESHOLD * float(np.linalg.norm(x))
    in_coeff = (decomp.eigenvectors.T @ x)[:, 0]
    out_coeff = (decomp.eigenvectors.T @ x_bar)[:, 0]
    # strict comparison so a zero signal (threshold 0) masks everything
    # instead of dividing by zero
    valid = np.abs(in_coeff) > threshold
    response = np.zeros(n)
    response[valid] = out_coeff[valid] / in_coeff[valid]
    return ResponseReport(decomp.eigenvalues.copy(), in_coeff, out_coeff, response, valid)


def gcn_linear_response(lam, depth: int):
    """(1 - lambda)^depth: the linear response of a depth-T self-loop-free stack.

    For gamma-augmented operators, probe against the operator's own
    spectrum instead and raise its eigenvalues to the depth.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    return (1.0 - np.asarray(lam, dtype=np.float64)) ** depth


def probe_stack(
    filter_fn, operator: CsrMatrix, x, threshold: float | None = None
) -> list[ResponseReport]:
    """One ResponseReport per depth of a stack.

    ``filter_fn`` maps the single-channel signal to the list of per-depth
    outputs (evaluation mode: no dropout); responses are measured on the
    eigenbasis of ``operator``.
    """
    x = _as_signal(x)
    decomp = symmetric_eig(operator.to_dense())
    return [empirical_response(decomp, x, out, threshold) for out in filter_fn(x)]


def reconstruct(decomp: SpectralDecomposition, x) -> np.ndarray:
    """Round-trip x through the eigenbasis (sanity check for the projection)."""
    x = _as_signal(x)
    return decomp.eigenvectors @ (decomp.eigenvectors.T @ x)


def write_report_csv(report: ResponseReport, path, analytic=None):
    """Columns: lambda, mu, in_coeff, out_coeff, h_emp, valid [, h_analytic]."""
    header = ["lambda", "mu", "in_coeff", "out_coeff", "h_emp", "valid"]
    if analytic is not None:
        analytic = np.asarray(analytic, dtype=np.float64)
        header.append("h_analytic")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for m in range(len(report.eigenvalues)):
            lam = float(report.eigenvalues[m])
            row = [
                repr(lam),
                repr(1.0 - lam),
                repr(float(report.input_coefficients[m])),
                repr(float(report.output_coefficients[m])),
                repr(float(report.empirical_response[m])),
                int(report.valid[m]),
            ]
            if analytic is not None:
                row.append(repr(float(analytic[m])))
            writer.writerow(row)
