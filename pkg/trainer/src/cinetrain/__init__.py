"""Desk-scale trainer for the spatiotemporal CNN denoiser.

Consumes CPLX image containers produced by the reconstruction toolkit's
CLI, trains the five-layer 3-D CNN with per-step spectral normalization,
and exports PNPD weight files (plus a manifest and a loss trace) that the
runtime loads and certifies.
"""

__version__ = "0.1.0"
