"""Mean-field simulator for a two-photon driven, dissipative Bose-Hubbard lattice.

Modules: ``fock`` (truncated Fock space), ``lindblad`` (single-site
generator), ``steadystate`` (self-consistent fixed points), ``stability``
(excitation spectra), ``dynamics`` (time evolution), ``observables``,
``sweep`` (phase diagrams and critical fits) and ``cli``.
"""

__version__ = "0.1.0"

from .lindblad import BAND_BOTTOM, FIXED, ModelParams  # noqa: E402

__all__ = ["ModelParams", "FIXED", "BAND_BOTTOM", "__version__"]
