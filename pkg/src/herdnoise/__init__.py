"""Power-law SDEs, a three-state herding market model with exogenous noise,
and the estimators used to study their PDFs, spectra and return intervals."""

__version__ = "0.1.0"
