"""AKI risk prediction from first-day ICU data fused with drug ECFP fingerprints."""
__version__ = "0.1.0"
