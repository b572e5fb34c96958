"""Cross-resonance characterization on simulated fixed-frequency transmons."""

__version__ = "0.1.0"
