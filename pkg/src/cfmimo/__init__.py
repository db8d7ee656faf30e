"""System-level simulator for cell-free massive MIMO on a sectorized hexagonal
grid, with multi-stream UEs and energy-aware TRP switch-off."""

__version__ = "0.1.0"
