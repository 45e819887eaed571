"""Kelvin-Voigt body with inertia, unilateral adhesive contact and
irreversible delamination, solved through Yosida-regularized constraints."""

__version__ = "0.1.0"
