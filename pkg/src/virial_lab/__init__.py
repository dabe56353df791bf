"""Numerical laboratory for classical and quantum virial identities."""

__version__ = "0.1.0"

from . import errors, integrators, ktrig, quantum, systems, virial  # noqa: E402

__all__ = ["errors", "integrators", "ktrig", "quantum", "systems", "virial", "__version__"]
