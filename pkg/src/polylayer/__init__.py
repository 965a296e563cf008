"""Eigenvalues below the essential spectrum of bent waveguides and layers.

Bent domains are pulled back to a straight reference domain, so one finite
element mesh serves every opening angle through the pencil
``K(theta) = K0 + cos(theta) R``.
"""
from .errors import DomainError, GeometryError, MeshError, NumericalError, PolylayerError
from .geometry import ConeSpec, LayerSpec, TrihedralAngles, VGuideSpec
from .spectra import (Spectrum, solve_cone, solve_layer, solve_trihedral, solve_vguide,
                      threshold)

__version__ = "0.1.0"
