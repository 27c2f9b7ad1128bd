"""Numerics for hyperbolic flows on flat tori: basic sets, order graphs,
energy functions, cotangent escape estimates, transfer-operator resonance
computation, and the associated chain complexes."""

__version__ = "0.1.0"
