"""Weak solutions of nonlocal Dirichlet problems for symmetric Lévy measures."""

__version__ = "0.1.0"
