"""Sphere systems in the doubled handlebody, surgery paths, and the
Masur-Minsky projection checks that make them quasi-geodesics."""

__version__ = "0.1.0"
