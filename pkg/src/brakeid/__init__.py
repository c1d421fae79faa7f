"""Tandem-network inverse design of brake seal grooves, at desk scale.

Stages: analytic data generation (:mod:`~brakeid.geometry`,
:mod:`~brakeid.oracle`, :mod:`~brakeid.dataset`), forward surrogates
(:mod:`~brakeid.predict`), tandem inverse networks (:mod:`~brakeid.inverse`)
and iterative baselines (:mod:`~brakeid.baseline`).
"""

__version__ = "0.1.0"
