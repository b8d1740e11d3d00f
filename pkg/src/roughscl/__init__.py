"""Rough-path driven scalar conservation laws: lifts, flows, transformed finite-volume solves and bound audits."""

__version__ = "0.1.0"
