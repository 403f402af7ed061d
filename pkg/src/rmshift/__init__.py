"""Semiparametric shift estimation for periodic shape-invariant models."""
