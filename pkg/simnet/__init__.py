"""Deterministic network simulation, Byzantine fault injection and trace checking."""
