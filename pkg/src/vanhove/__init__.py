"""Projection-operator and weak-coupling-limit numerics for finite open quantum systems."""
