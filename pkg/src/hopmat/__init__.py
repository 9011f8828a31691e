"""Simulation suite for a one-legged hopper whose leg is a lumped spring chain."""

__version__ = "0.1.0"
