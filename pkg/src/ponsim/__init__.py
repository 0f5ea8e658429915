"""Discrete-event simulator for PON-based edge computing: topology, hybrid VM/container
execution, container placement and broker task offloading."""

__version__ = "0.1.0"
