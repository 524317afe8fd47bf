"""Simulation loop, configuration, metrics, sweeps and CLI."""
