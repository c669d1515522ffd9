"""Synthetic environments, sensor simulation, experiments and the CLI."""
