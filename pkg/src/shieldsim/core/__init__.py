"""Simulation, attack and evaluation logic; the CLI is a thin layer on top."""
