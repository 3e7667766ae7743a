"""Simulation and invariance/Lyapunov certification for inclusions x' in F(x) - A(x)."""
__version__ = "0.1.0"
