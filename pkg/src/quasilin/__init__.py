"""Lyapunov-Schmidt construction of quasi-periodic solutions of quasi-linear NLS on flat tori."""
__version__ = "0.1.0"
