"""foliadyn: leafwise Brownian motion, harmonic measures and Lyapunov
exponents of singular holomorphic foliations by Riemann surfaces."""

__version__ = "0.1.0"
