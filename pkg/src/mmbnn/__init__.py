"""Multi-modal Bayesian neural network surrogates with conjugate last layers."""

__version__ = "0.1.0"
