"""Two-stage stochastic unit commitment with rolling ex-post evaluation."""

__version__ = "0.1.0"
