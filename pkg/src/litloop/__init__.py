"""litloop: literature screening, consensus extraction, model fitting and
reporting with a persistent human review loop."""

__version__ = "0.1.0"
