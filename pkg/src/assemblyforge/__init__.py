"""Multi-robot assembly planning: transport teaming, staging layout,
schedule construction, task allocation, and simulated execution."""

__version__ = "0.1.0"
