"""Edge-offloaded MPC for a quadrotor, closed over a simulated network link."""

__version__ = "0.1.0"
