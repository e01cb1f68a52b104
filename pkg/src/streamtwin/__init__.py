"""Digital-twin-assisted adaptive video streaming simulator and DDPG harness."""

__version__ = "0.1.0"
