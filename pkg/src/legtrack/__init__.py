"""Leg joint trajectory reconstruction from fused IMU and camera-marker data."""

__version__ = "0.1.0"
