"""Handover control on synthetic 5G NR traces: an Event-A3 baseline and a PPO agent."""

__version__ = "0.1.0"
