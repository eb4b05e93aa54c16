"""Desk-scale privacy-policy enforcement system: policies, zoned field units,
device enforcement with hardware fallback, cross-premise directory sync, and
a deterministic simulator that replays scenarios against them."""

__version__ = "0.1.0"
