"""DEVI: a hardware-free robot receptionist intelligence core.

The package splits into pure decision-making modules (proximity, face,
chat, motion, orchestrator), durable state (people), the wire codec
(link), and a deterministic world simulation with a live HTTP console
(sim).
"""

__version__ = "0.1.0"

from devi import chat, face, link, motion, people, proximity  # noqa: F401
