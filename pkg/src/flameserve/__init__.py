"""Desk-scale serving framework for generative-recommendation scoring.

Pieces: an exact reference model with mask-aware parallel candidate scoring
(``flameserve.model``), a bucketed stale-while-revalidate feature cache
(``flameserve.cache``), an analytic host-to-device transfer cost model
(``flameserve.transfer``), a fixed-shape executor orchestrator
(``flameserve.orchestrator``), the request pipeline and HTTP wire layer
(``flameserve.service``, ``flameserve.api``), and a benchmark harness
(``flameserve.bench``).
"""

__version__ = "0.1.0"
