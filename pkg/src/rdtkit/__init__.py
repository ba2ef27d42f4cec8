"""Read-disturbance threshold variation toolkit.

Modules: ``devsim`` (synthetic device), ``profiler`` (RDT testing and
statistics), ``errmodel`` (bitflip process under ECC and scrubbing),
``montecarlo`` (ensembles and MTTUE), ``svard`` (per-row thresholds and
mitigation overhead proxies), ``cli`` (command-line runs and artifacts).
"""

__version__ = "0.1.0"
