"""synthjudge: judging, consensus voting, and dual-verification for
synthetic competitive-programming tasks, plus the distributed plumbing
(broker, gateway, workers) to run it at scale.
"""

__version__ = "0.1.0"
