"""Disease-progression analytics over longitudinal visit records.

Learns hidden-Markov progression states from visit sequences, decodes
per-visit labels and posteriors, and serves the aggregations behind the
companion UI: pathway layouts, transition summaries, frequent transition
patterns, outcome densities, and temporal cohort queries.
"""

__version__ = "0.1.0"
