"""Session purchase-intent prediction with content-based item embeddings.

A deterministic float64 stack: a small recurrent-network kernel, a
category-supervised text-embedding component whose frozen vectors feed
LSTM purchase predictors (content-only, ID-only baseline, integrated),
evaluation metrics including the DeLong test, a seeded synthetic
clickstream generator, and the cold-start / random-removal experiment
harness.
"""

__version__ = "0.1.0"
