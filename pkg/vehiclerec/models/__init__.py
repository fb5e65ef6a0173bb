"""
All of the files in the models/ directory define rankers: the sequential auction recommender,
its baselines, and the next-best-offer classifier with its heuristic baselines.

models/base.py defines the Ranker interface and the shared tie-break rule. The remaining files
define one family of rankers each.
"""
