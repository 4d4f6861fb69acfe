"""Supervised hierarchical clustering with learned dissimilarities and exponential linkage."""
