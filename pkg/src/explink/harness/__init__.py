"""Dataset IO, splits, synthetic generators, experiments and the command line."""
