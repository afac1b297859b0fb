"""Feature, training, evaluation and data services."""
