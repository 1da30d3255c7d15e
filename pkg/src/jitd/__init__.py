"""Pick-up and just-in-time delivery dispatch."""
