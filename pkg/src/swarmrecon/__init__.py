"""Swarm behavior reconstruction lab: grid-world swarm scenarios, expert
training, demonstration pipelines, and imitation learners (adversarial and
supervised) with a reproducible evaluation harness."""

__version__ = "0.1.0"
