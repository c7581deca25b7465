"""Experiment orchestration: seeds, worker pool, experiments and the runner."""
