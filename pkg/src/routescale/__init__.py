"""Multi-task neural vehicle routing at desk scale: instances, environment,
transformer policy, training, evaluation and power-law scaling fits."""

__version__ = "0.1.0"
