"""Reward guidance for analytic generative flows via two-time flow maps."""
