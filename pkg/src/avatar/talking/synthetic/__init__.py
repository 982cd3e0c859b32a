"""Synthetic talking avatars: renderer, speech features and corpus builder."""
