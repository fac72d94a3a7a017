"""HTTP service exposing the estimation toolkit."""
