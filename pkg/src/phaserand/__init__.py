"""Certified key rates for decoy-state BB84 with imperfect phase randomisation."""
