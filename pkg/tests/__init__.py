"""Test suite for the memory engine."""
