"""Test suite for the HQRN package."""
