"""Tests for dag_rescore."""
