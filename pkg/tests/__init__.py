"""Tests for uses-se."""
