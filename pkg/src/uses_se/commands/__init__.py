"""CLI commands for uses-se."""
