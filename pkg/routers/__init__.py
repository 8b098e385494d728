"""typer command groups mounted by main.py."""
