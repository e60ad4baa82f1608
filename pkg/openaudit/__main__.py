"""
openaudit/__main__.py — Entry point for `python -m openaudit`.

Allows OpenAudit to be run as a Python module:
    python -m openaudit run runs/2026-01
"""

from openaudit.cli import main

if __name__ == "__main__":
    main()
