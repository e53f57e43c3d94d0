"""HTTP service wrapping the toolkit; see create_app.

Run locally with, for example:

    uvicorn --factory hawkesjump.service:create_app
"""

from .app import create_app

__all__ = ["create_app"]
