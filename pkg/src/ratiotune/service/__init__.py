"""HTTP front end: pydantic schemas, request handlers and the FastAPI app."""

from . import handlers, schemas

__all__ = ["handlers", "schemas"]
