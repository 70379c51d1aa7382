"""
Dependencies for FastAPI routes.
"""
