"""Small-model training and serving service."""
