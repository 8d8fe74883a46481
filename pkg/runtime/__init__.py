# runtime/__init__.py — OneDF v1 configuration and training state
