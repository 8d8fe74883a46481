# tools/__init__.py — OneDF v1 data, metrics, artifacts and study runner
