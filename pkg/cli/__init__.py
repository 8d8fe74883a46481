# cli/__init__.py — OneDF v1 command line package
