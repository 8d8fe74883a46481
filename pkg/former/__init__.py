# former/__init__.py — OneDF v1 model core package
