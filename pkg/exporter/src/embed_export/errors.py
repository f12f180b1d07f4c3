class ExportError(Exception):
    """Any failure that should abort the export with exit code 1."""
