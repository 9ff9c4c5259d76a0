class ExportError(Exception):
    """Any exporter failure a caller can act on."""
