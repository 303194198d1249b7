"""
Configuración de logging a partir de la sección [logging] de config.ini
"""
import logging
import os

DEFAULT_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

_configured = False


def setup_logging(level: str = "INFO", fmt: str = DEFAULT_FORMAT, log_file: str = ""):
    """Configurar el logger raíz una sola vez por proceso"""
    global _configured
    root = logging.getLogger()
    if _configured:
        root.setLevel(level.upper())
        return root

    root.setLevel(level.upper())
    handler = logging.StreamHandler()
    handler.setFormatter(logging.Formatter(fmt))
    root.addHandler(handler)

    if log_file:
        folder = os.path.dirname(log_file)
        if folder:
            os.makedirs(folder, exist_ok=True)
        file_handler = logging.FileHandler(log_file, encoding="utf-8")
        file_handler.setFormatter(logging.Formatter(fmt))
        root.addHandler(file_handler)

    # httpx es muy verboso en INFO
    logging.getLogger("httpx").setLevel(logging.WARNING)
    _configured = True
    return root
