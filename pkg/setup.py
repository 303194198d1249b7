import os
import sys
import configparser
from cx_Freeze import setup, Executable

# El análisis de dependencias de cx_Freeze (scipy/pandas) excede el límite por defecto
sys.setrecursionlimit(10000)

# ---------- Utilidades ----------
def read_cfg():
    cfg = configparser.ConfigParser(interpolation=None)
    cfg.read("config.ini", encoding="utf-8")
    return cfg

# ---------- Metadatos desde config.ini ----------
cfg = read_cfg()
APP_NAME    = cfg.get("application", "name",    fallback="FhirMap")
APP_VERSION = cfg.get("application", "version", fallback="1.0.0")
COMPANY     = cfg.get("application", "company", fallback="FhirMap Contributors")

# ---------- Archivos/carpetas a incluir ----------
include_files = [
    ("database/", "database/"),
    ("modules/", "modules/"),
    ("auth/", "auth/"),
    ("ui/", "ui/"),
    ("utils/", "utils/"),
    ("config.ini", "config.ini"),
]

# Corpus y diccionarios de muestra, si existen
if os.path.isdir("tests/fixtures"):
    include_files.append(("tests/fixtures/", "tests/fixtures/"))

# ---------- Opciones de compilación ----------
build_exe_options = {
    "packages": [
        "sqlite3",
        "numpy",
        "httpx",
        "langchain_text_splitters",
        "backoff",
        "typer",
        "matplotlib",
        "configparser",
        "json",
        "csv",
        "threading",
        "os",
        "sys",
    ],
    "excludes": ["tkinter", "unittest", "pdb", "doctest", "test",
                 # dependencias opcionales de terceros que el código no importa
                 "tensorflow", "torch", "torchvision", "transformers",
                 "sentence_transformers"],
    "include_files": include_files,
    "optimize": 2,
    "include_msvcr": True,  # runtime VC++ en Windows
}

# Aplicación de consola: sin base Win32GUI
executables = [
    Executable(
        "main.py",
        base=None,
        target_name="fhirmap.exe" if sys.platform == "win32" else "fhirmap",
    ),
]

setup(
    name=APP_NAME,
    version=APP_VERSION,
    description="Mapeo de diccionarios de datos clínicos a HL7 FHIR con recuperación aumentada",
    author=COMPANY,
    options={
        "build_exe": build_exe_options,
    },
    executables=executables,
)
