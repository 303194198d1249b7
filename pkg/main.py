#!/usr/bin/env python3
"""
Punto de entrada principal para FhirMap
"""
import sys
import os

# Agregar las rutas de los módulos al path
sys.path.append(os.path.dirname(os.path.abspath(__file__)))
sys.path.append(os.path.join(os.path.dirname(__file__), 'database'))
sys.path.append(os.path.join(os.path.dirname(__file__), 'auth'))
sys.path.append(os.path.join(os.path.dirname(__file__), 'modules'))
sys.path.append(os.path.join(os.path.dirname(__file__), 'ui'))

from ui.cli import app


class FhirMapApp:
    def __init__(self, argv=None):
        self.argv = list(sys.argv[1:] if argv is None else argv)

    def run(self):
        """Ejecutar la aplicación (el código de salida lo fija cada subcomando)"""
        app(args=self.argv, prog_name="fhirmap")


if __name__ == "__main__":
    FhirMapApp().run()
