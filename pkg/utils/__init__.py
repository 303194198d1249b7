# Hace sea un paquete Python
