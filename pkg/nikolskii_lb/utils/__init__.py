# Utility modules for nikolskii-lb
