# CLI module for nikolskii-lb
