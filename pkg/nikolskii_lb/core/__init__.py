# Core numerics for nikolskii-lb
