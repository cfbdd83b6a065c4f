"""Math helpers that work on floats, arrays and taped values alike."""
import numpy as np

sin = np.sin
cos = np.cos
tan = np.tan
exp = np.exp
log = np.log
sqrt = np.sqrt


def smooth_max(a, b, eps=1e-6):
    """max(a, b) rounded off over a width of about ``eps``."""
    d = a - b
    return 0.5 * (a + b + sqrt(d * d + eps * eps))


def smooth_min(a, b, eps=1e-6):
    d = a - b
    return 0.5 * (a + b - sqrt(d * d + eps * eps))


def smooth_abs(a, eps=1e-6):
    return sqrt(a * a + eps * eps)
