import math


def fmt(x: float) -> str:
    """Fixed 6-significant-digit text used by every serialized number."""
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "nan"
    s = f"{float(x):.6g}"
    return "0" if s == "-0" else s


def rounded(x: float) -> float:
    return float(fmt(x))
