import os


def fft_workers() -> int:
    """Worker count for scipy.fft, from CHEB_MATFUN_THREADS (0 = auto)."""
    raw = os.environ.get("CHEB_MATFUN_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        n = 0
    return -1 if n <= 0 else n
