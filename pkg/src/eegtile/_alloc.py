"""glibc allocator tuning for the training hot loop.

The conv layers allocate ~100 MB column matrices per step; with glibc's
default mmap threshold every step pays first-touch page faults for them.
Keeping freed blocks on the heap roughly halves step time. No effect on
results, only speed; silently a no-op off glibc.
"""
import ctypes

_done = False

_M_TRIM_THRESHOLD = -1
_M_MMAP_MAX = -4


def tune_for_large_buffers():
    global _done
    if _done:
        return
    _done = True
    try:
        libc = ctypes.CDLL("libc.so.6")
        libc.mallopt(_M_MMAP_MAX, 0)
        libc.mallopt(_M_TRIM_THRESHOLD, 2**31 - 1)
    except (OSError, AttributeError):
        pass
