"""Pausing the cyclic garbage collector around large explorations.

State spaces allocate hundreds of thousands of long-lived acyclic objects,
which makes the generational collector rescan them over and over.
"""

from __future__ import annotations

import functools
import gc


def gc_paused(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        was = gc.isenabled()
        gc.disable()
        try:
            return fn(*args, **kwargs)
        finally:
            if was:
                gc.enable()

    return wrapper
