"""Worker-pool knob shared by all modules.

Work is always split into the same fixed-size chunks regardless of the
thread count, and each chunk writes to disjoint output slots, so results
are bit-identical for any number of workers.
"""
from concurrent.futures import ThreadPoolExecutor

_num_threads = 1

DEFAULT_CHUNK = 8192


def set_threads(n: int) -> None:
    global _num_threads
    if n < 1:
        raise ValueError("thread count must be >= 1")
    _num_threads = int(n)


def get_threads() -> int:
    return _num_threads


def chunk_ranges(n_items: int, chunk: int = DEFAULT_CHUNK):
    return [(s, min(s + chunk, n_items)) for s in range(0, n_items, chunk)]


def run_chunked(fn, n_items: int, chunk: int = DEFAULT_CHUNK) -> None:
    """Call fn(start, end) over fixed chunks, possibly from worker threads.

    fn must only write to slots [start, end) of preallocated outputs.
    """
    ranges = chunk_ranges(n_items, chunk)
    if _num_threads == 1 or len(ranges) <= 1:
        for s, e in ranges:
            fn(s, e)
        return
    with ThreadPoolExecutor(max_workers=_num_threads) as pool:
        futures = [pool.submit(fn, s, e) for s, e in ranges]
        for f in futures:
            f.result()
