from concurrent.futures import ProcessPoolExecutor


def pmap(fn, items, workers=1):
    """Ordered map; ``workers > 1`` fans out over processes."""
    items = list(items)
    if workers <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    chunk = max(1, len(items) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items, chunksize=chunk))
