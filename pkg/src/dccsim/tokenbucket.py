"""Per-VM counting token bucket and the static rate-limiting shim.

Token state is kept in integer nanobytes (1e-9 bytes) so replenishment from
an integer-nanosecond clock stays exact: rate_bps * dt_ns / 8 nanobytes has
no float rounding anywhere on the packet path.
"""

NANO = 10 ** 9


class TokenBucket:
    """Counting token bucket with rate (bits/s) and depth (bytes).

    Tokens refill lazily from the elapsed time since the previous refill and
    are capped at the bucket depth. senttime records the last successful
    transmission and is the activity stamp used by inactivity timeouts.
    """

    __slots__ = ("rate_bps", "depth_nb", "tokens_nb", "last_refill", "senttime")

    def __init__(self, rate_bps: int, depth_bytes: int, now: int = 0, full: bool = True):
        self.rate_bps = int(rate_bps)
        self.depth_nb = depth_bytes * NANO
        self.tokens_nb = self.depth_nb if full else 0
        self.last_refill = now
        self.senttime = now

    @property
    def depth_bytes(self) -> float:
        return self.depth_nb / NANO

    @property
    def tokens_bytes(self) -> float:
        return self.tokens_nb / NANO

    @tokens_bytes.setter
    def tokens_bytes(self, value: float):
        self.tokens_nb = int(value * NANO)

    def set_depth_bytes(self, depth_bytes: int):
        self.depth_nb = depth_bytes * NANO
        if self.tokens_nb > self.depth_nb:
            self.tokens_nb = self.depth_nb

    def refill(self, now: int):
        dt = now - self.last_refill
        if dt > 0:
            self.tokens_nb = min(self.depth_nb, self.tokens_nb + self.rate_bps * dt // 8)
            self.last_refill = now

    def try_send(self, now: int, nbytes: int) -> bool:
        """Replenish, then consume nbytes of tokens if available."""
        self.refill(now)
        need = nbytes * NANO
        if self.tokens_nb >= need:
            self.tokens_nb -= need
            self.senttime = now
            return True
        return False


class StaticShim:
    """Fixed-rate per-VM limiter: the non-work-conserving reference setup.

    No congestion feedback; every VM keeps the configured static rate for
    the whole run. Excess traffic is dropped.
    """

    def __init__(self, loop, host, rate_bps: int, depth_bytes: int | None = None):
        self.loop = loop
        self.host = host
        self.rate_bps = rate_bps
        # Static reservations carry a generous burst allowance (10 ms of
        # tokens): without feedback there is nothing adaptive to smooth the
        # tenant's bursts, and a shallow bucket just converts them to loss.
        self.depth_bytes = depth_bytes if depth_bytes is not None else max(
            3000, rate_bps // 8 // 100)
        self.buckets = {}

    def egress(self, pkt) -> bool:
        b = self.buckets.get(pkt.src)
        if b is None:
            b = self.buckets[pkt.src] = TokenBucket(
                self.rate_bps, self.depth_bytes, self.loop.now)
        return b.try_send(self.loop.now, pkt.header_len + pkt.payload_len)

    def ingress(self, pkt):
        return pkt
