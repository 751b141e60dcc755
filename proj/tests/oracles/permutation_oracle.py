"""Reference seeded permutation: MT19937-64 written out from its published
recurrence, Fisher-Yates from the back, rejection-sampled bounded draws."""
import json
import sys

M64 = (1 << 64) - 1


class MT19937_64:
    n, m = 312, 156
    upper, lower = 0xFFFFFFFF80000000, 0x7FFFFFFF

    def __init__(self, seed):
        self.mt = [seed & M64]
        for i in range(1, self.n):
            prev = self.mt[-1]
            self.mt.append((6364136223846793005 * (prev ^ (prev >> 62)) + i) & M64)
        self.index = self.n

    def _twist(self):
        mt = self.mt
        for i in range(self.n):
            x = (mt[i] & self.upper) | (mt[(i + 1) % self.n] & self.lower)
            xa = x >> 1
            if x & 1:
                xa ^= 0xB5026F5AA96619E9
            mt[i] = mt[(i + self.m) % self.n] ^ xa
        self.index = 0

    def __call__(self):
        if self.index >= self.n:
            self._twist()
        y = self.mt[self.index]
        self.index += 1
        y ^= (y >> 29) & 0x5555555555555555
        y ^= (y << 17) & 0x71D67FFFEDA60000
        y ^= (y << 37) & 0xFFF7EEE000000000
        y ^= y >> 43
        return y & M64


def bounded(rng, bound):
    if bound == 0:
        return 0
    rng_range = bound + 1
    limit = M64 - M64 % rng_range
    while True:
        x = rng()
        if x < limit:
            return x % rng_range


def permutation(n, seed):
    perm = list(range(n))
    rng = MT19937_64(seed)
    for i in range(n, 1, -1):
        j = bounded(rng, i - 1)
        perm[i - 1], perm[j] = perm[j], perm[i - 1]
    return perm


if __name__ == "__main__":
    check = MT19937_64(5489)
    for _ in range(9999):
        check()
    assert check() == 9981545732273789042
    cases = [(10, 0), (10, 7), (25, 123456789)]
    json.dump({f"{n}:{s}": permutation(n, s) for n, s in cases}, sys.stdout)
    print()
