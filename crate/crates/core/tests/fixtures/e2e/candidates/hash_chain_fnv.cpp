#include <cstdio>

static unsigned long long chain(unsigned long long x, long n) {
    for (long i = 0; i < n; ++i) {
        x = (x ^ (unsigned long long)(i & 255)) * 1099511628211ULL;
    }
    return x;
}

int main() {
    long n;
    unsigned long long seed;
    if (scanf("%ld %llu", &n, &seed) != 2) return 1;
    printf("%llu\n", chain(seed, n));
    return 0;
}
