#include <cstdio>

int main() {
    long n;
    scanf("%ld", &n);
    long long total = 0;
    for (long i = 0; i < n; ++i) total += i * i % 7;
    printf("%lld\n", total);
    return 0;
}
