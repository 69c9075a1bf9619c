#include <iostream>
using namespace std;

int main() {
    int n;
    cin >> n;
    long long sum = 0;
    for (int i = 0; i < n; ++i) {
        int v;
        cin >> v;
        sum += v;
    }
    cout << sum << endl;
    return 0;
}
