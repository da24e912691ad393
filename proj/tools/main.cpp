#include <cstdio>

int main() {
  std::puts("resplat: CLI under construction");
  return 0;
}
