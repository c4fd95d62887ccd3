#include <cstdio>

int main() {
  std::puts("kdyn: command set under construction");
  return 2;
}
