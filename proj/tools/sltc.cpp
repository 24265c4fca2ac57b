#include <cstdio>

int main() {
  std::puts("sltc: subcommands not wired up yet");
  return 1;
}
