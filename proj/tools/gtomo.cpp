#include <cstdio>

#include "gtomo/geodesic.hpp"

int main(int argc, char** argv) {
  (void)argc;
  (void)argv;
  std::puts("gtomo: subcommands not wired yet");
  return 0;
}
