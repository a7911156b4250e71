#include <cstdio>

#include "crfgen/version.hpp"

int main() {
  std::puts(crfgen::kVersion);
  return 0;
}
