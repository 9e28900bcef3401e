#include <string>
#include <vector>

#include "specdyn/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return specdyn::cli::dispatch(args);
}
