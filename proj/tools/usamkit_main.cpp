#include <string>
#include <vector>

#include "usamkit/cli.hpp"

int main(int argc, char** argv) {
  return usamkit::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
