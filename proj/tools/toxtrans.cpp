#include <iostream>
#include <string>
#include <vector>

#include "toxtrans/platform/cli.hpp"

int main(int argc, char** argv) {
  return toxtrans::platform::run_cli(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
