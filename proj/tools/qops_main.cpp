#include "qops/cli.hpp"

int main(int argc, char** argv) {
  return qops::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
