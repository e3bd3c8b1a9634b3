#include "dpc/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return dpc::cli::dispatch(std::move(args));
}
