#include <iostream>
#include <string>
#include <vector>

#include "mopflow/pipeline.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return mopflow::dispatch(args, std::cout, std::cerr);
}
