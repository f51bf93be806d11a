#include <string>
#include <vector>

#include "pessilab/harness.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return pessilab::run_cli(args);
}
