#include <vector>

#include "adhoc/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return adhoc::run_cli(args);
}
