#include <string>
#include <vector>

#include "fetalpose/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return fetalpose::run_cli(args);
}
