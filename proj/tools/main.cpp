#include <vector>
#include <string>

#include "cropnet/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return cropnet::cli::run(std::move(args));
}
