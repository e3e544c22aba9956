// SPDX-License-Identifier: Apache-2.0
#include <groundrec/cli.hpp>

int main(int argc, char** argv)
{
    return groundrec::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}
