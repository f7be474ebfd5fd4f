#include "msar/cli.hpp"

int main(int argc, char** argv)
{
    return msar::run_cli(argc, argv);
}
