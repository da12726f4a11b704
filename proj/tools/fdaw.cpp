#include "fdaw/cli.hpp"

int main(int argc, char** argv) { return fdaw::run(argc, argv); }
