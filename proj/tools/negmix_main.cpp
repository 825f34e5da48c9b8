#include "negmix/cli.hpp"

int main(int argc, char** argv) { return negmix::run(argc, argv); }
