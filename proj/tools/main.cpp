#include "harness.hpp"

int main(int argc, char** argv) { return subtune::harness::main_entry(argc, argv); }
