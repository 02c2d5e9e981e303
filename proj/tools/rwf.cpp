#include "rwf/toolkit.hpp"

int main(int argc, char** argv) { return rwf::run_cli(argc, argv); }
