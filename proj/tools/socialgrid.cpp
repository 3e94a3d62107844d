#include "socialgrid/cli.hpp"

int main(int argc, char** argv) { return socialgrid::cli_dispatch(argc, argv); }
